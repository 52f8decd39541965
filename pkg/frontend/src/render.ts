/**
 * DOM rendering: one image with its seven control groups, keyboard
 * shortcuts, progress, and the stats table. All state lives in the
 * SessionController; this file only projects it into elements.
 */

import { AnswerState, SessionController } from "./session.js";
import { DEFECTS, choiceForKey, defectById } from "./levels.js";
import { ApiClient } from "./api.js";
import { formatStats } from "./stats.js";

function answerLabel(state: AnswerState, defectId: string): string {
  switch (state.kind) {
    case "submitted": {
      const spec = defectById(defectId);
      const choice = spec.levels.find((l) => l.value === state.level);
      return choice ? choice.label : String(state.level);
    }
    case "locked":
      return "already recorded";
    case "failed":
      return "failed, press to retry";
    case "inflight":
      return "...";
    default:
      return "";
  }
}

export function renderApp(
  root: HTMLElement,
  controller: SessionController,
  client: ApiClient,
): void {
  root.innerHTML = `
    <header>
      <h1>defect annotation</h1>
      <span id="progress"></span>
    </header>
    <main>
      <div id="image-pane"><img id="photo" alt="photo under annotation"/></div>
      <div id="controls"></div>
    </main>
    <section id="stats-pane">
      <h2>worker stats</h2>
      <table id="stats"><thead>
        <tr><th>worker</th><th>completed</th><th>accuracy</th></tr>
      </thead><tbody></tbody></table>
    </section>
  `;
  const photo = root.querySelector<HTMLImageElement>("#photo")!;
  const controls = root.querySelector<HTMLDivElement>("#controls")!;
  const progress = root.querySelector<HTMLSpanElement>("#progress")!;

  const redraw = (): void => {
    const snap = controller.snapshot();
    progress.textContent = snap.complete
      ? `all ${snap.totalImages} images annotated - thank you`
      : `image ${snap.answeredImages + 1} of ${snap.totalImages}`;
    const url = controller.imageUrl();
    if (url) photo.src = url;
    photo.style.display = url ? "block" : "none";

    controls.innerHTML = "";
    if (snap.imageId === null) {
      void refreshStats();
      return;
    }
    const active = controller.activeDefect();
    for (const spec of DEFECTS) {
      const group = document.createElement("fieldset");
      group.className = spec.id === active ? "defect active" : "defect";
      const legend = document.createElement("legend");
      legend.textContent = spec.title;
      group.appendChild(legend);
      const state = snap.answers[spec.id];
      for (const level of spec.levels) {
        const button = document.createElement("button");
        button.textContent = `${level.label} [${level.key}]`;
        button.disabled = state.kind === "submitted" || state.kind === "locked";
        if (state.kind === "submitted" && state.level === level.value) {
          button.classList.add("chosen");
        }
        button.addEventListener("click", () => {
          void controller.choose(spec.id, level.value);
        });
        group.appendChild(button);
      }
      const note = document.createElement("span");
      note.className = "note";
      note.textContent = answerLabel(state, spec.id);
      group.appendChild(note);
      controls.appendChild(group);
    }
  };

  const refreshStats = async (): Promise<void> => {
    const tbody = root.querySelector<HTMLTableSectionElement>("#stats tbody")!;
    try {
      const rows = formatStats(await client.getStats(), controller.snapshot().complete);
      tbody.innerHTML = rows
        .map(
          (r) =>
            `<tr><td>${r.worker}</td><td>${r.completed}</td><td>${r.accuracy}</td></tr>`,
        )
        .join("");
    } catch {
      tbody.innerHTML = `<tr><td colspan="3">service offline</td></tr>`;
    }
  };

  document.addEventListener("keydown", (event) => {
    const active = controller.activeDefect();
    if (!active) return;
    const choice = choiceForKey(defectById(active), event.key);
    if (choice) void controller.choose(active, choice.value);
  });

  controller.onChange(redraw);
  redraw();
  void refreshStats();
}

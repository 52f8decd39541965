import { describe, expect, it } from "vitest";

import { ApiClient, SubmitResult } from "../src/api";
import { SessionController } from "../src/session";
import { DEFECT_IDS } from "../src/levels";
import { formatStats } from "../src/stats";

class FakeClient extends ApiClient {
  submissions: Array<{ image: string; defect: string; level: number }> = [];
  failNext = 0;
  duplicateNext = 0;

  constructor(private images: string[]) {
    super("http://fake");
  }

  override async getSession(worker: string, size: number) {
    return {
      session_id: "s0",
      worker_id: worker,
      image_ids: this.images.slice(0, size),
    };
  }

  override async submitAnnotation(
    _session: string,
    imageId: string,
    defect: string,
    level: number,
  ): Promise<SubmitResult> {
    if (this.failNext > 0) {
      this.failNext -= 1;
      return { kind: "error", status: 500, code: "boom" };
    }
    if (this.duplicateNext > 0) {
      this.duplicateNext -= 1;
      return { kind: "already_annotated" };
    }
    this.submissions.push({ image: imageId, defect, level });
    return { kind: "ok" };
  }
}

async function annotateCurrentImage(controller: SessionController, level = 0.5) {
  for (const defect of DEFECT_IDS) {
    const value = defect === "saturation" ? -0.5 : level;
    await controller.choose(defect, value);
  }
}

describe("session controller", () => {
  it("advances only after all seven defects are answered", async () => {
    const client = new FakeClient(["a", "b", "c"]);
    const controller = new SessionController(client);
    await controller.start("w", 3);
    expect(controller.currentImage()).toBe("a");

    for (const defect of DEFECT_IDS.slice(0, 6)) {
      await controller.choose(defect, 0.0);
      expect(controller.currentImage()).toBe("a");
    }
    await controller.choose("composition", 1.0);
    expect(controller.currentImage()).toBe("b");
    expect(controller.snapshot().answeredImages).toBe(1);
  });

  it("keeps submitted answers immutable", async () => {
    const client = new FakeClient(["a"]);
    const controller = new SessionController(client);
    await controller.start("w", 1);
    await controller.choose("noise", 0.5);
    const again = await controller.choose("noise", 1.0);
    expect(again).toBeNull();
    expect(client.submissions.filter((s) => s.defect === "noise")).toHaveLength(1);
    expect(client.submissions[0].level).toBe(0.5);
  });

  it("posts every chosen level exactly once with the wire values", async () => {
    const client = new FakeClient(["a", "b"]);
    const controller = new SessionController(client);
    await controller.start("w", 2);
    await annotateCurrentImage(controller);
    expect(client.submissions).toHaveLength(7);
    const sat = client.submissions.find((s) => s.defect === "saturation");
    expect(sat?.level).toBe(-0.5);
  });

  it("marks failures for retry and locks on 409", async () => {
    const client = new FakeClient(["a"]);
    const controller = new SessionController(client);
    await controller.start("w", 1);

    client.failNext = 1;
    await controller.choose("haze", 0.5);
    expect(controller.snapshot().answers["haze"].kind).toBe("failed");
    await controller.choose("haze", 0.5); // retry succeeds
    expect(controller.snapshot().answers["haze"].kind).toBe("submitted");

    client.duplicateNext = 1;
    await controller.choose("blur", 1.0);
    expect(controller.snapshot().answers["blur"].kind).toBe("locked");
  });

  it("reports completion and progress", async () => {
    const client = new FakeClient(["a", "b"]);
    const controller = new SessionController(client);
    await controller.start("w", 2);
    expect(controller.snapshot().complete).toBe(false);
    await annotateCurrentImage(controller);
    await annotateCurrentImage(controller);
    const snap = controller.snapshot();
    expect(snap.complete).toBe(true);
    expect(snap.answeredImages).toBe(2);
    expect(controller.currentImage()).toBeNull();
  });

  it("activeDefect walks the defect list in order", async () => {
    const client = new FakeClient(["a"]);
    const controller = new SessionController(client);
    await controller.start("w", 1);
    expect(controller.activeDefect()).toBe("bad_exposure");
    await controller.choose("bad_exposure", 0.0);
    expect(controller.activeDefect()).toBe("bad_white_balance");
  });
});

describe("stats gating", () => {
  const payload = {
    workers: [
      {
        worker_id: "w",
        completed: 14,
        overall_accuracy: 1.0,
        sanity_total: 2,
        defects: {},
      },
    ],
  };

  it("hides accuracy mid-session", () => {
    const rows = formatStats(payload, false);
    expect(rows[0].accuracy).toContain("hidden");
    expect(rows[0].completed).toBe(14);
  });

  it("shows accuracy after session end", () => {
    const rows = formatStats(payload, true);
    expect(rows[0].accuracy).toBe("100%");
  });
});

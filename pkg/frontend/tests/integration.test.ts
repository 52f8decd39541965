/**
 * Scripted end-to-end session against a live annotation service:
 * a 20-image batch (2 sanity items) annotated through the UI's own
 * client and session layers, then exported and fed to the aggregation
 * pipeline. Asserts the computed worker accuracy equals the hand-counted
 * sanity match rate and that no payload the client consumed carried
 * sanity metadata.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ApiClient } from "../src/api";
import { SessionController } from "../src/session";
import { DEFECT_IDS, defectById } from "../src/levels";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const WORKER = "ui-tester";

let serverDir: string;
let server: ChildProcess | null = null;

// The scripted annotator always picks each defect's first level
// (0.0, or -1.0 for saturation); accuracy is then hand-countable from
// the sanity pool the test itself wrote.
const POLICY: Record<string, number> = Object.fromEntries(
  DEFECT_IDS.map((d) => [d, defectById(d).levels[0].value]),
);

const SANITY_POOL = [
  { image_id: "img00", defect: "noise", known_level: 0.0 }, // policy hit
  { image_id: "img01", defect: "noise", known_level: 1.0 }, // policy miss
  { image_id: "img02", defect: "blur", known_level: 0.0 }, // policy hit
  { image_id: "img03", defect: "saturation", known_level: 0.5 }, // policy miss
];

async function waitForServer(): Promise<void> {
  for (let i = 0; i < 120; i++) {
    try {
      const resp = await fetch(`${BASE}/api/stats`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error("annotation service did not come up");
}

beforeAll(async () => {
  serverDir = mkdtempSync(join(tmpdir(), "defectlab-ui-"));
  // 30 small images plus the sanity pool file.
  execFileSync("python3", [
    "-c",
    `
import json, os, sys
from defectlab.core import SeededRng
from defectlab.synth import generate_base_corpus

root = sys.argv[1]
refs = generate_base_corpus(os.path.join(root, "images"), 30, size=64, rng=SeededRng(3))
pool = json.loads(sys.argv[2])
with open(os.path.join(root, "sanity.jsonl"), "w") as fh:
    for item in pool:
        fh.write(json.dumps(item) + "\\n")
# rename refs to img00..img29 for stable ids
for i, ref in enumerate(refs):
    os.rename(ref.path, os.path.join(root, "images", f"img{i:02d}.png"))
`,
    serverDir,
    JSON.stringify(SANITY_POOL),
  ]);

  server = spawn(
    "python3",
    [
      "-m",
      "defectlab.cli",
      "serve",
      "--port",
      String(PORT),
      "--images",
      join(serverDir, "images"),
      "--sanity",
      join(serverDir, "sanity.jsonl"),
      "--store",
      join(serverDir, "store.jsonl"),
      "--seed",
      "11",
    ],
    { stdio: "ignore" },
  );
  await waitForServer();
}, 120_000);

afterAll(() => {
  server?.kill();
});

describe("scripted annotation session", () => {
  it("round-trips a 20-image batch into the aggregation pipeline", async () => {
    // Raw payload check: the session JSON must not carry sanity fields.
    const raw = await fetch(`${BASE}/api/session?worker=${WORKER}&size=20`);
    const rawText = await raw.text();
    expect(rawText).not.toMatch(/sanity/i);
    expect(rawText).not.toContain("known_level");

    const client = new ApiClient(BASE);
    const controller = new SessionController(client);
    await controller.start(WORKER, 20);

    const batch: string[] = [];
    while (controller.currentImage() !== null) {
      const imageId = controller.currentImage()!;
      batch.push(imageId);
      for (const defect of DEFECT_IDS) {
        const result = await controller.choose(defect, POLICY[defect]);
        expect(result).toEqual({ kind: "ok" });
      }
    }
    expect(batch).toHaveLength(20);
    expect(controller.snapshot().complete).toBe(true);

    // Exactly two sanity items in a 20-image batch at the 10% fraction.
    const sanityInBatch = SANITY_POOL.filter((s) => batch.includes(s.image_id));
    expect(sanityInBatch).toHaveLength(2);

    // Export parses and matches the submission count.
    const exportText = await (await fetch(`${BASE}/api/export`)).text();
    const lines = exportText.trim().split("\n");
    expect(lines).toHaveLength(20 * 7);
    for (const line of lines) {
      const record = JSON.parse(line);
      expect(record.worker_id).toBe(WORKER);
    }

    // Hand-counted accuracy: policy level vs known level per in-batch item.
    const hits = sanityInBatch.filter(
      (s) => POLICY[s.defect] === s.known_level,
    ).length;
    const expectedAccuracy = hits / sanityInBatch.length;

    const stats = await client.getStats();
    const worker = stats.workers.find((w) => w.worker_id === WORKER)!;
    expect(worker.completed).toBe(140);
    expect(worker.sanity_total).toBe(2);
    expect(worker.overall_accuracy).toBeCloseTo(expectedAccuracy, 12);

    // The aggregation pipeline consumes the store without error.
    const gtPath = join(serverDir, "gt.csv");
    execFileSync("python3", [
      "-m",
      "defectlab.cli",
      "aggregate",
      "--annotations",
      join(serverDir, "store.jsonl"),
      "--out",
      gtPath,
      "--min-annotators",
      "1",
    ]);
    const csv = readFileSync(gtPath, "utf-8").trim().split("\n");
    expect(csv[0]).toBe(
      "image_id,bad_exposure,bad_white_balance,saturation,noise,haze,blur,composition",
    );
    expect(csv).toHaveLength(1 + 20);
  }, 120_000);
});

/**
 * Read-only stats dashboard rows. Accuracy stays hidden until the local
 * session has ended so annotators cannot reverse-engineer which items
 * were sanity checks.
 */

import { StatsPayload } from "./api.js";

export interface StatsRow {
  worker: string;
  completed: number;
  accuracy: string; // formatted, or the hidden marker
}

export function formatStats(payload: StatsPayload, sessionEnded: boolean): StatsRow[] {
  return payload.workers.map((w) => {
    let accuracy = "hidden until session end";
    if (sessionEnded) {
      accuracy =
        w.overall_accuracy === null
          ? "no sanity items yet"
          : `${Math.round(w.overall_accuracy * 100)}%`;
    }
    return { worker: w.worker_id, completed: w.completed, accuracy };
  });
}

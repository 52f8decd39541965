/**
 * Annotation session state machine.
 *
 * One image is active at a time; it advances only after all seven
 * defects are answered. Submitted answers are immutable in the UI, and
 * each submission posts immediately.
 */

import { ApiClient, SubmitResult } from "./api.js";
import { DEFECT_IDS } from "./levels.js";

export type AnswerState =
  | { kind: "pending" }
  | { kind: "inflight" }
  | { kind: "submitted"; level: number }
  | { kind: "locked" } // server says already recorded
  | { kind: "failed"; level: number }; // retry affordance

export interface SessionSnapshot {
  imageIndex: number;
  imageId: string | null;
  totalImages: number;
  answeredImages: number;
  complete: boolean;
  answers: Record<string, AnswerState>;
}

export class SessionController {
  private sessionId = "";
  private imageIds: string[] = [];
  private index = 0;
  private answers: Map<string, Map<string, AnswerState>> = new Map();
  private listeners: Array<() => void> = [];

  constructor(private client: ApiClient) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l();
  }

  async start(worker: string, size: number): Promise<void> {
    const session = await this.client.getSession(worker, size);
    this.sessionId = session.session_id;
    this.imageIds = session.image_ids;
    this.index = 0;
    this.answers = new Map(
      this.imageIds.map((id) => [
        id,
        new Map(DEFECT_IDS.map((d) => [d, { kind: "pending" } as AnswerState])),
      ]),
    );
    this.notify();
  }

  get session(): string {
    return this.sessionId;
  }

  imageUrl(): string | null {
    const id = this.currentImage();
    return id === null ? null : this.client.imageUrl(id);
  }

  currentImage(): string | null {
    return this.index < this.imageIds.length ? this.imageIds[this.index] : null;
  }

  private answersFor(imageId: string): Map<string, AnswerState> {
    const map = this.answers.get(imageId);
    if (!map) throw new Error(`image ${imageId} not in session`);
    return map;
  }

  private imageComplete(imageId: string): boolean {
    return [...this.answersFor(imageId).values()].every(
      (a) => a.kind === "submitted" || a.kind === "locked",
    );
  }

  snapshot(): SessionSnapshot {
    const imageId = this.currentImage();
    const answered = this.imageIds.filter((id) => this.imageComplete(id)).length;
    const answers: Record<string, AnswerState> = {};
    if (imageId !== null) {
      for (const [defect, state] of this.answersFor(imageId)) answers[defect] = state;
    }
    return {
      imageIndex: this.index,
      imageId,
      totalImages: this.imageIds.length,
      answeredImages: answered,
      complete: this.imageIds.length > 0 && answered === this.imageIds.length,
      answers,
    };
  }

  /**
   * Submit one defect choice for the current image. Ignored when that
   * defect is already submitted (answers are immutable). Advances to the
   * next image once all seven defects are answered.
   */
  async choose(defect: string, level: number): Promise<SubmitResult | null> {
    const imageId = this.currentImage();
    if (imageId === null) return null;
    const states = this.answersFor(imageId);
    const current = states.get(defect);
    if (!current) throw new Error(`unknown defect ${defect}`);
    if (current.kind === "submitted" || current.kind === "locked" || current.kind === "inflight") {
      return null;
    }
    states.set(defect, { kind: "inflight" });
    this.notify();
    const result = await this.client.submitAnnotation(
      this.sessionId, imageId, defect, level,
    );
    if (result.kind === "ok") {
      states.set(defect, { kind: "submitted", level });
    } else if (result.kind === "already_annotated") {
      states.set(defect, { kind: "locked" });
    } else {
      states.set(defect, { kind: "failed", level });
    }
    if (this.imageComplete(imageId) && this.index < this.imageIds.length) {
      this.index += 1;
    }
    this.notify();
    return result;
  }

  /** First defect on the current image still awaiting an answer. */
  activeDefect(): string | null {
    const imageId = this.currentImage();
    if (imageId === null) return null;
    for (const defect of DEFECT_IDS) {
      const state = this.answersFor(imageId).get(defect)!;
      if (state.kind === "pending" || state.kind === "failed") return defect;
    }
    return null;
  }
}

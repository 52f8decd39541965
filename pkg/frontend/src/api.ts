/**
 * Thin typed client for the annotation service. The session payload the
 * server returns never contains sanity metadata; the assertSanitized
 * guard enforces that invariant on everything this client consumes.
 */

export interface SessionPayload {
  session_id: string;
  worker_id: string;
  image_ids: string[];
}

export interface WorkerStats {
  worker_id: string;
  completed: number;
  overall_accuracy: number | null;
  sanity_total: number;
  defects: Record<string, { accuracy: number; sanity_count: number }>;
}

export interface StatsPayload {
  workers: WorkerStats[];
}

export type SubmitResult =
  | { kind: "ok" }
  | { kind: "already_annotated" }
  | { kind: "error"; status: number; code: string };

const FORBIDDEN_FIELDS = ["is_sanity", "known_level", "sanity_ids"];

/** Throws if a payload object leaks sanity metadata to the client. */
export function assertSanitized(payload: unknown): void {
  const text = JSON.stringify(payload);
  for (const field of FORBIDDEN_FIELDS) {
    if (text.includes(`"${field}"`)) {
      throw new Error(`payload leaks sanity metadata: ${field}`);
    }
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetcher: typeof fetch = fetch,
  ) {}

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}`;
  }

  async getSession(worker: string, size: number): Promise<SessionPayload> {
    const resp = await this.fetcher(
      `${this.baseUrl}/api/session?worker=${encodeURIComponent(worker)}&size=${size}`,
    );
    if (!resp.ok) throw new Error(`session request failed: ${resp.status}`);
    const payload = (await resp.json()) as SessionPayload;
    assertSanitized(payload);
    return payload;
  }

  async submitAnnotation(
    session: string,
    imageId: string,
    defect: string,
    level: number,
  ): Promise<SubmitResult> {
    const resp = await this.fetcher(`${this.baseUrl}/api/annotations`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session, image_id: imageId, defect, level }),
    });
    if (resp.ok) {
      assertSanitized(await resp.json());
      return { kind: "ok" };
    }
    let code = "unknown";
    try {
      const body = (await resp.json()) as { detail?: { code?: string } };
      code = body.detail?.code ?? "unknown";
    } catch {
      // non-JSON error body; keep the generic code
    }
    if (resp.status === 409) return { kind: "already_annotated" };
    return { kind: "error", status: resp.status, code };
  }

  async getStats(): Promise<StatsPayload> {
    const resp = await this.fetcher(`${this.baseUrl}/api/stats`);
    if (!resp.ok) throw new Error(`stats request failed: ${resp.status}`);
    return (await resp.json()) as StatsPayload;
  }
}

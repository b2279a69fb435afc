/**
 * Typed client for the session service.
 *
 * The UI is a thin client: every number it displays comes out of these
 * responses, never from local computation. The fetch implementation is
 * injectable so the contract is testable without a server.
 */

export type Mode = "tl" | "cl";

export interface TrainConfigBody {
  learning_rate?: number;
  epochs_per_batch?: number;
  minibatch_size?: number;
  seed?: number;
  replay_schedule?: "sequential" | "mixed";
}

export interface BufferConfigBody {
  capacity?: number;
  policy?: "fifo" | "random";
  replace_fraction?: number;
  seed?: number;
  quota?: number;
}

export interface SessionRequest {
  mode: Mode;
  dim?: number;
  classes?: number;
  train_config?: TrainConfigBody;
  buffer_config?: BufferConfigBody;
}

export interface ImageSample {
  width: number;
  height: number;
  pixels_base64: string;
}

/** Exactly one of features / image. */
export interface Sample {
  features?: number[];
  image?: ImageSample;
}

export interface BufferState {
  occupancy: number;
  histogram: Record<string, number>;
}

export interface TrainEvent {
  kind: string;
  tag: string;
  samples_seen: number;
  epochs_run: number;
  final_loss: number | null;
  buffer_occupancy: number | null;
  duration_ms: number;
  buffer?: BufferState;
}

export interface Prediction {
  label: number;
  probs: number[];
}

export interface SessionState {
  mode: Mode;
  config: Record<string, unknown>;
  history: TrainEvent[];
  staged_counts: Record<string, number>;
  buffer?: BufferState;
}

export type TrainScope = { scope: "staged_all" } | { scope: "staged_class"; class: number };

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(public baseUrl: string = "", fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    if (!resp.ok) {
      let detail = text;
      try {
        detail = JSON.parse(text).detail ?? text;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, String(detail));
    }
    return JSON.parse(text) as T;
  }

  createSession(req: SessionRequest): Promise<{ id: string; config: Record<string, unknown> }> {
    return this.request("POST", "/sessions", req);
  }

  addSample(id: string, cls: number, sample: Sample): Promise<{ staged_counts: Record<string, number> }> {
    return this.request("POST", `/sessions/${id}/samples`, { class: cls, ...sample });
  }

  train(id: string, scope: TrainScope): Promise<TrainEvent> {
    return this.request("POST", `/sessions/${id}/train`, scope);
  }

  predict(id: string, sample: Sample): Promise<Prediction> {
    return this.request("POST", `/sessions/${id}/predict`, sample);
  }

  reset(id: string): Promise<{ ok: boolean }> {
    return this.request("POST", `/sessions/${id}/reset`, {});
  }

  state(id: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${id}/state`);
  }
}

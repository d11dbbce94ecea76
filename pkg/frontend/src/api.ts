/** Thin fetch wrapper for the analysis service.
 *
 * The transport is injectable so tests can drive the client with a fake
 * fetch; no statistics happen here, only request shaping and error
 * normalisation.
 */

import type {
  DagPayload,
  ErrorPayload,
  IdentifyPayload,
  IdentifyRequest,
  MatchPayload,
  MatchRequest,
  MonitorPayload,
  MonitorRequest,
  PositivityPayload,
  PositivityRequest,
  SchemaPayload,
} from "./types.js";

export interface FetchResponse {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<FetchResponse>;

/** Raised when the service answers with a non-2xx status. */
export class ServiceError extends Error {
  readonly status: number;
  readonly payload: ErrorPayload;

  constructor(status: number, payload: ErrorPayload) {
    super(payload.error);
    this.name = "ServiceError";
    this.status = status;
    this.payload = payload;
  }
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(base = "", fetchFn?: FetchLike) {
    this.base = base.replace(/\/$/, "");
    const fallback =
      typeof fetch === "function" ? (fetch as unknown as FetchLike) : null;
    const chosen = fetchFn ?? fallback;
    if (chosen === null) {
      throw new Error("no fetch implementation available");
    }
    this.fetchFn = chosen;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    const init: Parameters<FetchLike>[1] = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchFn(this.base + path, init);
    const parsed = (await resp.json()) as unknown;
    if (!resp.ok) {
      const err =
        parsed !== null && typeof parsed === "object"
          ? (parsed as ErrorPayload)
          : { error: `service returned status ${resp.status}` };
      throw new ServiceError(resp.status, err);
    }
    return parsed;
  }

  schema(): Promise<SchemaPayload> {
    return this.request("GET", "/schema") as Promise<SchemaPayload>;
  }

  dag(): Promise<DagPayload> {
    return this.request("GET", "/dag") as Promise<DagPayload>;
  }

  identify(req: IdentifyRequest): Promise<IdentifyPayload> {
    return this.request("POST", "/identify", req) as Promise<IdentifyPayload>;
  }

  positivity(req: PositivityRequest): Promise<PositivityPayload> {
    return this.request(
      "POST",
      "/positivity",
      req,
    ) as Promise<PositivityPayload>;
  }

  match(req: MatchRequest): Promise<MatchPayload> {
    return this.request("POST", "/match", req) as Promise<MatchPayload>;
  }

  monitor(req: MonitorRequest): Promise<MonitorPayload> {
    return this.request("POST", "/monitor", req) as Promise<MonitorPayload>;
  }
}

/**
 * Typed client for the fairstep session API. Thin by design: it parses
 * JSON, maps HTTP failures onto typed errors, and nothing else, so every
 * value that reaches the view layer is exactly what the server sent.
 */

import type {
  ActionDoc,
  CandidatesResponse,
  CommitResponse,
  DefaultsResponse,
  FormulaResponse,
  MetaResponse,
  SessionRequest,
  SessionResponse,
  TraceResponse,
  UndoResponse,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(status > 0 ? `HTTP ${status}: ${detail}` : detail);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

/** 409: the revision the client held is no longer current. */
export class StaleRevisionError extends ApiError {
  constructor(detail: string) {
    super(409, detail);
    this.name = "StaleRevisionError";
  }
}

/** 422: the server understood the request but refused it, with a reason. */
export class RejectedError extends ApiError {
  constructor(detail: string) {
    super(422, detail);
    this.name = "RejectedError";
  }
}

export class ApiClient {
  readonly baseUrl: string;
  private readonly fetchImpl: typeof fetch;
  /** fairstep-api header of the last response, for a mismatch badge. */
  apiVersion: string | null = null;

  constructor(baseUrl: string, fetchImpl: typeof fetch = fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(method: string, path: string, body?: object): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? {} : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `API unreachable: ${(err as Error).message}`);
    }
    this.apiVersion = response.headers.get("fairstep-api");
    if (!response.ok) {
      let detail = response.statusText || `status ${response.status}`;
      try {
        const doc = await response.json();
        if (typeof doc?.detail === "string") detail = doc.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      if (response.status === 409) throw new StaleRevisionError(detail);
      if (response.status === 422) throw new RejectedError(detail);
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  meta(): Promise<MetaResponse> {
    return this.request("GET", "/");
  }

  defaults(): Promise<DefaultsResponse> {
    return this.request("GET", "/defaults");
  }

  createSession(req: SessionRequest): Promise<SessionResponse> {
    return this.request("POST", "/sessions", req);
  }

  formula(sessionId: string): Promise<FormulaResponse> {
    return this.request("GET", `/sessions/${sessionId}/formula`);
  }

  candidates(sessionId: string): Promise<CandidatesResponse> {
    return this.request("GET", `/sessions/${sessionId}/candidates`);
  }

  commitStep(sessionId: string, action: ActionDoc, revision: number): Promise<CommitResponse> {
    return this.request("POST", `/sessions/${sessionId}/steps`, { action, revision });
  }

  undo(sessionId: string, revision: number): Promise<UndoResponse> {
    return this.request("POST", `/sessions/${sessionId}/undo`, { revision });
  }

  trace(sessionId: string): Promise<TraceResponse> {
    return this.request("GET", `/sessions/${sessionId}/trace`);
  }
}

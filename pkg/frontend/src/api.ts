// Thin fetch client over the service JSON API. Every state-changing user
// action in the UI maps to exactly one method here, and every method to
// exactly one request.

import type {
  EventView,
  FeedbackDoc,
  JoinResult,
  PairCreated,
  PairView,
  PanelDoc,
  PanelRole,
  PositionDoc,
  ReportDoc,
  Role,
  SessionView,
  VideoRegistered,
} from "./types";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly kind: string,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

async function asApiError(res: Response): Promise<ApiError> {
  let kind = "HttpError";
  let detail = `${res.status} ${res.statusText}`;
  try {
    const body = await res.json();
    if (body && typeof body.error === "string") kind = body.error;
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(res.status, kind, detail);
}

export interface ClientSession {
  pair_id: string;
  role: Role;
  token: string;
  active_consensus?: string;
}

export class ServiceClient {
  constructor(
    private readonly base: string,
    private token: string | null = null,
  ) {}

  useToken(token: string): void {
    this.token = token;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    params?: Record<string, string | number>,
  ): Promise<T> {
    const url = new URL(this.base + path);
    for (const [key, value] of Object.entries(params ?? {})) {
      url.searchParams.set(key, String(value));
    }
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const res = await fetch(url, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) throw await asApiError(res);
    return (await res.json()) as T;
  }

  // -- pairing --

  createPair(): Promise<PairCreated> {
    return this.request("POST", "/pairs");
  }

  join(code: string, role: Role, account: string): Promise<JoinResult> {
    return this.request("POST", `/pairs/${code}/join`, { role, account });
  }

  getPair(pairId: string): Promise<PairView> {
    return this.request("GET", `/pairs/${pairId}`);
  }

  getGuidelines(): Promise<unknown> {
    return this.request("GET", "/guidelines");
  }

  // -- panels --

  getPanel(pairId: string, role: PanelRole): Promise<PanelDoc> {
    return this.request("GET", `/pairs/${pairId}/panels/${role}`);
  }

  putPanel(pairId: string, role: Role, entries: Record<string, number>): Promise<PanelDoc> {
    return this.request("PUT", `/pairs/${pairId}/panels/${role}`, { entries });
  }

  panelFromVideos(
    pairId: string,
    role: Role,
    videos: Array<{ label: "suitable" | "unsuitable"; video_id?: string; scores?: Record<string, number> }>,
  ): Promise<PanelDoc> {
    return this.request("POST", `/pairs/${pairId}/panels/${role}/from-videos`, { videos });
  }

  // -- consensus --

  startConsensus(
    pairId: string,
    config?: { max_iterations?: number; session_timeout?: number },
  ): Promise<SessionView> {
    return this.request("POST", `/pairs/${pairId}/consensus`, config ? { config } : {});
  }

  getConsensus(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/consensus/${sessionId}`);
  }

  accept(sessionId: string): Promise<SessionView> {
    return this.request("POST", `/consensus/${sessionId}/respond`, { decision: "accept" });
  }

  modify(
    sessionId: string,
    modifications: Array<{ keyword: string; position: PositionDoc }>,
  ): Promise<SessionView> {
    return this.request("POST", `/consensus/${sessionId}/respond`, {
      decision: "modify",
      modifications,
    });
  }

  submitReason(sessionId: string, keyword: string, reason: string): Promise<SessionView> {
    return this.request("POST", `/consensus/${sessionId}/reasons`, { keyword, reason });
  }

  submitPosition(sessionId: string, keyword: string, position: PositionDoc): Promise<SessionView> {
    return this.request("POST", `/consensus/${sessionId}/positions`, { keyword, position });
  }

  advance(sessionId: string): Promise<SessionView> {
    return this.request("POST", `/consensus/${sessionId}/advance`);
  }

  // -- videos, feedback, reports --

  registerVideo(pairId: string, bundleRef: string, videoId?: string): Promise<VideoRegistered> {
    const body: Record<string, string> = { bundle_ref: bundleRef };
    if (videoId) body["video_id"] = videoId;
    return this.request("POST", `/pairs/${pairId}/videos`, body);
  }

  censor(videoId: string): Promise<Record<string, unknown>> {
    return this.request("POST", `/videos/${videoId}/censor`);
  }

  getFeedback(videoId: string): Promise<FeedbackDoc> {
    return this.request("GET", `/videos/${videoId}/feedback`);
  }

  getReport(pairId: string, fromMs: number, toMs: number, bucket?: number): Promise<ReportDoc> {
    const params: Record<string, number> = { from: fromMs, to: toMs };
    if (bucket !== undefined) params["bucket"] = bucket;
    return this.request("GET", `/pairs/${pairId}/reports`, undefined, params);
  }

  getEvents(pairId: string): Promise<{ events: EventView[] }> {
    return this.request("GET", `/pairs/${pairId}/events`);
  }
}

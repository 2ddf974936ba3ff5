// Typed client for the scene service. Every call is appended to a log so a
// session can be audited or replayed headlessly; the UI never computes any
// pixel itself.

export type SelectionMode = "soft" | "hard" | "hybrid";
export type EditOp = "extract" | "delete" | "recolor";

export interface PointPrompt {
  x: number;
  y: number;
}

export interface BoxPrompt {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface PromptRequest {
  labels?: string[];
  point?: PointPrompt;
  box?: BoxPrompt;
  pose?: number[];
  w?: number;
  h?: number;
  mode: SelectionMode;
  th: number;
}

export interface EditRequest extends PromptRequest {
  op: EditOp;
  color?: [number, number, number];
}

export interface PromptResponse {
  count: number;
  total: number;
  mask_png: string | null;
}

export interface CallRecord {
  method: "GET" | "POST";
  path: string;
  query?: Record<string, string>;
  body?: unknown;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

function queryString(params: Record<string, string>): string {
  const pairs = Object.entries(params).map(
    ([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(v)}`,
  );
  return pairs.length ? `?${pairs.join("&")}` : "";
}

export function poseParam(pose: number[]): string {
  if (pose.length !== 16) {
    throw new Error(`pose needs 16 scalars, got ${pose.length}`);
  }
  return pose.join(",");
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  readonly log: CallRecord[] = [];

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async get(path: string, query: Record<string, string>): Promise<Response> {
    this.log.push({ method: "GET", path, query });
    const res = await this.fetchFn(`${this.baseUrl}${path}${queryString(query)}`);
    if (!res.ok) {
      throw new ApiError(res.status, await describeError(res));
    }
    return res;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    this.log.push({ method: "POST", path, body });
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      throw new ApiError(res.status, await describeError(res));
    }
    return (await res.json()) as T;
  }

  renderUrl(pose: number[], w: number, h: number, bg?: string): string {
    const query: Record<string, string> = {
      pose: poseParam(pose),
      w: String(w),
      h: String(h),
    };
    if (bg) query.bg = bg;
    return `${this.baseUrl}/render${queryString(query)}`;
  }

  async render(pose: number[], w: number, h: number, bg?: string): Promise<Blob> {
    const query: Record<string, string> = {
      pose: poseParam(pose),
      w: String(w),
      h: String(h),
    };
    if (bg) query.bg = bg;
    const res = await this.get("/render", query);
    return res.blob();
  }

  async featureViz(pose: number[], w: number, h: number): Promise<Blob> {
    const res = await this.get("/feature_viz", {
      pose: poseParam(pose),
      w: String(w),
      h: String(h),
    });
    return res.blob();
  }

  async segmentation(pose: number[], w: number, h: number): Promise<Blob> {
    const res = await this.get("/segmentation", {
      pose: poseParam(pose),
      w: String(w),
      h: String(h),
    });
    return res.blob();
  }

  async labels(): Promise<{ labels: string[]; background_label: number | null }> {
    const res = await this.get("/labels", {});
    return (await res.json()) as { labels: string[]; background_label: number | null };
  }

  async orbit(theta: number, phi: number, radius: number): Promise<number[]> {
    const res = await this.get("/orbit", {
      theta: String(theta),
      phi: String(phi),
      r: String(radius),
    });
    const body = (await res.json()) as { pose: number[] };
    return body.pose;
  }

  async prompt(request: PromptRequest): Promise<PromptResponse> {
    return this.post<PromptResponse>("/prompt", request);
  }

  async edit(request: EditRequest): Promise<{ ok: boolean; selected: number; count: number }> {
    return this.post("/edit", request);
  }

  async undo(): Promise<{ ok: boolean; count: number }> {
    return this.post("/undo", {});
  }

  async save(path?: string): Promise<{ ok: boolean; path: string; count: number }> {
    return this.post("/save", path ? { path } : {});
  }
}

async function describeError(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { error?: string };
    return body.error ?? `HTTP ${res.status}`;
  } catch {
    return `HTTP ${res.status}`;
  }
}

// The mutating part of a session as a line-oriented edit script, the same
// format the command line accepts. Undo cancels the previous mutation, so
// replaying the script reproduces the session's net effect on the scene.
export function logToEditScript(log: CallRecord[]): string {
  const lines: string[] = [];
  for (const record of log) {
    if (record.method !== "POST") continue;
    if (record.path === "/edit") {
      const body = record.body as EditRequest;
      if (!body.labels || body.labels.length === 0) {
        throw new Error("only label edits can be replayed as a script");
      }
      let line = `${body.op} ${body.labels.join(",")} ${body.mode} ${body.th}`;
      if (body.op === "recolor" && body.color) {
        line += ` color=${body.color.join(",")}`;
      }
      lines.push(line);
    } else if (record.path === "/undo") {
      lines.pop();
    }
  }
  return lines.join("\n") + (lines.length ? "\n" : "");
}

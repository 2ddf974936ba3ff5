import { describe, expect, it } from "vitest";

import { ApiClient, CallRecord, logToEditScript, poseParam } from "../src/api.js";

const IDENTITY_POSE = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1];

function mockFetch(history: { url: string; init?: RequestInit }[]) {
  return async (url: string, init?: RequestInit): Promise<Response> => {
    history.push({ url, init });
    if (url.includes("/labels")) {
      return new Response(JSON.stringify({ labels: ["background", "a"], background_label: 0 }));
    }
    if (url.includes("/orbit")) {
      return new Response(JSON.stringify({ pose: IDENTITY_POSE }));
    }
    if (url.includes("/render") || url.includes("/feature_viz") || url.includes("/segmentation")) {
      return new Response(new Blob([new Uint8Array([137, 80, 78, 71])]), {
        headers: { "Content-Type": "image/png" },
      });
    }
    return new Response(JSON.stringify({ ok: true, count: 1, selected: 1, total: 2, mask_png: null, path: "x" }));
  };
}

describe("ApiClient", () => {
  it("builds render queries with the full pose", async () => {
    const history: { url: string }[] = [];
    const api = new ApiClient("http://x", mockFetch(history));
    await api.render(IDENTITY_POSE, 256, 128, "0,0,0");
    expect(history[0].url).toContain("/render?");
    expect(history[0].url).toContain(`pose=${encodeURIComponent(poseParam(IDENTITY_POSE))}`);
    expect(history[0].url).toContain("w=256");
    expect(history[0].url).toContain("h=128");
    expect(history[0].url).toContain("bg=0%2C0%2C0");
  });

  it("rejects malformed poses", () => {
    expect(() => poseParam([1, 2, 3])).toThrow(/16/);
  });

  it("records every call in order", async () => {
    const api = new ApiClient("http://x", mockFetch([]));
    await api.labels();
    await api.prompt({ labels: ["a"], mode: "soft", th: 0.5 });
    await api.edit({ op: "delete", labels: ["a"], mode: "hybrid", th: 0.5 });
    await api.undo();
    await api.save();
    expect(api.log.map((r) => r.path)).toEqual([
      "/labels", "/prompt", "/edit", "/undo", "/save",
    ]);
  });

  it("raises ApiError with the server message", async () => {
    const failing = async () =>
      new Response(JSON.stringify({ error: "unknown label 'x'" }), { status: 400 });
    const api = new ApiClient("http://x", failing);
    await expect(api.undo()).rejects.toThrow(/unknown label/);
  });
});

describe("logToEditScript", () => {
  const edit = (op: string, labels: string[], mode = "hybrid", th = 0.5, color?: number[]): CallRecord => ({
    method: "POST",
    path: "/edit",
    body: { op, labels, mode, th, ...(color ? { color } : {}) },
  });

  it("serializes label edits in order", () => {
    const script = logToEditScript([
      edit("delete", ["car"]),
      edit("recolor", ["leaves"], "soft", 0.6, [1, 0, 0]),
    ]);
    expect(script).toBe(
      "delete car hybrid 0.5\nrecolor leaves soft 0.6 color=1,0,0\n",
    );
  });

  it("undo cancels the previous mutation", () => {
    const script = logToEditScript([
      edit("delete", ["car"]),
      { method: "POST", path: "/undo" },
    ]);
    expect(script).toBe("");
  });

  it("ignores reads and prompts", () => {
    const script = logToEditScript([
      { method: "GET", path: "/render", query: {} },
      { method: "POST", path: "/prompt", body: {} },
      edit("extract", ["a", "b"]),
      { method: "POST", path: "/save", body: {} },
    ]);
    expect(script).toBe("extract a,b hybrid 0.5\n");
  });
});

// Session controller: the complete behavior of the operator console with
// the DOM abstracted away. Every pixel shown comes from a service response;
// the browser layer only forwards events here and paints the blobs that
// come back.

import { ApiClient, EditOp, PromptResponse } from "./api.js";
import { debounceAsync, Debounced } from "./debounce.js";
import {
  LayerName,
  UiState,
  createInitialState,
  orbitBy,
  setActiveLabel,
  setMode,
  setPendingOp,
  setRecolor,
  setThreshold,
  setTool,
  toggleLayer,
  zoomBy,
} from "./state.js";

export interface LayerFrames {
  rgb?: Blob;
  pca?: Blob;
  seg?: Blob;
}

export interface SessionEvents {
  onFrames?: (frames: LayerFrames) => void;
  onMask?: (maskPngBase64: string | null, count: number) => void;
  onStatus?: (message: string) => void;
  onError?: (message: string) => void;
  onUndoAvailable?: (available: boolean) => void;
}

export const ORBIT_DEBOUNCE_MS = 80;

export class Session {
  state: UiState = createInitialState();
  labels: string[] = [];
  viewWidth = 256;
  viewHeight = 256;
  private pose: number[] | null = null;
  private editsApplied = 0;
  private readonly scheduleRender: Debounced<[]>;

  constructor(
    readonly api: ApiClient,
    private readonly events: SessionEvents = {},
    debounceMs: number = ORBIT_DEBOUNCE_MS,
  ) {
    this.scheduleRender = debounceAsync(() => this.refresh(), debounceMs);
  }

  async start(): Promise<void> {
    this.labels = (await this.api.labels()).labels;
    if (this.labels.length > 1) {
      this.state = setActiveLabel(this.state, this.labels[1]);
    }
    await this.refresh();
  }

  currentPose(): number[] | null {
    return this.pose;
  }

  hasUndo(): boolean {
    return this.editsApplied > 0;
  }

  // ------------------------------------------------------------ orbiting

  drag(dTheta: number, dPhi: number): void {
    this.state = orbitBy(this.state, dTheta, dPhi);
    this.scheduleRender();
  }

  zoom(factor: number): void {
    this.state = zoomBy(this.state, factor);
    this.scheduleRender();
  }

  async settle(): Promise<void> {
    await this.scheduleRender.flush();
  }

  async refresh(): Promise<void> {
    try {
      this.pose = await this.api.orbit(this.state.theta, this.state.phi,
                                       this.state.radius);
      const frames: LayerFrames = {};
      if (this.state.layers.rgb) {
        frames.rgb = await this.api.render(this.pose, this.viewWidth,
                                           this.viewHeight);
      }
      if (this.state.layers.pca) {
        frames.pca = await this.api.featureViz(this.pose, this.viewWidth,
                                               this.viewHeight);
      }
      if (this.state.layers.seg) {
        frames.seg = await this.api.segmentation(this.pose, this.viewWidth,
                                                 this.viewHeight);
      }
      this.events.onFrames?.(frames);
    } catch (err) {
      this.events.onError?.(String(err));
    }
  }

  // ------------------------------------------------------------ prompting

  async promptAtPixel(x: number, y: number): Promise<PromptResponse | null> {
    if (this.pose === null) return null;
    if (x < 0 || y < 0 || x >= this.viewWidth || y >= this.viewHeight) {
      return null; // clicks outside the viewport are ignored
    }
    const response = await this.api.prompt({
      point: { x, y },
      pose: this.pose,
      w: this.viewWidth,
      h: this.viewHeight,
      mode: this.state.mode,
      th: this.state.threshold,
    });
    this.events.onMask?.(response.mask_png, response.count);
    return response;
  }

  async promptBox(x0: number, y0: number, x1: number, y1: number):
      Promise<PromptResponse | null> {
    if (this.pose === null) return null;
    const response = await this.api.prompt({
      box: { x0, y0, x1, y1 },
      pose: this.pose,
      w: this.viewWidth,
      h: this.viewHeight,
      mode: this.state.mode,
      th: this.state.threshold,
    });
    this.events.onMask?.(response.mask_png, response.count);
    return response;
  }

  async promptLabel(label: string): Promise<PromptResponse> {
    this.state = setActiveLabel(this.state, label);
    const body: Parameters<ApiClient["prompt"]>[0] = {
      labels: [label],
      mode: this.state.mode,
      th: this.state.threshold,
    };
    if (this.pose !== null) {
      body.pose = this.pose;
      body.w = this.viewWidth;
      body.h = this.viewHeight;
    }
    const response = await this.api.prompt(body);
    this.events.onMask?.(response.mask_png, response.count);
    return response;
  }

  // ------------------------------------------------------------ editing

  async applyEdit(op: EditOp): Promise<boolean> {
    if (this.state.activeLabel === null) {
      this.events.onError?.("choose a label before applying an edit");
      return false;
    }
    try {
      const result = await this.api.edit({
        op,
        labels: [this.state.activeLabel],
        mode: this.state.mode,
        th: this.state.threshold,
        ...(op === "recolor" ? { color: this.state.recolor } : {}),
      });
      if (result.ok) {
        this.editsApplied += 1;
        this.events.onUndoAvailable?.(true);
        this.events.onStatus?.(`${op}: ${result.selected} gaussians`);
        await this.refresh();
        return true;
      }
      return false;
    } catch (err) {
      this.events.onError?.(String(err));
      return false;
    }
  }

  async undo(): Promise<boolean> {
    const result = await this.api.undo();
    if (result.ok) {
      this.editsApplied = Math.max(0, this.editsApplied - 1);
      this.events.onUndoAvailable?.(this.editsApplied > 0);
      await this.refresh();
    }
    return result.ok;
  }

  async save(path?: string): Promise<string> {
    const result = await this.api.save(path);
    this.events.onStatus?.(`saved ${result.count} gaussians to ${result.path}`);
    return result.path;
  }

  // ------------------------------------------------------------ controls

  setTool(tool: UiState["tool"]): void {
    this.state = setTool(this.state, tool);
  }

  setMode(mode: UiState["mode"]): void {
    this.state = setMode(this.state, mode);
  }

  setThreshold(value: number): void {
    this.state = setThreshold(this.state, value);
  }

  setRecolor(rgb: [number, number, number]): void {
    this.state = setRecolor(this.state, rgb);
  }

  setPendingOp(op: UiState["pendingOp"]): void {
    this.state = setPendingOp(this.state, op);
  }

  toggleLayer(layer: LayerName): void {
    this.state = toggleLayer(this.state, layer);
    this.scheduleRender();
  }
}

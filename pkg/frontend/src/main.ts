// Browser wiring: binds the session controller to the DOM. All rendering
// is server-side; this file only forwards events and paints blobs.

import { ApiClient } from "./api.js";
import { Session } from "./session.js";
import { LayerName, PromptTool, SelectionMode } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function paintBlob(canvas: HTMLCanvasElement, blob: Blob): Promise<void> {
  const bitmap = await createImageBitmap(blob);
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d");
  if (ctx) ctx.drawImage(bitmap, 0, 0);
}

function paintMask(canvas: HTMLCanvasElement, maskPngBase64: string | null): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  if (!maskPngBase64) {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    return;
  }
  const img = new Image();
  img.onload = () => {
    canvas.width = img.width;
    canvas.height = img.height;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.globalAlpha = 0.5;
    ctx.drawImage(img, 0, 0);
    ctx.globalAlpha = 1.0;
  };
  img.src = `data:image/png;base64,${maskPngBase64}`;
}

function setupLabelList(session: Session, container: HTMLElement): void {
  container.innerHTML = "";
  for (const label of session.labels) {
    const button = document.createElement("button");
    button.textContent = label;
    button.className = "label-chip";
    button.onclick = async () => {
      container.querySelectorAll(".label-chip").forEach((b) =>
        b.classList.remove("active"));
      button.classList.add("active");
      const response = await session.promptLabel(label);
      el<HTMLSpanElement>("count-badge").textContent =
        `${response.count} selected`;
    };
    container.appendChild(button);
  }
}

async function boot(): Promise<void> {
  const api = new ApiClient("");
  const rgbCanvas = el<HTMLCanvasElement>("layer-rgb");
  const pcaCanvas = el<HTMLCanvasElement>("layer-pca");
  const segCanvas = el<HTMLCanvasElement>("layer-seg");
  const maskCanvas = el<HTMLCanvasElement>("layer-mask");
  const status = el<HTMLSpanElement>("status");
  const undoButton = el<HTMLButtonElement>("undo");

  const session = new Session(api, {
    onFrames: (frames) => {
      if (frames.rgb) void paintBlob(rgbCanvas, frames.rgb);
      if (frames.pca) void paintBlob(pcaCanvas, frames.pca);
      if (frames.seg) void paintBlob(segCanvas, frames.seg);
      pcaCanvas.style.display = session.state.layers.pca ? "" : "none";
      segCanvas.style.display = session.state.layers.seg ? "" : "none";
    },
    onMask: (mask, count) => {
      if (session.state.layers.mask) paintMask(maskCanvas, mask);
      el<HTMLSpanElement>("count-badge").textContent = `${count} selected`;
    },
    onStatus: (message) => {
      status.textContent = message;
      status.classList.remove("error");
    },
    onError: (message) => {
      status.textContent = message;
      status.classList.add("error");
    },
    onUndoAvailable: (available) => {
      undoButton.disabled = !available;
    },
  });

  // ---- orbit: drag on the viewport
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  const viewport = el<HTMLDivElement>("viewport");
  viewport.addEventListener("mousedown", (e) => {
    dragging = true;
    lastX = e.clientX;
    lastY = e.clientY;
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
  window.addEventListener("mousemove", (e) => {
    if (!dragging) return;
    session.drag((e.clientX - lastX) * 0.01, (e.clientY - lastY) * 0.01);
    lastX = e.clientX;
    lastY = e.clientY;
  });
  viewport.addEventListener("wheel", (e) => {
    e.preventDefault();
    session.zoom(e.deltaY > 0 ? 1.1 : 0.9);
  });

  // ---- prompts: click / box-drag on the rgb canvas
  let boxStart: { x: number; y: number } | null = null;
  rgbCanvas.addEventListener("mousedown", (e) => {
    if (session.state.tool !== "box") return;
    const rect = rgbCanvas.getBoundingClientRect();
    boxStart = { x: e.offsetX * (rgbCanvas.width / rect.width),
                 y: e.offsetY * (rgbCanvas.height / rect.height) };
    e.stopPropagation();
  });
  rgbCanvas.addEventListener("click", async (e) => {
    const rect = rgbCanvas.getBoundingClientRect();
    const x = Math.floor(e.offsetX * (rgbCanvas.width / rect.width));
    const y = Math.floor(e.offsetY * (rgbCanvas.height / rect.height));
    if (session.state.tool === "point") {
      await session.promptAtPixel(x, y);
    } else if (session.state.tool === "box" && boxStart) {
      await session.promptBox(
        Math.floor(Math.min(boxStart.x, x)),
        Math.floor(Math.min(boxStart.y, y)),
        Math.ceil(Math.max(boxStart.x, x)) + 1,
        Math.ceil(Math.max(boxStart.y, y)) + 1,
      );
      boxStart = null;
    }
  });

  // ---- controls
  for (const tool of ["point", "box", "label"] as PromptTool[]) {
    el<HTMLInputElement>(`tool-${tool}`).onclick = () => session.setTool(tool);
  }
  for (const mode of ["soft", "hard", "hybrid"] as SelectionMode[]) {
    el<HTMLInputElement>(`mode-${mode}`).onclick = () => session.setMode(mode);
  }
  const slider = el<HTMLInputElement>("threshold");
  slider.oninput = () => {
    session.setThreshold(Number(slider.value));
    el<HTMLSpanElement>("threshold-value").textContent = slider.value;
  };
  for (const layer of ["rgb", "pca", "seg", "mask"] as LayerName[]) {
    el<HTMLInputElement>(`layer-toggle-${layer}`).onchange = () =>
      session.toggleLayer(layer);
  }
  el<HTMLButtonElement>("apply-extract").onclick = () =>
    void session.applyEdit("extract");
  el<HTMLButtonElement>("apply-delete").onclick = () =>
    void session.applyEdit("delete");
  el<HTMLButtonElement>("apply-recolor").onclick = () => {
    const hex = el<HTMLInputElement>("recolor-color").value;
    const rgb: [number, number, number] = [
      parseInt(hex.slice(1, 3), 16) / 255,
      parseInt(hex.slice(3, 5), 16) / 255,
      parseInt(hex.slice(5, 7), 16) / 255,
    ];
    session.setRecolor(rgb);
    void session.applyEdit("recolor");
  };
  undoButton.onclick = () => void session.undo();
  el<HTMLButtonElement>("save").onclick = () => void session.save();

  await session.start();
  setupLabelList(session, el<HTMLDivElement>("labels"));
}

void boot();

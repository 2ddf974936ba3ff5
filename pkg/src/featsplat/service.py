"""Local HTTP service exposing render, prompt, and edit operations.

Single-session request/response protocol over plain HTTP with JSON
bodies; image payloads are PNG (masks 8-bit grayscale).  Requests are
handled strictly sequentially (one OS thread), which trivially serializes
all session-state mutation.  The on-disk checkpoint is only written by an
explicit POST /save.

Endpoints:
    GET  /render?pose=...&w=&h=&bg=      rendered RGB (PNG)
    GET  /feature_viz?pose=...           PCA visualization (PNG)
    GET  /segmentation?pose=...[&raw=1]  label overlay or raw ids (PNG)
    GET  /labels                         codebook labels (JSON)
    GET  /orbit?theta=&phi=&r=           orbit pose helper (JSON)
    POST /prompt                         selection mask + count (JSON)
    POST /edit                           apply extract/delete/recolor (JSON)
    POST /undo                           revert the last edit (JSON)
    POST /save                           write the working checkpoint (JSON)
"""

from __future__ import annotations

import base64
import json
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from . import fileio, viz
from .decoder import ChannelDecoder, decode
from .oracle import Codebook
from .prompts import (EditSelection, apply_edit, box_query, point_query,
                      query_with_complement, score_against_codebook,
                      score_gaussians, select)
from .rasterizer import render
from .scene import CameraView, GaussianCloud, compact_cloud, orbit_camera

UNDO_LIMIT = 32
DEFAULT_FOV_FX = 0.9443276182679734  # fx = 0.5 * w / tan(27.5 deg) / w


class ServiceError(ValueError):
    """Maps to a 400 response with the message in the JSON body."""


class SessionState:
    """Working copy of the loaded scene plus a bounded undo stack."""

    def __init__(self, cloud: GaussianCloud, decoder: ChannelDecoder | None,
                 codebook: Codebook | None, checkpoint_path=None):
        self.base_cloud = cloud
        self.decoder = decoder
        self.codebook = codebook
        self.checkpoint_path = checkpoint_path
        self.working = cloud.copy()
        self.undo_stack: list[GaussianCloud] = []

    def push_undo(self) -> None:
        self.undo_stack.append(self.working.copy())
        if len(self.undo_stack) > UNDO_LIMIT:
            self.undo_stack.pop(0)

    def undo(self) -> bool:
        if not self.undo_stack:
            return False
        self.working = self.undo_stack.pop()
        return True


def _parse_pose(text: str) -> np.ndarray:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 16:
        raise ServiceError("pose needs 16 comma-separated scalars")
    return np.array(vals).reshape(4, 4)


def _camera_from_query(q: dict) -> CameraView:
    if "pose" not in q:
        raise ServiceError("missing pose")
    width = int(q.get("w", ["256"])[0])
    height = int(q.get("h", ["256"])[0])
    fx = float(q["fx"][0]) if "fx" in q else DEFAULT_FOV_FX * width
    view = CameraView(fx=fx, fy=float(q["fy"][0]) if "fy" in q else fx,
                      cx=width / 2.0, cy=height / 2.0,
                      width=width, height=height,
                      world_to_camera=_parse_pose(q["pose"][0]))
    try:
        view.validate()
    except ValueError as e:
        raise ServiceError(str(e)) from e
    return view


def _camera_from_body(body: dict) -> CameraView:
    pose = body.get("pose")
    if pose is None:
        raise ServiceError("missing pose")
    if isinstance(pose, str):
        w2c = _parse_pose(pose)
    else:
        w2c = np.asarray(pose, dtype=np.float64).reshape(4, 4)
    width = int(body.get("w", 256))
    height = int(body.get("h", 256))
    fx = float(body.get("fx", DEFAULT_FOV_FX * width))
    view = CameraView(fx=fx, fy=float(body.get("fy", fx)),
                      cx=width / 2.0, cy=height / 2.0,
                      width=width, height=height, world_to_camera=w2c)
    try:
        view.validate()
    except ValueError as e:
        raise ServiceError(str(e)) from e
    return view


class SceneService:
    """Request handlers over a single session; transport-agnostic."""

    def __init__(self, cloud: GaussianCloud, decoder: ChannelDecoder | None,
                 codebook: Codebook | None, checkpoint_path=None,
                 ui_dir=None):
        self.session = SessionState(cloud, decoder, codebook, checkpoint_path)
        self.ui_dir = Path(ui_dir) if ui_dir else None

    # -------------------------------------------------- GET endpoints

    def render_png(self, q: dict) -> bytes:
        view = _camera_from_query(q)
        bg = [float(v) for v in q.get("bg", ["0,0,0"])[0].split(",")]
        out = render(self.session.working, view, background=bg)
        return viz.encode_png_bytes(out.image)

    def feature_viz_png(self, q: dict) -> bytes:
        view = _camera_from_query(q)
        out = render(self.session.working, view)
        fmap = self._decoded(out.feature_map)
        try:
            basis = viz.fit_pca(fmap)
        except ValueError as e:
            raise ServiceError(str(e)) from e
        return viz.encode_png_bytes(viz.visualize_features(fmap, basis))

    def segmentation_png(self, q: dict) -> bytes:
        if self.session.codebook is None:
            raise ServiceError("no codebook loaded")
        view = _camera_from_query(q)
        out = render(self.session.working, view)
        fmap = self._decoded(out.feature_map)
        class_ids, overlay = viz.segmentation_map(
            fmap, self.session.codebook, image=out.image,
            alpha_map=out.alpha_map)
        if q.get("raw", ["0"])[0] == "1":
            return viz.encode_png_bytes(class_ids.astype(np.uint8), gray=True)
        return viz.encode_png_bytes(overlay)

    def labels(self) -> dict:
        cb = self.session.codebook
        if cb is None:
            return {"labels": [], "background_label": None}
        return {"labels": list(cb.labels),
                "background_label": int(cb.background_label)}

    def orbit(self, q: dict) -> dict:
        theta = float(q.get("theta", ["0"])[0])
        phi = float(q.get("phi", ["0.9"])[0])
        radius = float(q.get("r", ["2.8"])[0])
        view = orbit_camera(theta, phi, radius, fx=1.0, width=2, height=2)
        return {"pose": [float(v) for v in view.world_to_camera.ravel()]}

    # -------------------------------------------------- POST endpoints

    def prompt(self, body: dict) -> dict:
        selection, view = self._resolve_selection(body)
        mask_png = None
        if view is not None:
            mask_png = base64.b64encode(
                self._selection_mask_png(selection, view)).decode()
        return {"count": selection.count,
                "total": self.session.working.count,
                "mask_png": mask_png}

    def edit(self, body: dict) -> dict:
        op = body.get("op")
        if op not in ("extract", "delete", "recolor"):
            raise ServiceError(f"unknown edit op {op!r}")
        selection, _ = self._resolve_selection(body)
        fn = None
        if op == "recolor":
            color = body.get("color")
            if color is None or len(color) != 3:
                raise ServiceError("recolor needs color: [r, g, b]")
            target = np.asarray(color, dtype=np.float64)
            fn = lambda c: np.broadcast_to(target, c.shape)  # noqa: E731
        self.session.push_undo()
        self.session.working = apply_edit(self.session.working, selection,
                                          op, recolor_fn=fn)
        return {"ok": True, "selected": selection.count,
                "count": self.session.working.count}

    def undo(self) -> dict:
        ok = self.session.undo()
        return {"ok": ok, "count": self.session.working.count}

    def save(self, body: dict) -> dict:
        path = body.get("path") or self.session.checkpoint_path
        if not path:
            raise ServiceError("no save path")
        cloud = self.session.working
        try:
            cloud = compact_cloud(cloud)
        except ValueError as e:
            raise ServiceError(str(e)) from e
        fileio.save_cloud(cloud, path, self.session.decoder)
        return {"ok": True, "path": str(path), "count": cloud.count}

    # -------------------------------------------------- helpers

    def _decoded(self, fmap):
        if self.session.decoder is not None:
            return decode(fmap, self.session.decoder)
        return fmap

    def _resolve_selection(self, body: dict) -> tuple[EditSelection, CameraView | None]:
        mode = body.get("mode", "hybrid")
        threshold = float(body.get("th", 0.5))
        cloud = self.session.working

        if body.get("labels"):
            cb = self.session.codebook
            if cb is None:
                raise ServiceError("no codebook loaded")
            try:
                cols = [cb.label_index(l) for l in body["labels"]]
            except KeyError as e:
                raise ServiceError(e.args[0]) from e
            scores = score_against_codebook(cloud, cb,
                                            decoder=self.session.decoder)
            view = _camera_from_body(body) if body.get("pose") else None
            return select(scores, cols, mode, threshold), view

        view = _camera_from_body(body)
        out = render(cloud, view)
        decoded = self._decoded(out.feature_map)
        if body.get("point"):
            p = body["point"]
            q_vec = point_query(decoded, int(p["x"]), int(p["y"]))
        elif body.get("box"):
            b = body["box"]
            q_vec = box_query(decoded, int(b["x0"]), int(b["y0"]),
                              int(b["x1"]), int(b["y1"]))
        else:
            raise ServiceError("prompt needs labels, point, or box")
        scores = score_gaussians(cloud, query_with_complement(q_vec),
                                 decoder=self.session.decoder)
        return select(scores, 0, mode, threshold), view

    def _selection_mask_png(self, selection: EditSelection,
                            view: CameraView) -> bytes:
        """Render the selection as a grayscale coverage mask."""
        shown = apply_edit(self.session.working, selection, "extract")
        out = render(shown, view)
        mask = (np.clip(out.alpha_map, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
        return viz.encode_png_bytes(mask, gray=True)

    # -------------------------------------------------- HTTP plumbing

    def make_server(self, host: str = "127.0.0.1", port: int = 8399) -> HTTPServer:
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # quiet
                pass

            def _send(self, code: int, payload: bytes, ctype: str):
                self.send_response(code)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(payload)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(payload)

            def _send_json(self, obj, code: int = 200):
                self._send(code, json.dumps(obj).encode(), "application/json")

            def _fail(self, e: Exception):
                if isinstance(e, ServiceError):
                    self._send_json({"error": str(e)}, 400)
                else:
                    self._send_json({"error": f"internal: {e}"}, 500)

            def do_GET(self):
                url = urlparse(self.path)
                q = parse_qs(url.query)
                try:
                    if url.path == "/render":
                        self._send(200, service.render_png(q), "image/png")
                    elif url.path == "/feature_viz":
                        self._send(200, service.feature_viz_png(q), "image/png")
                    elif url.path == "/segmentation":
                        self._send(200, service.segmentation_png(q), "image/png")
                    elif url.path == "/labels":
                        self._send_json(service.labels())
                    elif url.path == "/orbit":
                        self._send_json(service.orbit(q))
                    elif service.ui_dir is not None:
                        self._serve_static(url.path)
                    else:
                        self._send_json({"error": "not found"}, 404)
                except Exception as e:  # noqa: BLE001 - boundary
                    self._fail(e)

            def _serve_static(self, path: str):
                rel = path.lstrip("/") or "index.html"
                target = (service.ui_dir / rel).resolve()
                if (service.ui_dir.resolve() not in target.parents
                        and target != service.ui_dir.resolve()):
                    self._send_json({"error": "not found"}, 404)
                    return
                if not target.is_file():
                    self._send_json({"error": "not found"}, 404)
                    return
                ctype = {
                    ".html": "text/html", ".js": "text/javascript",
                    ".css": "text/css", ".png": "image/png",
                }.get(target.suffix, "application/octet-stream")
                self._send(200, target.read_bytes(), ctype)

            def do_POST(self):
                url = urlparse(self.path)
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length) if length else b"{}"
                try:
                    body = json.loads(raw or b"{}")
                except json.JSONDecodeError:
                    self._send_json({"error": "invalid JSON body"}, 400)
                    return
                try:
                    if url.path == "/prompt":
                        self._send_json(service.prompt(body))
                    elif url.path == "/edit":
                        self._send_json(service.edit(body))
                    elif url.path == "/undo":
                        self._send_json(service.undo())
                    elif url.path == "/save":
                        self._send_json(service.save(body))
                    else:
                        self._send_json({"error": "not found"}, 404)
                except Exception as e:  # noqa: BLE001 - boundary
                    self._fail(e)

        return HTTPServer((host, port), Handler)


def resolve_ui_dir(arg: str):
    """Locate the built web UI assets for ``serve --ui``."""
    if arg and arg != "default":
        path = Path(arg)
        if not path.is_dir():
            raise ValueError(f"UI directory {path} does not exist")
        return path
    here = Path(__file__).resolve()
    for root in (Path.cwd(), *here.parents):
        for sub in ("frontend/dist", "frontend/public"):
            cand = root / sub
            if (cand / "index.html").is_file():
                return cand
    raise ValueError("no built UI found; pass a directory to --ui")

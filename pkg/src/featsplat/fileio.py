"""Binary and text file formats.

GSPLAT checkpoint:
    16-byte header: magic b"GSPL" | version u32 = 1 | count u32 |
    feature_dim u32, little-endian, followed by ``count`` records of
    little-endian float32 in field order position(3), rotation(4),
    log_scale(3), opacity_logit(1), color(3), feature(N).

    An optional decoder trailer may follow the records: magic b"DEC1" |
    out_dim u32 | in_dim u32 | out_dim*in_dim weight floats (row-major) |
    out_dim bias floats.

FTENS tensor file:
    magic b"FTEN" | rank u32 | dims u32[rank] | row-major float32 payload.

Camera manifest (views.txt):
    one line per view: ``index fx fy cx cy width height p00 .. p33`` with
    the 16 pose scalars row-major world-to-camera.

Codebook:
    JSON object {"labels": [...], "background_label": int,
    "embeddings": [[...], ...]}.

Writes go to a temporary file in the target directory followed by an
atomic rename, so a failed write never leaves a partial file behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .decoder import ChannelDecoder
from .scene import CameraView, GaussianCloud, bounding_radius

GSPLAT_MAGIC = b"GSPL"
GSPLAT_VERSION = 1
DECODER_MAGIC = b"DEC1"
FTENS_MAGIC = b"FTEN"


class FileFormatError(ValueError):
    """Raised when a file fails structural validation on load."""


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cloud_records(cloud: GaussianCloud) -> np.ndarray:
    return np.hstack([
        cloud.positions,
        cloud.rotations,
        cloud.log_scales,
        cloud.opacity_logits[:, None],
        cloud.colors,
        cloud.features,
    ]).astype("<f4")


def save_cloud(cloud: GaussianCloud, path,
               decoder: ChannelDecoder | None = None) -> None:
    """Write a GSPLAT checkpoint, optionally with a decoder trailer."""
    if cloud.count == 0:
        raise ValueError("empty cloud")
    cloud.validate()
    header = GSPLAT_MAGIC + struct.pack(
        "<III", GSPLAT_VERSION, cloud.count, cloud.feature_dim)
    payload = header + _cloud_records(cloud).tobytes()
    if decoder is not None:
        if not (np.all(np.isfinite(decoder.weights))
                and np.all(np.isfinite(decoder.bias))):
            raise ValueError("non-finite decoder parameters")
        payload += DECODER_MAGIC + struct.pack(
            "<II", decoder.out_dim, decoder.in_dim)
        payload += decoder.weights.astype("<f4").tobytes()
        payload += decoder.bias.astype("<f4").tobytes()
    _atomic_write(path, payload)


def load_checkpoint(path) -> tuple[GaussianCloud, ChannelDecoder | None]:
    """Load a GSPLAT checkpoint and its decoder trailer if present."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FileFormatError(f"{path}: unexpected end of file in header")
    if raw[:4] != GSPLAT_MAGIC:
        raise FileFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, count, feature_dim = struct.unpack("<III", raw[4:16])
    if version != GSPLAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if count == 0:
        raise FileFormatError(f"{path}: empty cloud")
    record_floats = 14 + feature_dim
    body_len = count * record_floats * 4
    if len(raw) < 16 + body_len:
        raise FileFormatError(f"{path}: unexpected end of file at offset {len(raw)}")
    records = np.frombuffer(raw[16:16 + body_len], dtype="<f4")
    records = records.astype(np.float64).reshape(count, record_floats)
    if not np.all(np.isfinite(records)):
        bad = int(np.argwhere(~np.isfinite(records))[0][0])
        raise FileFormatError(f"{path}: non-finite value at record {bad}")
    cloud = GaussianCloud(
        positions=records[:, 0:3],
        rotations=records[:, 3:7],
        log_scales=records[:, 7:10],
        opacity_logits=records[:, 10],
        colors=records[:, 11:14],
        features=records[:, 14:],
        scene_extent=1.0,
    )
    cloud.scene_extent = bounding_radius(cloud.positions)
    try:
        cloud.validate()
    except ValueError as e:
        raise FileFormatError(f"{path}: {e}") from e

    decoder = None
    rest = raw[16 + body_len:]
    if rest:
        decoder, rest = _parse_decoder_trailer(rest, path)
        if rest:
            raise FileFormatError(f"{path}: {len(rest)} trailing bytes")
    return cloud, decoder


def load_cloud(path) -> GaussianCloud:
    cloud, _ = load_checkpoint(path)
    return cloud


def _parse_decoder_trailer(raw: bytes, path) -> tuple[ChannelDecoder, bytes]:
    if len(raw) < 12 or raw[:4] != DECODER_MAGIC:
        raise FileFormatError(f"{path}: bad decoder trailer magic")
    out_dim, in_dim = struct.unpack("<II", raw[4:12])
    if out_dim == 0 or in_dim == 0:
        raise FileFormatError(f"{path}: zero decoder dimension")
    n_w = out_dim * in_dim
    need = 12 + (n_w + out_dim) * 4
    if len(raw) < need:
        raise FileFormatError(f"{path}: unexpected end of file in decoder trailer")
    weights = np.frombuffer(raw[12:12 + n_w * 4], dtype="<f4")
    weights = weights.astype(np.float64).reshape(out_dim, in_dim)
    bias = np.frombuffer(raw[12 + n_w * 4:need], dtype="<f4").astype(np.float64)
    if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
        raise FileFormatError(f"{path}: non-finite decoder parameter")
    return ChannelDecoder(weights=weights, bias=bias), raw[need:]


def save_tensor(array: np.ndarray, path) -> None:
    """Write an FTENS tensor file."""
    array = np.asarray(array)
    if not np.all(np.isfinite(array)):
        raise ValueError("non-finite tensor values")
    header = FTENS_MAGIC + struct.pack("<I", array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    _atomic_write(path, header + array.astype("<f4").tobytes())


def load_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != FTENS_MAGIC:
        raise FileFormatError(f"{path}: bad tensor magic")
    rank = struct.unpack("<I", raw[4:8])[0]
    if rank == 0 or rank > 8:
        raise FileFormatError(f"{path}: implausible tensor rank {rank}")
    if len(raw) < 8 + 4 * rank:
        raise FileFormatError(f"{path}: unexpected end of file in dims")
    dims = struct.unpack(f"<{rank}I", raw[8:8 + 4 * rank])
    n = int(np.prod(dims))
    start = 8 + 4 * rank
    if len(raw) != start + 4 * n:
        raise FileFormatError(f"{path}: payload size mismatch")
    data = np.frombuffer(raw[start:], dtype="<f4").astype(np.float64)
    return data.reshape(dims)


def save_views(views: list[CameraView], path) -> None:
    lines = []
    for i, v in enumerate(views):
        pose = " ".join(repr(float(x)) for x in v.world_to_camera.ravel())
        lines.append(
            f"{i} {v.fx!r} {v.fy!r} {v.cx!r} {v.cy!r} {v.width} {v.height} {pose}"
        )
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def load_views(path) -> list[CameraView]:
    views = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 23:
            raise FileFormatError(
                f"{path}:{lineno}: expected 23 fields, got {len(parts)}")
        vals = [float(x) for x in parts]
        view = CameraView(
            fx=vals[1], fy=vals[2], cx=vals[3], cy=vals[4],
            width=int(vals[5]), height=int(vals[6]),
            world_to_camera=np.array(vals[7:]).reshape(4, 4),
        )
        view.validate()
        views.append(view)
    if not views:
        raise FileFormatError(f"{path}: no views")
    return views


def save_codebook(codebook, path) -> None:
    payload = json.dumps({
        "labels": list(codebook.labels),
        "background_label": int(codebook.background_label),
        "embeddings": np.asarray(codebook.embeddings).tolist(),
    }, indent=1).encode()
    _atomic_write(path, payload)


def load_codebook(path):
    from .oracle import Codebook

    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: invalid JSON ({e})") from e
    try:
        cb = Codebook(
            labels=list(obj["labels"]),
            embeddings=np.asarray(obj["embeddings"], dtype=np.float64),
            background_label=int(obj["background_label"]),
        )
    except KeyError as e:
        raise FileFormatError(f"{path}: missing key {e}") from e
    cb.validate()
    return cb

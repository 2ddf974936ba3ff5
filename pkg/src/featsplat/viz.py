"""Feature-map visualization, segmentation rendering, and image I/O.

PCA projection to three channels follows the usual recipe: center on the
sample mean, project on the top three principal directions, then map each
channel into [0, 1] using robust (2nd/98th percentile) bounds so outliers
do not crush the dynamic range.
"""

from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .oracle import Codebook, classify_composited
from .scene import FeatureMap

PCA_COMPONENTS = 3
PCA_TOLERANCE = 1e-8
PCA_MAX_ITERS = 10_000


@dataclass
class PcaBasis:
    """Three principal directions plus the normalization learned with them."""

    components: np.ndarray   # (3, M), orthonormal rows
    mean: np.ndarray         # (M,)
    channel_min: np.ndarray  # (3,)
    channel_max: np.ndarray  # (3,)


def _top_eigenvectors(cov: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Deflated power iteration on a symmetric PSD matrix."""
    dim = cov.shape[0]
    work = cov.copy()
    vectors = np.empty((k, dim))
    values = np.empty(k)
    for i in range(k):
        # Deterministic start with all modes populated.
        v = np.ones(dim) + 1e-3 * np.arange(dim)
        v /= np.linalg.norm(v)
        for _ in range(PCA_MAX_ITERS):
            nxt = work @ v
            norm = np.linalg.norm(nxt)
            if norm < 1e-300:
                break
            nxt /= norm
            if np.linalg.norm(nxt - v) < PCA_TOLERANCE:
                v = nxt
                break
            v = nxt
        lam = float(v @ work @ v)
        vectors[i] = v
        values[i] = lam
        work = work - lam * np.outer(v, v)
    return vectors, values


def fit_pca(fmap: FeatureMap, stride: int = 3) -> PcaBasis:
    """Fit a 3-component basis on every ``stride``-th pixel's feature."""
    flat = fmap.data.reshape(-1, fmap.dim)
    samples = flat[::stride]
    if samples.shape[0] < 3:
        raise ValueError("not enough samples to fit a 3-component basis")
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / samples.shape[0]
    vectors, values = _top_eigenvectors(cov, PCA_COMPONENTS)
    if values[0] <= 1e-18 or values[-1] <= 1e-12 * values[0]:
        raise ValueError("degenerate feature map")
    projected = centered @ vectors.T
    lo = np.percentile(projected, 2, axis=0)
    hi = np.percentile(projected, 98, axis=0)
    flatrange = hi - lo < 1e-12
    hi = np.where(flatrange, lo + 1.0, hi)
    return PcaBasis(components=vectors, mean=mean, channel_min=lo,
                    channel_max=hi)


def visualize_features(fmap: FeatureMap, basis: PcaBasis) -> np.ndarray:
    """Project features on the basis and normalize into an RGB image."""
    if fmap.dim != basis.mean.shape[0]:
        raise ValueError(
            f"feature dim {fmap.dim} does not match basis dim "
            f"{basis.mean.shape[0]}")
    centered = fmap.data - basis.mean
    projected = centered @ basis.components.T
    scale = basis.channel_max - basis.channel_min
    return np.clip((projected - basis.channel_min) / scale, 0.0, 1.0)


def label_color(name: str) -> np.ndarray:
    """Deterministic label color: hash of the name picks the hue."""
    digest = hashlib.md5(name.encode()).digest()
    hue = digest[0] / 255.0
    return np.array(colorsys.hsv_to_rgb(hue, 0.75, 0.95))


def palette_for(codebook: Codebook) -> np.ndarray:
    return np.stack([label_color(name) for name in codebook.labels])


def segmentation_map(features: FeatureMap, codebook: Codebook,
                     image: np.ndarray | None = None,
                     alpha_map: np.ndarray | None = None,
                     alpha_threshold: float = 0.5):
    """Cosine-argmax class ids plus a color overlay.

    When ``alpha_map`` is given, pixels where less than half the light was
    absorbed fall back to the background label.  The overlay blends the
    label palette onto the RGB render at 50% when an image is supplied.
    """
    if codebook.num_labels < 2:
        raise ValueError("codebook needs at least 2 labels")
    class_ids = classify_composited(features.data, codebook,
                                    alpha_map=alpha_map,
                                    alpha_threshold=alpha_threshold)
    colors = palette_for(codebook)[class_ids]
    overlay = colors if image is None else 0.5 * image + 0.5 * colors
    return class_ids, overlay


def miou(pred: np.ndarray, gt: np.ndarray, num_classes: int):
    """Per-class intersection-over-union and its mean.

    Classes absent from both maps (empty union) are excluded from the
    mean and reported as NaN.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    per_class = np.full(num_classes, np.nan)
    for k in range(num_classes):
        inter = np.count_nonzero((pred == k) & (gt == k))
        union = np.count_nonzero((pred == k) | (gt == k))
        if union:
            per_class[k] = inter / union
    included = per_class[~np.isnan(per_class)]
    mean = float(included.mean()) if included.size else float("nan")
    return per_class, mean


def save_png(image: np.ndarray, path) -> None:
    """Write an RGB (or grayscale float) image in [0, 1] as 8-bit PNG."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    data = (arr * 255.0 + 0.5).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data, mode=mode).save(path)


def load_png(path) -> np.ndarray:
    """Read a PNG as float RGB in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def save_png_gray(values: np.ndarray, path) -> None:
    """Write raw 8-bit values (class ids, masks) as a grayscale PNG."""
    data = np.asarray(values, dtype=np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data, mode="L").save(path)


def load_png_gray(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.int64)


def encode_png_bytes(image: np.ndarray, gray: bool = False) -> bytes:
    """PNG-encode an image into memory (service payloads)."""
    import io

    if gray:
        data = np.asarray(image, dtype=np.uint8)
        im = Image.fromarray(data, mode="L")
    else:
        arr = np.clip(np.asarray(image), 0.0, 1.0)
        im = Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="RGB")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()

"""Shared test utilities: scene generators and finite-difference oracles."""

from __future__ import annotations

import numpy as np

from featsplat.scene import CameraView, GaussianCloud, logit

GRADCHECK_VIEW = CameraView(fx=8.0, fy=8.0, cx=4.0, cy=4.0, width=8, height=8)


def gradcheck_cloud(rng: np.random.Generator, count: int | None = None,
                    feature_dim: int = 4) -> GaussianCloud:
    """Random scene engineered for finite-difference gradient checks.

    Every Gaussian covers the whole 8x8 image well inside its cutoff disk
    (no support-boundary crossings under small perturbations), opacities
    stay in [0.30, 0.55] so neither the alpha clamp nor the skip
    threshold nor transmittance termination can be straddled, and depths
    sit in disjoint slots so central differences never reorder the
    compositing.
    """
    n = int(count if count is not None else rng.integers(4, 11))
    slots = 4.0 + 2.5 * (np.arange(n) + rng.uniform(0.15, 0.85, n)) / n
    xy = rng.uniform(-1.5 / 8.0, 1.5 / 8.0, (n, 2)) * slots[:, None]
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianCloud(
        positions=np.column_stack([xy, slots]),
        rotations=q,
        log_scales=np.log(rng.uniform(2.8, 4.2, (n, 3))),
        opacity_logits=logit(rng.uniform(0.30, 0.55, n)),
        colors=rng.uniform(0.1, 0.9, (n, 3)),
        features=rng.standard_normal((n, feature_dim)),
        scene_extent=1.0,
    )


def general_cloud(rng: np.random.Generator, count: int,
                  feature_dim: int = 3, extent: float = 1.0) -> GaussianCloud:
    """Unconstrained random cloud for non-gradient tests."""
    q = rng.standard_normal((count, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianCloud(
        positions=rng.uniform(-extent, extent, (count, 3)),
        rotations=q,
        log_scales=np.log(rng.uniform(0.02, 0.15, (count, 3)) * extent),
        opacity_logits=logit(rng.uniform(0.05, 0.95, count)),
        colors=rng.uniform(0.0, 1.0, (count, 3)),
        features=rng.standard_normal((count, feature_dim)),
        scene_extent=extent,
    )


def central_difference(fn, array: np.ndarray, h: float) -> np.ndarray:
    """Central finite differences of scalar ``fn`` w.r.t. ``array`` in place.

    ``fn`` is called with no arguments and must read ``array``; entries
    are perturbed and restored one at a time.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + h
        fp = fn()
        array[idx] = orig - h
        fm = fn()
        array[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, fd: np.ndarray,
                       cutoff: float = 1e-6) -> float:
    """Worst relative disagreement on coordinates above the cutoff."""
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    scale = np.maximum(np.abs(analytic), np.abs(fd))
    mask = scale > cutoff
    if not np.any(mask):
        return 0.0
    return float((np.abs(analytic - fd)[mask] / scale[mask]).max())


def back_to_front_reference(proj, binning, opacities, colors, features,
                            view, background, feature_background):
    """Over-compositing back to front; oracle for the fused forward pass.

    Assumes no pixel hits the transmittance termination threshold (the
    caller constructs such scenes), since 'stop when nearly opaque' has
    no back-to-front analogue.
    """
    from featsplat.projection import TILE_SIZE
    from featsplat.rasterizer import ALPHA_CLAMP, ALPHA_SKIP

    H, W = view.height, view.width
    fdim = features.shape[1]
    image = np.empty((H, W, 3))
    image[:] = background
    fmap = np.empty((H, W, fdim))
    fmap[:] = feature_background

    for ty in range(binning.tiles_y):
        for tx in range(binning.tiles_x):
            sub = binning.tile(ty, tx)
            if sub.size == 0:
                continue
            for py in range(ty * TILE_SIZE, min((ty + 1) * TILE_SIZE, H)):
                for px in range(tx * TILE_SIZE, min((tx + 1) * TILE_SIZE, W)):
                    center = np.array([px + 0.5, py + 0.5])
                    col = image[py, px].copy()
                    feat = fmap[py, px].copy()
                    for k in reversed(sub):
                        d = center - proj.mean2d[k]
                        if d @ d > proj.radius[k] ** 2:
                            continue
                        inv = proj.inv_cov2d[k]
                        power = -0.5 * (inv[0] * d[0] ** 2
                                        + 2 * inv[1] * d[0] * d[1]
                                        + inv[2] * d[1] ** 2)
                        alpha = min(opacities[k] * np.exp(power), ALPHA_CLAMP)
                        if alpha < ALPHA_SKIP:
                            continue
                        col = alpha * colors[k] + (1 - alpha) * col
                        feat = alpha * features[k] + (1 - alpha) * feat
                    image[py, px] = col
                    fmap[py, px] = feat
    return image, fmap


def pixel_walk(proj, binning, opacities, view):
    """Sequential per-pixel (alpha', T) traces, for compositing invariants.

    Returns, for each pixel, the list of effective alphas of processed
    contributors and the matching transmittances before each one.
    """
    from featsplat.projection import TILE_SIZE
    from featsplat.rasterizer import (ALPHA_CLAMP, ALPHA_SKIP,
                                      TRANSMITTANCE_MIN)

    H, W = view.height, view.width
    traces = {}
    for ty in range(binning.tiles_y):
        for tx in range(binning.tiles_x):
            sub = binning.tile(ty, tx)
            for py in range(ty * TILE_SIZE, min((ty + 1) * TILE_SIZE, H)):
                for px in range(tx * TILE_SIZE, min((tx + 1) * TILE_SIZE, W)):
                    center = np.array([px + 0.5, py + 0.5])
                    alphas, ts = [], []
                    T = 1.0
                    for k in sub:
                        if T < TRANSMITTANCE_MIN:
                            break
                        d = center - proj.mean2d[k]
                        if d @ d > proj.radius[k] ** 2:
                            continue
                        inv = proj.inv_cov2d[k]
                        power = -0.5 * (inv[0] * d[0] ** 2
                                        + 2 * inv[1] * d[0] * d[1]
                                        + inv[2] * d[1] ** 2)
                        alpha = min(opacities[k] * np.exp(power), ALPHA_CLAMP)
                        if alpha < ALPHA_SKIP:
                            continue
                        alphas.append(alpha)
                        ts.append(T)
                        T *= 1.0 - alpha
                    traces[(py, px)] = (alphas, ts, T)
    return traces

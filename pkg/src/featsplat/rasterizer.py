"""Fused tile rasterizer: one front-to-back pass for RGB and features.

Every pixel walks its tile's depth-sorted Gaussian list once.  The
effective opacity of contributor i is

    alpha_i' = min(opacity_i * exp(-0.5 d^T inv_cov2d d), 0.99)

with d the offset from the pixel center to the splat center.  A
contributor counts only when the pixel lies inside the splat's radius
disk and alpha_i' >= 1/255; the walk stops once transmittance drops
below 1e-4.  Color and feature accumulate with the *same* weights in the
same pass, so both outputs always agree on contributor sets.

The compositing loop is expressed as masked prefix products over the
(gaussian x pixel) grid of a tile, which is mathematically identical to
the sequential walk (transmittance is nonincreasing, so the stop
condition is a prefix property) but lets numpy do the work.

The backward pass recomputes the per-tile weights instead of storing
them, keeping retained state at O(pixels + gaussians).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decoder import ChannelDecoder
from .projection import (ProjectedGaussians, ProjectionState, TILE_SIZE,
                         TileBinning, bin_tiles, project_backward,
                         project_cloud)
from .scene import CameraView, FeatureMap, GaussianCloud, sigmoid

ALPHA_CLAMP = 0.99
ALPHA_SKIP = 1.0 / 255.0
TRANSMITTANCE_MIN = 1.0e-4


@dataclass
class RenderState:
    """Everything the backward pass needs from a forward render."""

    cloud_count: int
    feature_dim: int
    view: CameraView
    background: np.ndarray
    feature_background: np.ndarray
    proj: ProjectedGaussians
    proj_state: ProjectionState
    binning: TileBinning
    opacities: np.ndarray   # (K,) for the projected set
    colors: np.ndarray      # (K, 3)
    features: np.ndarray    # (K, F)


@dataclass
class RenderOutput:
    """Rendered image, feature map, and coverage diagnostics."""

    image: np.ndarray          # (H, W, 3)
    feature_map: FeatureMap    # (H, W, F)
    alpha_map: np.ndarray      # (H, W), 1 - final transmittance
    contrib_counts: np.ndarray  # (H, W) int
    state: RenderState


def _tile_pixel_centers(view: CameraView, tx: int, ty: int):
    x0 = tx * TILE_SIZE
    y0 = ty * TILE_SIZE
    xs = np.arange(x0, min(x0 + TILE_SIZE, view.width)) + 0.5
    ys = np.arange(y0, min(y0 + TILE_SIZE, view.height)) + 0.5
    return xs, ys


def _tile_weights(proj: ProjectedGaussians, sub: np.ndarray,
                  opacities: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Per-(gaussian, pixel) compositing quantities for one tile.

    Returns dx, dy offsets, the Gaussian falloff ``w``, the clamped
    effective alpha ``A`` (zero where the contributor is skipped), the
    processed mask, the exclusive transmittance prefix ``T_excl``, and the
    per-pixel final transmittance.
    """
    mean = proj.mean2d[sub]
    inv = proj.inv_cov2d[sub]
    radius = proj.radius[sub]

    px = np.repeat(xs[None, :], len(ys), axis=0).ravel()
    py = np.repeat(ys[:, None], len(xs), axis=1).ravel()
    dx = px[None, :] - mean[:, 0, None]
    dy = py[None, :] - mean[:, 1, None]

    power = -0.5 * (inv[:, 0, None] * dx * dx
                    + 2.0 * inv[:, 1, None] * dx * dy
                    + inv[:, 2, None] * dy * dy)
    w = np.exp(power)
    alpha_raw = opacities[sub, None] * w
    clamped = alpha_raw > ALPHA_CLAMP
    A = np.where(clamped, ALPHA_CLAMP, alpha_raw)

    in_disk = dx * dx + dy * dy <= (radius[:, None] ** 2)
    valid = in_disk & (A >= ALPHA_SKIP)
    A = np.where(valid, A, 0.0)

    B = 1.0 - A
    T_excl = np.ones_like(A)
    if A.shape[0] > 1:
        np.cumprod(B[:-1], axis=0, out=T_excl[1:])
    live = T_excl >= TRANSMITTANCE_MIN
    processed = valid & live
    T_final = np.prod(np.where(processed, B, 1.0), axis=0)
    return dx, dy, w, A, clamped, processed, T_excl, T_final


def render(cloud: GaussianCloud, view: CameraView, background=(0.0, 0.0, 0.0),
           feature_background=0.0,
           feature_dim: int | None = None) -> RenderOutput:
    """Rasterize the cloud into an RGB image plus an N-dim feature map."""
    if cloud.count == 0:
        raise ValueError("empty cloud")
    if feature_dim is not None and feature_dim != cloud.feature_dim:
        raise ValueError(
            f"requested feature dim {feature_dim} != cloud feature dim "
            f"{cloud.feature_dim}")
    view.validate()
    fdim = cloud.feature_dim
    background = np.broadcast_to(
        np.asarray(background, dtype=np.float64), (3,)).copy()
    feature_background = np.broadcast_to(
        np.asarray(feature_background, dtype=np.float64), (fdim,)).copy()

    proj, proj_state = project_cloud(cloud, view)
    binning = bin_tiles(proj, view)

    opac = sigmoid(cloud.opacity_logits)[proj.source_index]
    colors = cloud.colors[proj.source_index]
    features = cloud.features[proj.source_index]

    H, W = view.height, view.width
    image = np.empty((H, W, 3))
    image[:] = background
    fmap = np.empty((H, W, fdim))
    fmap[:] = feature_background
    alpha_map = np.zeros((H, W))
    counts = np.zeros((H, W), dtype=np.int64)

    for ty in range(binning.tiles_y):
        for tx in range(binning.tiles_x):
            sub = binning.tile(ty, tx)
            if sub.size == 0:
                continue
            xs, ys = _tile_pixel_centers(view, tx, ty)
            _, _, _, A, _, processed, T_excl, T_final = _tile_weights(
                proj, sub, opac, xs, ys)
            weights = A * T_excl * processed
            tile_img = weights.T @ colors[sub]
            tile_feat = weights.T @ features[sub]
            sl_y = slice(ty * TILE_SIZE, ty * TILE_SIZE + len(ys))
            sl_x = slice(tx * TILE_SIZE, tx * TILE_SIZE + len(xs))
            shape2 = (len(ys), len(xs))
            image[sl_y, sl_x] = (tile_img + T_final[:, None] * background
                                 ).reshape(shape2 + (3,))
            fmap[sl_y, sl_x] = (tile_feat
                                + T_final[:, None] * feature_background
                                ).reshape(shape2 + (fdim,))
            alpha_map[sl_y, sl_x] = (1.0 - T_final).reshape(shape2)
            counts[sl_y, sl_x] = processed.sum(axis=0).reshape(shape2)

    state = RenderState(
        cloud_count=cloud.count,
        feature_dim=fdim,
        view=view,
        background=background,
        feature_background=feature_background,
        proj=proj,
        proj_state=proj_state,
        binning=binning,
        opacities=opac,
        colors=colors,
        features=features,
    )
    return RenderOutput(image=image, feature_map=FeatureMap(fmap),
                        alpha_map=alpha_map, contrib_counts=counts,
                        state=state)


@dataclass
class GradientBuffer:
    """Per-attribute gradient accumulators mirroring a cloud, plus the
    decoder parameters and the view-space statistics consumed by adaptive
    density control."""

    d_positions: np.ndarray
    d_rotations: np.ndarray
    d_log_scales: np.ndarray
    d_opacity_logits: np.ndarray
    d_colors: np.ndarray
    d_features: np.ndarray
    d_decoder_weights: np.ndarray | None = None
    d_decoder_bias: np.ndarray | None = None
    mean2d_norm_sum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seen_count: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # pixels actually touched, across renders; occluded Gaussians stay at 0
    contrib_count: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # strongest single-pixel weight across renders: how much this Gaussian
    # could possibly matter to any supervised pixel
    max_weight: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @staticmethod
    def zeros(count: int, feature_dim: int,
              decoder: ChannelDecoder | None = None) -> "GradientBuffer":
        return GradientBuffer(
            d_positions=np.zeros((count, 3)),
            d_rotations=np.zeros((count, 4)),
            d_log_scales=np.zeros((count, 3)),
            d_opacity_logits=np.zeros(count),
            d_colors=np.zeros((count, 3)),
            d_features=np.zeros((count, feature_dim)),
            d_decoder_weights=(np.zeros_like(decoder.weights)
                               if decoder is not None else None),
            d_decoder_bias=(np.zeros_like(decoder.bias)
                            if decoder is not None else None),
            mean2d_norm_sum=np.zeros(count),
            seen_count=np.zeros(count, dtype=np.int64),
            contrib_count=np.zeros(count, dtype=np.int64),
            max_weight=np.zeros(count),
        )

    def absorb(self, other: "GradientBuffer") -> None:
        """Add another buffer's gradients and view statistics into this one."""
        self.d_positions += other.d_positions
        self.d_rotations += other.d_rotations
        self.d_log_scales += other.d_log_scales
        self.d_opacity_logits += other.d_opacity_logits
        self.d_colors += other.d_colors
        self.d_features += other.d_features
        if self.d_decoder_weights is not None and other.d_decoder_weights is not None:
            self.d_decoder_weights += other.d_decoder_weights
            self.d_decoder_bias += other.d_decoder_bias
        self.mean2d_norm_sum += other.mean2d_norm_sum
        self.seen_count += other.seen_count
        self.contrib_count += other.contrib_count
        np.maximum(self.max_weight, other.max_weight, out=self.max_weight)


def view_space_grad_norms(buffer: GradientBuffer) -> np.ndarray:
    """Average per-render screen-space gradient magnitude per Gaussian.

    Gaussians never seen by any render return 0.
    """
    return buffer.mean2d_norm_sum / np.maximum(1, buffer.seen_count)


def render_backward(state: RenderState, grad_image: np.ndarray,
                    grad_feature: np.ndarray) -> GradientBuffer:
    """Exact gradients of the compositing pass.

    Non-culled Gaussians receive gradients on color, feature, opacity
    logit, and (through the projection backward) position, rotation, and
    log-scale.  The buffer also records this render's screen-space
    gradient norms for densification bookkeeping.
    """
    H, W = state.view.height, state.view.width
    grad_image = np.asarray(grad_image, dtype=np.float64)
    grad_feature = np.asarray(grad_feature, dtype=np.float64)
    if grad_image.shape != (H, W, 3):
        raise ValueError(f"grad_image shape {grad_image.shape} != {(H, W, 3)}")
    if grad_feature.shape != (H, W, state.feature_dim):
        raise ValueError(
            f"grad_feature shape {grad_feature.shape} != "
            f"{(H, W, state.feature_dim)}")

    proj = state.proj
    K = proj.count
    d_color_p = np.zeros((K, 3))
    d_feature_p = np.zeros((K, state.feature_dim))
    d_alpha_p = np.zeros(K)
    d_mean2d = np.zeros((K, 2))
    d_cov2d = np.zeros((K, 3))
    contrib_p = np.zeros(K, dtype=np.int64)
    max_w_p = np.zeros(K)

    inv = proj.inv_cov2d
    bg = state.background
    fbg = state.feature_background

    for ty in range(state.binning.tiles_y):
        for tx in range(state.binning.tiles_x):
            sub = state.binning.tile(ty, tx)
            if sub.size == 0:
                continue
            xs, ys = _tile_pixel_centers(state.view, tx, ty)
            dx, dy, w, A, clamped, processed, T_excl, T_final = _tile_weights(
                proj, sub, state.opacities, xs, ys)
            weights = A * T_excl * processed
            contrib_p[sub] += processed.sum(axis=1)
            max_w_p[sub] = np.maximum(max_w_p[sub], weights.max(axis=1))

            sl_y = slice(ty * TILE_SIZE, ty * TILE_SIZE + len(ys))
            sl_x = slice(tx * TILE_SIZE, tx * TILE_SIZE + len(xs))
            gc = grad_image[sl_y, sl_x].reshape(-1, 3)
            gf = grad_feature[sl_y, sl_x].reshape(-1, state.feature_dim)

            d_color_p[sub] += weights @ gc
            d_feature_p[sub] += weights @ gf

            # Combined cotangent of each contribution's payload.
            cf_dot = state.colors[sub] @ gc.T + state.features[sub] @ gf.T
            bg_dot = gc @ bg + gf @ fbg  # (P,)

            contrib = weights * cf_dot
            # suffix[i] = sum of contrib over j > i.
            suffix = np.flip(np.cumsum(np.flip(contrib, 0), axis=0), 0) - contrib
            B = 1.0 - A
            g_alpha = np.where(
                processed,
                T_excl * cf_dot - (suffix + T_final[None, :] * bg_dot[None, :]) / B,
                0.0,
            )
            # Through the clamp: zero where alpha_raw exceeded it.
            g_alpha = np.where(clamped, 0.0, g_alpha)

            d_alpha_p[sub] += (g_alpha * w).sum(axis=1)
            g_power = g_alpha * state.opacities[sub, None] * w

            ux = inv[sub, 0, None] * dx + inv[sub, 1, None] * dy
            uy = inv[sub, 1, None] * dx + inv[sub, 2, None] * dy
            d_mean2d[sub, 0] += (g_power * ux).sum(axis=1)
            d_mean2d[sub, 1] += (g_power * uy).sum(axis=1)
            d_cov2d[sub, 0] += (g_power * 0.5 * ux * ux).sum(axis=1)
            d_cov2d[sub, 1] += (g_power * ux * uy).sum(axis=1)
            d_cov2d[sub, 2] += (g_power * 0.5 * uy * uy).sum(axis=1)

    d_pos_p, d_quat_p, d_log_s_p = project_backward(
        state.proj_state, d_mean2d, d_cov2d)

    buf = GradientBuffer.zeros(state.cloud_count, state.feature_dim)
    src = proj.source_index
    np.add.at(buf.d_positions, src, d_pos_p)
    np.add.at(buf.d_rotations, src, d_quat_p)
    np.add.at(buf.d_log_scales, src, d_log_s_p)
    opac = state.opacities
    np.add.at(buf.d_opacity_logits, src, d_alpha_p * opac * (1.0 - opac))
    np.add.at(buf.d_colors, src, d_color_p)
    np.add.at(buf.d_features, src, d_feature_p)
    np.add.at(buf.mean2d_norm_sum, src, np.linalg.norm(d_mean2d, axis=1))
    np.add.at(buf.seen_count, src, 1)
    np.add.at(buf.contrib_count, src, contrib_p)
    np.maximum.at(buf.max_weight, src, max_w_p)
    return buf

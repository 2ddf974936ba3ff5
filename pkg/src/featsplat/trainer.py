"""Joint photometric + feature distillation training loop.

One step renders the scene at the scheduled resolution, decodes/resizes
the rendered feature map into the teacher's space, evaluates

    L = rgb_weight * [(1 - lambda) L1 + lambda D-SSIM]  +  gamma * L1_feat

and applies Adam with per-attribute learning rates.  Every
``densify_interval`` steps the cloud is refined: transparent or oversized
Gaussians are removed, under-reconstructing ones are cloned and
over-reconstructing ones split, following the accumulated screen-space
gradient statistics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .decoder import (ChannelDecoder, decode, decode_backward,
                      resize_bilinear, resize_bilinear_backward)
from .losses import feature_loss, photometric_loss, psnr
from .projection import quaternion_to_rotation
from .rasterizer import GradientBuffer, render, render_backward, view_space_grad_norms
from .scene import CameraView, FeatureMap, GaussianCloud, random_init

CLOUD_PARAMS = ("positions", "rotations", "log_scales", "opacity_logits",
                "colors", "features")


class TrainingAbort(RuntimeError):
    """Raised when a step produces a non-finite loss; no update applied."""


@dataclass
class TrainConfig:
    """Hyperparameters; defaults target the synthetic desk-scale scenes."""

    iterations: int = 2000
    gamma: float = 1.0              # feature-loss weight
    lambda_dssim: float = 0.2       # photometric mix
    rgb_weight: float = 1.0         # 0 disables the photometric path
    lr_position: float = 1.6e-4     # x scene_extent, decayed exponentially
    lr_position_final: float = 1.6e-6
    lr_rotation: float = 1e-3
    lr_scale: float = 5e-3
    lr_opacity: float = 5e-2
    lr_color: float = 2.5e-3
    lr_feature: float = 1e-3
    lr_decoder: float = 1e-4
    # Decoupled weight decay on per-Gaussian features (0 = off).  Feature
    # mass shared by overlapping contributors is gauge-free under the
    # pixel loss; decay selects the minimum-norm assignment, which points
    # every contributor's feature along its content's direction instead
    # of letting one carry junk that a sibling cancels.  Scaled by the
    # feature-loss weight so gamma = 0 still freezes features exactly.
    feature_decay: float = 0.0
    densify_interval: int = 100     # 0 disables refinement
    densify_grad_threshold: float = 2e-4
    size_threshold: float = 0.01    # split vs clone, fraction of extent
    opacity_prune_epsilon: float = 0.005
    prune_scale_fraction: float = 0.5
    # Prune Gaussians whose strongest per-pixel weight across the window
    # stayed below this (0 = off).  Catches opaque Gaussians buried
    # behind their own siblings: they get no supervision, so their
    # features are junk, and they surface when neighbors are edited away.
    min_contribution: float = 0.0
    densify_stop_fraction: float = 0.6
    resolution_steps: tuple = (250, 500)  # quarter res until [0], half until [1]
    background: tuple = (0.0, 0.0, 0.0)
    feature_background: object = 0.0  # scalar or length-N vector
    init_count: int = 1000
    feature_dim: int = 8
    init_extent: float = 1.0
    use_decoder: bool = False       # force a decoder even when N == M
    checkpoint_interval: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0.0 <= self.lambda_dssim <= 1.0:
            raise ValueError("lambda_dssim must lie in [0, 1]")
        for name in ("lr_position", "lr_rotation", "lr_scale", "lr_opacity",
                     "lr_color", "lr_feature", "lr_decoder"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


class AdamState:
    """Adam moment accumulators for cloud attributes and decoder params."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    @staticmethod
    def for_cloud(cloud: GaussianCloud,
                  decoder: ChannelDecoder | None = None) -> "AdamState":
        state = AdamState()
        for name in CLOUD_PARAMS:
            arr = getattr(cloud, name)
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        if decoder is not None:
            state.m["decoder_weights"] = np.zeros_like(decoder.weights)
            state.v["decoder_weights"] = np.zeros_like(decoder.weights)
            state.m["decoder_bias"] = np.zeros_like(decoder.bias)
            state.v["decoder_bias"] = np.zeros_like(decoder.bias)
        return state

    def update(self, name: str, param: np.ndarray, grad: np.ndarray,
               lr: float) -> np.ndarray:
        """One Adam update (bias-corrected); returns the new parameter."""
        m = self.m[name] = self.BETA1 * self.m[name] + (1 - self.BETA1) * grad
        v = self.v[name] = self.BETA2 * self.v[name] + (1 - self.BETA2) * grad ** 2
        m_hat = m / (1 - self.BETA1 ** self.t)
        v_hat = v / (1 - self.BETA2 ** self.t)
        return param - lr * m_hat / (np.sqrt(v_hat) + self.EPS)

    def reindex(self, keep: np.ndarray, n_new: int) -> None:
        """Mirror a densification: filter cloud moments, zero-pad new rows."""
        for name in CLOUD_PARAMS:
            for store in (self.m, self.v):
                old = store[name][keep]
                pad = np.zeros((n_new,) + old.shape[1:], dtype=old.dtype)
                store[name] = np.concatenate([old, pad], axis=0)


def resolution_factor(iteration: int, steps: tuple) -> float:
    if iteration <= steps[0]:
        return 0.25
    if iteration <= steps[1]:
        return 0.5
    return 1.0


def _scaled_ground_truth(image: np.ndarray, view: CameraView, factor: float):
    if factor == 1.0:
        return image, view
    sview = view.scaled(factor)
    scaled = resize_bilinear(FeatureMap(image), sview.height, sview.width)
    return scaled.data, sview


@dataclass
class StepResult:
    metrics: dict
    grads: GradientBuffer


def train_step(cloud: GaussianCloud, decoder: ChannelDecoder | None,
               view: CameraView, gt_image: np.ndarray, gt_features: FeatureMap,
               config: TrainConfig, adam: AdamState, iteration: int = 1,
               total_iterations: int | None = None) -> StepResult:
    """One optimization step; mutates cloud, decoder, and adam in place."""
    total = total_iterations or config.iterations or 1
    factor = resolution_factor(iteration, config.resolution_steps)
    gt_scaled, sview = _scaled_ground_truth(gt_image, view, factor)

    out = render(cloud, sview, background=config.background,
                 feature_background=config.feature_background)

    decoded = decode(out.feature_map, decoder) if decoder is not None \
        else out.feature_map
    if decoded.dim != gt_features.dim:
        raise ValueError(
            f"teacher feature dim {gt_features.dim} does not match "
            f"student output dim {decoded.dim}")
    resized = resize_bilinear(decoded, gt_features.height, gt_features.width)

    loss_rgb, grad_img = photometric_loss(out.image, gt_scaled,
                                          config.lambda_dssim)
    loss_f, grad_f_resized = feature_loss(resized, gt_features)
    total_loss = config.rgb_weight * loss_rgb + config.gamma * loss_f
    if not math.isfinite(total_loss):
        raise TrainingAbort(
            f"non-finite loss at iteration {iteration}: "
            f"rgb={loss_rgb} feature={loss_f}")

    grad_resized = config.gamma * grad_f_resized
    grad_decoded = resize_bilinear_backward(grad_resized, decoded.height,
                                            decoded.width)
    if decoder is not None:
        d_w, d_b, grad_rendered = decode_backward(grad_decoded,
                                                  out.feature_map, decoder)
    else:
        d_w = d_b = None
        grad_rendered = grad_decoded

    buf = render_backward(out.state, config.rgb_weight * grad_img,
                          grad_rendered)
    buf.d_decoder_weights = d_w
    buf.d_decoder_bias = d_b

    adam.t += 1
    progress = min(iteration / total, 1.0)
    lr_pos = (config.lr_position * cloud.scene_extent
              * (config.lr_position_final / config.lr_position) ** progress)
    cloud.positions = adam.update("positions", cloud.positions,
                                  buf.d_positions, lr_pos)
    cloud.rotations = adam.update("rotations", cloud.rotations,
                                  buf.d_rotations, config.lr_rotation)
    cloud.log_scales = adam.update("log_scales", cloud.log_scales,
                                   buf.d_log_scales, config.lr_scale)
    cloud.opacity_logits = adam.update("opacity_logits", cloud.opacity_logits,
                                       buf.d_opacity_logits, config.lr_opacity)
    cloud.colors = np.clip(
        adam.update("colors", cloud.colors, buf.d_colors, config.lr_color),
        0.0, 1.0)
    cloud.features = adam.update("features", cloud.features, buf.d_features,
                                 config.lr_feature)
    if config.feature_decay > 0.0 and config.gamma > 0.0:
        cloud.features *= 1.0 - config.lr_feature * config.feature_decay
    cloud.renormalize_rotations()
    if decoder is not None:
        decoder.weights = adam.update("decoder_weights", decoder.weights,
                                      d_w, config.lr_decoder)
        decoder.bias = adam.update("decoder_bias", decoder.bias, d_b,
                                   config.lr_decoder)

    metrics = {
        "total_loss": total_loss,
        "rgb_loss": loss_rgb,
        "feature_loss": loss_f,
        "psnr": psnr(out.image, gt_scaled),
    }
    return StepResult(metrics=metrics, grads=buf)


def densify_and_prune(cloud: GaussianCloud, grad_norms: np.ndarray,
                      adam: AdamState, config: TrainConfig,
                      rng: np.random.Generator,
                      contrib_counts: np.ndarray | None = None,
                      max_weights: np.ndarray | None = None
                      ) -> tuple[GaussianCloud, dict]:
    """Adaptive density control: remove, then split or clone survivors.

    Pruning removes Gaussians that are nearly transparent, wider than
    half the scene extent, or (when contribution counts are provided)
    that touched no pixel since the last refinement -- fully occluded
    Gaussians receive no gradient at all, so nothing else would ever
    remove the junk hiding behind opaque geometry.  Survivors whose
    average screen-space gradient exceeds the threshold are refined:
    large ones split into two children sampled inside the parent (scales
    shrunk by 1.6), small ones cloned in place.  Adam moments follow:
    survivors keep theirs, children start at zero.
    """
    extent = cloud.scene_extent
    scales = cloud.scales
    max_scale = scales.max(axis=1)
    prune = ((cloud.opacities < config.opacity_prune_epsilon)
             | (max_scale > config.prune_scale_fraction * extent))
    if contrib_counts is not None:
        prune |= np.asarray(contrib_counts) == 0
    if max_weights is not None and config.min_contribution > 0.0:
        prune |= np.asarray(max_weights) < config.min_contribution
    keep = ~prune
    if not np.any(keep):
        raise ValueError("all Gaussians pruned")

    arrays = {name: getattr(cloud, name)[keep] for name in CLOUD_PARAMS}
    norms = np.asarray(grad_norms)[keep]
    max_scale = max_scale[keep]

    hot = norms > config.densify_grad_threshold
    split = hot & (max_scale > config.size_threshold * extent)
    clone = hot & ~split

    n_split = int(split.sum())
    n_clone = int(clone.sum())
    new_parts = {name: [arr[~split]] for name, arr in arrays.items()}

    if n_split:
        parent = {name: arr[split] for name, arr in arrays.items()}
        R = quaternion_to_rotation(parent["rotations"])
        s = np.exp(parent["log_scales"])
        child_log_scales = parent["log_scales"] - math.log(1.6)
        for _ in range(2):
            noise = rng.standard_normal((n_split, 3))
            offsets = np.einsum("kij,kj->ki", R, s * noise)
            new_parts["positions"].append(parent["positions"] + offsets)
            new_parts["rotations"].append(parent["rotations"].copy())
            new_parts["log_scales"].append(child_log_scales.copy())
            new_parts["opacity_logits"].append(parent["opacity_logits"].copy())
            new_parts["colors"].append(parent["colors"].copy())
            new_parts["features"].append(parent["features"].copy())
    if n_clone:
        for name, arr in arrays.items():
            new_parts[name].append(arr[clone])

    merged = {name: np.concatenate(parts, axis=0)
              for name, parts in new_parts.items()}
    new_cloud = GaussianCloud(scene_extent=extent, **merged)

    # Moment bookkeeping: global keep mask relative to the old cloud is
    # keep-and-not-split; everything appended afterwards starts fresh.
    keep_idx = np.nonzero(keep)[0]
    survivors = np.zeros(cloud.count, dtype=bool)
    survivors[keep_idx[~split]] = True
    adam.reindex(survivors, 2 * n_split + n_clone)

    stats = {"pruned": int(prune.sum()), "split": n_split, "cloned": n_clone,
             "count": new_cloud.count}
    return new_cloud, stats


@dataclass
class TrainingData:
    """One supervised view: camera, RGB target, teacher feature map."""

    view: CameraView
    image: np.ndarray
    features: FeatureMap


@dataclass
class TrainResult:
    cloud: GaussianCloud
    decoder: ChannelDecoder | None
    log: list = field(default_factory=list)


def run_training(data: list[TrainingData], config: TrainConfig,
                 cloud: GaussianCloud | None = None,
                 decoder: ChannelDecoder | None = None,
                 log_path=None, checkpoint_fn=None) -> TrainResult:
    """Full optimization run over a dataset of supervised views.

    Views are cycled round-robin.  Renders happen at quarter resolution
    until the first schedule step, half until the second, then full.
    Densification runs every ``densify_interval`` iterations until 60% of
    the run is done.  Deterministic for a fixed seed.
    """
    config.validate()
    if not data:
        raise ValueError("need at least one training view")
    teacher_dim = data[0].features.dim
    for d in data:
        if d.features.dim != teacher_dim:
            raise ValueError("teacher maps disagree on feature dimension")

    rng = np.random.default_rng(config.seed)
    if cloud is None:
        cloud = random_init(config.init_count, config.feature_dim,
                            config.init_extent, config.seed)
    if decoder is None and (cloud.feature_dim != teacher_dim
                            or config.use_decoder):
        decoder = ChannelDecoder.create(cloud.feature_dim, teacher_dim,
                                        config.seed)
        # Start the bias at the teacher's mean response: the decoder's
        # learning rate is small, so a zero bias far from the data mean
        # costs most of the run to close.
        decoder.bias = np.mean(
            [d.features.data.mean(axis=(0, 1)) for d in data], axis=0)
    adam = AdamState.for_cloud(cloud, decoder)
    densify_stats = GradientBuffer.zeros(cloud.count, cloud.feature_dim)
    log: list[dict] = []

    stop_densify = config.densify_stop_fraction * config.iterations
    for it in range(1, config.iterations + 1):
        sample = data[(it - 1) % len(data)]
        result = train_step(cloud, decoder, sample.view, sample.image,
                            sample.features, config, adam, iteration=it,
                            total_iterations=config.iterations)
        densify_stats.absorb(result.grads)
        row = {"iteration": it, "num_gaussians": cloud.count,
               **result.metrics}
        log.append(row)

        if (config.densify_interval > 0 and it % config.densify_interval == 0
                and it <= stop_densify):
            norms = view_space_grad_norms(densify_stats)
            cloud, _ = densify_and_prune(
                cloud, norms, adam, config, rng,
                contrib_counts=densify_stats.contrib_count,
                max_weights=densify_stats.max_weight)
            densify_stats = GradientBuffer.zeros(cloud.count,
                                                 cloud.feature_dim)
        if (checkpoint_fn is not None and config.checkpoint_interval > 0
                and it % config.checkpoint_interval == 0):
            checkpoint_fn(it, cloud, decoder)

    if log_path is not None:
        write_metric_log(log, log_path)
    return TrainResult(cloud=cloud, decoder=decoder, log=log)


def write_metric_log(log: list, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "total_loss", "rgb_loss",
                         "feature_loss", "psnr", "num_gaussians"])
        for row in log:
            writer.writerow([row["iteration"], repr(float(row["total_loss"])),
                             repr(float(row["rgb_loss"])),
                             repr(float(row["feature_loss"])),
                             repr(float(row["psnr"])), row["num_gaussians"]])

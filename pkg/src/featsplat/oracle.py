"""Synthetic ground-truth scenes with known per-class feature embeddings.

Stands in for a 2D foundation-model encoder: a scene of colored Gaussian
blobs whose feature vectors are exactly their class embeddings, plus an
orbit camera rig.  Ground-truth images and teacher feature maps come from
``reference_render``, a deliberately independent compositor (global depth
sort, gaussian-major traversal, no tiles, scipy rotations) so that
agreement with the tile rasterizer is a meaningful cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .rasterizer import ALPHA_CLAMP, ALPHA_SKIP, TRANSMITTANCE_MIN
from .projection import LOWPASS, NEAR_PLANE, RADIUS_SIGMAS
from .scene import (CameraView, FeatureMap, GaussianCloud, logit,
                    orbit_camera, sigmoid)


@dataclass
class Codebook:
    """Fixed label-to-embedding table standing in for a text encoder."""

    labels: list
    embeddings: np.ndarray  # (C, M), unit rows
    background_label: int = 0

    def __post_init__(self):
        self.embeddings = np.atleast_2d(
            np.asarray(self.embeddings, dtype=np.float64))

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def label_index(self, name: str) -> int:
        try:
            return self.labels.index(name)
        except ValueError:
            raise KeyError(
                f"unknown label {name!r}; known labels: {', '.join(self.labels)}"
            ) from None

    def validate(self) -> None:
        if len(self.labels) != self.embeddings.shape[0]:
            raise ValueError("label count does not match embedding count")
        if not 0 <= self.background_label < len(self.labels):
            raise ValueError("background_label out of range")
        norms = np.linalg.norm(self.embeddings, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-5):
            raise ValueError("embeddings must be unit norm")
        gram = np.abs(self.embeddings @ self.embeddings.T)
        np.fill_diagonal(gram, 0.0)
        if gram.max(initial=0.0) > 0.3:
            raise ValueError("embeddings are not near-orthogonal")


@dataclass
class OracleScene:
    """Ground-truth cloud, its codebook, and the training camera rig."""

    cloud: GaussianCloud
    codebook: Codebook
    views: list
    class_ids: np.ndarray  # (N,) codebook label index per Gaussian
    extent: float = 1.0
    holdout_views: list = field(default_factory=list)


_PALETTE = np.array([
    [0.90, 0.18, 0.15],
    [0.20, 0.60, 0.95],
    [0.25, 0.80, 0.25],
    [0.95, 0.80, 0.10],
    [0.75, 0.25, 0.85],
    [0.95, 0.50, 0.10],
    [0.15, 0.85, 0.80],
    [0.90, 0.40, 0.60],
])


def make_codebook(num_classes: int, dim: int, seed: int = 0,
                  labels: list | None = None) -> Codebook:
    """Background plus ``num_classes`` mutually orthogonal unit embeddings."""
    if dim < num_classes + 1:
        raise ValueError("embedding dim too small for the label count")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, num_classes + 1)))
    if labels is None:
        labels = ["background"] + [f"class{k}" for k in range(num_classes)]
    return Codebook(labels=labels, embeddings=basis.T.copy(),
                    background_label=0)


def make_oracle_scene(num_classes: int, gaussians_per_class: int,
                      feature_dim: int, seed: int = 0, extent: float = 1.0,
                      num_views: int = 20, image_size: int = 64,
                      num_holdout: int = 4) -> OracleScene:
    """Blob-cluster scene: one compact colored cluster per class.

    Requires num_classes >= 2 and feature_dim >= 4 * num_classes so the
    codebook stays near-orthogonal with margin.  Deterministic per seed.
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if feature_dim < 4 * num_classes:
        raise ValueError("feature_dim must be at least 4x the class count")
    rng = np.random.default_rng(seed)
    codebook = make_codebook(num_classes, feature_dim, seed)

    n = num_classes * gaussians_per_class
    positions = np.empty((n, 3))
    rotations = np.empty((n, 4))
    log_scales = np.empty((n, 3))
    opacity_logits = np.empty(n)
    colors = np.empty((n, 3))
    features = np.empty((n, feature_dim))
    class_ids = np.empty(n, dtype=np.int64)

    ring = 0.55 * extent
    cluster_sigma = 0.065 * extent
    for k in range(num_classes):
        angle = 2 * math.pi * k / num_classes
        center = np.array([ring * math.cos(angle), ring * math.sin(angle),
                           0.12 * extent * math.sin(3 * angle)])
        sl = slice(k * gaussians_per_class, (k + 1) * gaussians_per_class)
        # truncated at 2 sigma so clusters have hard boundaries and never
        # leak stragglers into one another's footprint
        offsets = cluster_sigma * rng.standard_normal(
            (gaussians_per_class, 3))
        radii = np.linalg.norm(offsets, axis=1, keepdims=True)
        cap = 2.0 * cluster_sigma
        offsets *= np.minimum(1.0, cap / np.maximum(radii, 1e-12))
        positions[sl] = center + offsets
        q = rng.standard_normal((gaussians_per_class, 4))
        rotations[sl] = q / np.linalg.norm(q, axis=1, keepdims=True)
        log_scales[sl] = np.log(
            rng.uniform(0.028, 0.048, (gaussians_per_class, 3)) * extent)
        opacity_logits[sl] = logit(rng.uniform(0.88, 0.97, gaussians_per_class))
        colors[sl] = _PALETTE[k % len(_PALETTE)]
        features[sl] = codebook.embeddings[k + 1]
        class_ids[sl] = k + 1

    cloud = GaussianCloud(
        positions=positions, rotations=rotations, log_scales=log_scales,
        opacity_logits=opacity_logits, colors=colors, features=features,
        scene_extent=extent,
    )

    # Elevated enough that ring clusters never fully occlude one another.
    fx = 0.5 * image_size / math.tan(math.radians(27.5))
    elevation = 0.9
    cam_radius = 2.8 * extent
    views = [
        orbit_camera(2 * math.pi * i / num_views, elevation, cam_radius,
                     fx=fx, width=image_size, height=image_size)
        for i in range(num_views)
    ]
    half = math.pi / num_views  # offset half a step from every training view
    holdout = [
        orbit_camera(2 * math.pi * i / max(num_holdout, 1) + half, elevation,
                     cam_radius, fx=fx, width=image_size, height=image_size)
        for i in range(num_holdout)
    ]
    return OracleScene(cloud=cloud, codebook=codebook, views=views,
                       class_ids=class_ids, extent=extent,
                       holdout_views=holdout)


def reference_render(cloud: GaussianCloud, view: CameraView,
                     background=(0.0, 0.0, 0.0), feature_background=0.0):
    """Straightforward compositor used as the rasterizer's oracle.

    Walks Gaussians in global depth order and composites whole-image
    weight grids, equivalent to running the per-pixel front-to-back sum
    at every pixel independently.  Shares no code with the tile path:
    rotations come from scipy, radii from eigvalsh, and there is no
    binning or frustum bookkeeping beyond the near plane.

    Returns (image, FeatureMap, alpha_map).
    """
    view.validate()
    H, W = view.height, view.width
    fdim = cloud.feature_dim
    background = np.broadcast_to(
        np.asarray(background, dtype=np.float64), (3,)).copy()
    feature_background = np.broadcast_to(
        np.asarray(feature_background, dtype=np.float64), (fdim,)).copy()

    W_rot = view.rotation
    t_all = cloud.positions @ W_rot.T + view.translation
    order = np.lexsort((np.arange(cloud.count), t_all[:, 2]))

    # (x, y, z, w) convention in scipy vs (w, x, y, z) in the cloud.
    quats_xyzw = np.roll(cloud.rotations, -1, axis=1)
    R_all = Rotation.from_quat(quats_xyzw).as_matrix()
    opac = sigmoid(cloud.opacity_logits)

    px = np.arange(W) + 0.5
    py = np.arange(H) + 0.5
    grid_x, grid_y = np.meshgrid(px, py)

    image = np.zeros((H, W, 3))
    fmap = np.zeros((H, W, fdim))
    T = np.ones((H, W))

    for g in order:
        t = t_all[g]
        if t[2] <= NEAR_PLANE:
            continue
        S = np.diag(np.exp(cloud.log_scales[g]))
        M3 = R_all[g] @ S
        sigma = M3 @ M3.T
        J = np.array([
            [view.fx / t[2], 0.0, -view.fx * t[0] / t[2] ** 2],
            [0.0, view.fy / t[2], -view.fy * t[1] / t[2] ** 2],
        ])
        cov2d = J @ W_rot @ sigma @ W_rot.T @ J.T + LOWPASS * np.eye(2)
        mean = np.array([view.fx * t[0] / t[2] + view.cx,
                         view.fy * t[1] / t[2] + view.cy])
        radius = math.ceil(
            RADIUS_SIGMAS * math.sqrt(np.linalg.eigvalsh(cov2d)[-1]))
        inv = np.linalg.inv(cov2d)

        dx = grid_x - mean[0]
        dy = grid_y - mean[1]
        power = -0.5 * (inv[0, 0] * dx * dx + 2 * inv[0, 1] * dx * dy
                        + inv[1, 1] * dy * dy)
        alpha = np.minimum(opac[g] * np.exp(power), ALPHA_CLAMP)
        valid = (dx * dx + dy * dy <= radius ** 2) & (alpha >= ALPHA_SKIP)
        processed = valid & (T >= TRANSMITTANCE_MIN)
        weight = np.where(processed, alpha * T, 0.0)
        image += weight[:, :, None] * cloud.colors[g]
        fmap += weight[:, :, None] * cloud.features[g]
        T = np.where(processed, T * (1.0 - alpha), T)

    image += T[:, :, None] * background
    fmap += T[:, :, None] * feature_background
    return image, FeatureMap(fmap), 1.0 - T


def classify_composited(features: np.ndarray, codebook: Codebook,
                        alpha_map: np.ndarray | None = None,
                        alpha_threshold: float = 0.5) -> np.ndarray:
    """Per-pixel cosine argmax against the codebook; mostly-transparent
    pixels fall back to the background label."""
    flat = features.reshape(-1, codebook.dim)
    ids = np.argmax(flat @ codebook.embeddings.T, axis=1)
    ids = ids.reshape(features.shape[:2])
    if alpha_map is not None:
        ids = np.where(alpha_map < alpha_threshold, codebook.background_label,
                       ids)
    return ids


def teacher_render(scene: OracleScene, view: CameraView):
    """Ground truth for one view: RGB image, teacher features, class ids.

    Features composite over the background embedding, so an empty pixel's
    teacher feature is exactly that embedding and a rim pixel blends it
    with the class embedding in proportion to coverage.  The class-id map
    assigns the background wherever more than half the light passes
    through (T > 0.5), which for single-class pixels coincides with the
    feature-space argmax.
    """
    e_bg = scene.codebook.embeddings[scene.codebook.background_label]
    image, fmap, alpha = reference_render(scene.cloud, view,
                                          feature_background=e_bg)
    class_map = classify_composited(fmap.data, scene.codebook,
                                    alpha_map=alpha)
    return image, fmap, class_map


def training_data(scene: OracleScene, image_noise: float = 0.0,
                  seed: int = 0) -> list:
    """Supervised samples for every rig view.

    ``image_noise`` adds clamped Gaussian pixel noise to the RGB targets
    (teacher feature maps stay clean), emulating sensor noise so the
    photometric loss never starts at exactly zero.  Deterministic per
    seed and view index.
    """
    from .trainer import TrainingData

    samples = []
    for i, view in enumerate(scene.views):
        image, fmap, _ = teacher_render(scene, view)
        if image_noise > 0.0:
            noise_rng = np.random.default_rng((seed, i))
            image = np.clip(
                image + image_noise * noise_rng.standard_normal(image.shape),
                0.0, 1.0)
        samples.append(TrainingData(view=view, image=image, features=fmap))
    return samples


def write_dataset(scene: OracleScene, out_dir,
                  include_holdout: bool = False) -> None:
    """Materialize the dataset directory layout consumed by training."""
    from . import fileio, viz

    out = Path(out_dir)
    (out / "imgs").mkdir(parents=True, exist_ok=True)
    (out / "feats").mkdir(exist_ok=True)
    (out / "classes").mkdir(exist_ok=True)
    views = list(scene.views) + (list(scene.holdout_views)
                                 if include_holdout else [])
    fileio.save_views(views, out / "views.txt")
    fileio.save_codebook(scene.codebook, out / "codebook.json")
    for i, view in enumerate(views):
        image, fmap, class_map = teacher_render(scene, view)
        viz.save_png(image, out / "imgs" / f"{i:04d}.png")
        fileio.save_tensor(fmap.data, out / "feats" / f"{i:04d}.ftens")
        viz.save_png_gray(class_map.astype(np.uint8),
                          out / "classes" / f"{i:04d}.png")


def load_dataset(dataset_dir):
    """Read a dataset directory back into training samples.

    Returns (samples, codebook, class_maps).
    """
    from . import fileio, viz
    from .trainer import TrainingData

    root = Path(dataset_dir)
    views = fileio.load_views(root / "views.txt")
    codebook = fileio.load_codebook(root / "codebook.json")
    samples = []
    class_maps = []
    for i, view in enumerate(views):
        image = viz.load_png(root / "imgs" / f"{i:04d}.png")
        fmap = FeatureMap(fileio.load_tensor(root / "feats" / f"{i:04d}.ftens"))
        samples.append(TrainingData(view=view, image=image, features=fmap))
        class_path = root / "classes" / f"{i:04d}.png"
        class_maps.append(viz.load_png_gray(class_path)
                          if class_path.exists() else None)
    return samples, codebook, class_maps

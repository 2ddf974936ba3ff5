"""Scene representation: Gaussian clouds, cameras, and feature maps.

A scene is a flat collection of anisotropic 3D Gaussians.  Each Gaussian
carries a position, an orientation quaternion, per-axis scales (stored in
log space so unconstrained optimization keeps them positive), an opacity
logit, a diffuse RGB color, and an N-dimensional semantic feature vector.
All per-Gaussian attributes are stored as contiguous arrays (one array per
attribute) rather than as a list of objects, which is what every numeric
operation in this package wants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Opacity logit assigned by edit operations that kill a Gaussian.  Finite so
# clouds stay serializable, but far enough out that sigmoid underflows to
# exactly 0.0 in both float32 and float64.
KILL_LOGIT = -1.0e4


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    """Inverse of sigmoid; p must lie strictly inside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def normalize_quaternions(q: np.ndarray) -> np.ndarray:
    """Return unit-norm copies of (N, 4) quaternions (w, x, y, z)."""
    norms = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm quaternion cannot be normalized")
    return q / norms


@dataclass
class Gaussian:
    """Single-Gaussian view, mostly for construction and inspection.

    ``scale`` is the actual positive per-axis extent; the cloud stores it
    as log-scale internally.
    """

    position: np.ndarray    # (3,)
    rotation: np.ndarray    # (4,) unit quaternion, (w, x, y, z)
    scale: np.ndarray       # (3,) strictly positive
    opacity_logit: float
    color: np.ndarray       # (3,) in [0, 1]
    feature: np.ndarray     # (N,)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))


@dataclass
class GaussianCloud:
    """Structure-of-arrays container for a set of 3D Gaussians.

    Attributes:
        positions: (N, 3) world-space centers.
        rotations: (N, 4) unit quaternions (w, x, y, z).
        log_scales: (N, 3) log of per-axis scales.
        opacity_logits: (N,) pre-sigmoid opacities.
        colors: (N, 3) diffuse RGB in [0, 1].
        features: (N, F) semantic feature vectors, any F >= 1.
        scene_extent: radius of the bounding sphere of the initial
            positions; fixed at creation and used to scale densification
            thresholds.
    """

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray
    features: np.ndarray
    scene_extent: float = 1.0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        self.rotations = np.atleast_2d(np.asarray(self.rotations, dtype=np.float64))
        self.log_scales = np.atleast_2d(np.asarray(self.log_scales, dtype=np.float64))
        self.opacity_logits = np.atleast_1d(
            np.asarray(self.opacity_logits, dtype=np.float64)
        )
        self.colors = np.atleast_2d(np.asarray(self.colors, dtype=np.float64))
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.count

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def gaussian(self, i: int) -> Gaussian:
        """Copy of Gaussian ``i`` as a standalone record."""
        return Gaussian(
            position=self.positions[i].copy(),
            rotation=self.rotations[i].copy(),
            scale=np.exp(self.log_scales[i]),
            opacity_logit=float(self.opacity_logits[i]),
            color=self.colors[i].copy(),
            feature=self.features[i].copy(),
        )

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            positions=self.positions.copy(),
            rotations=self.rotations.copy(),
            log_scales=self.log_scales.copy(),
            opacity_logits=self.opacity_logits.copy(),
            colors=self.colors.copy(),
            features=self.features.copy(),
            scene_extent=self.scene_extent,
        )

    def validate(self) -> None:
        """Raise ValueError on any broken structural invariant."""
        n = self.count
        if n == 0:
            raise ValueError("empty cloud")
        shapes = {
            "positions": (n, 3),
            "rotations": (n, 4),
            "log_scales": (n, 3),
            "colors": (n, 3),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        if self.opacity_logits.shape != (n,):
            raise ValueError("opacity_logits shape mismatch")
        if self.features.shape[0] != n or self.features.ndim != 2:
            raise ValueError("features shape mismatch")
        for name in ("positions", "rotations", "log_scales", "opacity_logits",
                     "colors", "features"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                bad = int(np.argwhere(~np.isfinite(arr))[0][0])
                raise ValueError(f"non-finite value in {name} at record {bad}")
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-3):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(f"non-unit rotation at record {bad}")
        if np.any(self.colors < 0.0) or np.any(self.colors > 1.0):
            bad = int(np.argwhere((self.colors < 0) | (self.colors > 1))[0][0])
            raise ValueError(f"color outside [0, 1] at record {bad}")
        if not self.scene_extent > 0:
            raise ValueError("scene_extent must be positive")

    def renormalize_rotations(self) -> None:
        self.rotations = normalize_quaternions(self.rotations)

    @staticmethod
    def from_gaussians(gaussians: list[Gaussian],
                       scene_extent: float | None = None) -> "GaussianCloud":
        if not gaussians:
            raise ValueError("empty cloud")
        positions = np.stack([g.position for g in gaussians]).astype(np.float64)
        cloud = GaussianCloud(
            positions=positions,
            rotations=np.stack([g.rotation for g in gaussians]),
            log_scales=np.log(np.stack([g.scale for g in gaussians])),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            colors=np.stack([g.color for g in gaussians]),
            features=np.stack([g.feature for g in gaussians]),
            scene_extent=1.0,
        )
        cloud.scene_extent = (
            float(scene_extent) if scene_extent is not None
            else bounding_radius(positions)
        )
        return cloud


def bounding_radius(positions: np.ndarray) -> float:
    """Radius of the centroid-anchored bounding sphere, floored above zero."""
    center = positions.mean(axis=0)
    r = float(np.max(np.linalg.norm(positions - center, axis=1), initial=0.0))
    return max(r, 1e-6)


def compact_cloud(cloud: GaussianCloud) -> GaussianCloud:
    """Drop Gaussians whose opacity is exactly zero (killed by edits)."""
    keep = cloud.opacities > 0.0
    if not np.any(keep):
        raise ValueError("compaction would empty the cloud")
    return GaussianCloud(
        positions=cloud.positions[keep],
        rotations=cloud.rotations[keep],
        log_scales=cloud.log_scales[keep],
        opacity_logits=cloud.opacity_logits[keep],
        colors=cloud.colors[keep],
        features=cloud.features[keep],
        scene_extent=cloud.scene_extent,
    )


def random_init(count: int, feature_dim: int, extent: float,
                seed: int) -> GaussianCloud:
    """Random cloud to start optimization from.

    Positions are uniform in the cube [-extent, extent]^3, rotations are
    identity, scales isotropic at extent/cbrt(count), opacity starts at
    0.1, colors uniform, and features are small Gaussian noise.  All
    values are quantized to float32 so checkpoints round-trip bit-exactly.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    rng = np.random.default_rng(seed)
    positions = rng.uniform(-extent, extent, size=(count, 3))
    rotations = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (count, 1))
    iso_scale = extent / count ** (1.0 / 3.0)
    log_scales = np.full((count, 3), math.log(iso_scale))
    opacity_logits = np.full(count, float(logit(0.1)))
    colors = rng.uniform(0.0, 1.0, size=(count, 3))
    features = rng.standard_normal((count, feature_dim)) * 0.01

    def q32(a):
        return a.astype(np.float32).astype(np.float64)

    cloud = GaussianCloud(
        positions=q32(positions),
        rotations=q32(rotations),
        log_scales=q32(log_scales),
        opacity_logits=q32(opacity_logits),
        colors=q32(colors),
        features=q32(features),
        scene_extent=1.0,
    )
    cloud.scene_extent = max(bounding_radius(cloud.positions), 1e-3 * extent)
    return cloud


@dataclass
class CameraView:
    """Pinhole camera: intrinsics plus a rigid world-to-camera transform.

    ``world_to_camera`` is 4x4; a world point x maps to camera space as
    t = (world_to_camera @ [x, 1])[:3], with the camera looking down +z.
    Pixel (row i, col j) has center (j + 0.5, i + 0.5).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray = field(
        default_factory=lambda: np.eye(4, dtype=np.float64))

    def __post_init__(self):
        self.world_to_camera = np.asarray(self.world_to_camera,
                                          dtype=np.float64).reshape(4, 4)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    def validate(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        R = self.rotation
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-5):
            raise ValueError("world_to_camera rotation block is not orthonormal")
        if np.linalg.det(R) < 0:
            raise ValueError("world_to_camera rotation block has negative determinant")

    def scaled(self, factor: float) -> "CameraView":
        """Camera for the same view rendered at a scaled resolution."""
        return CameraView(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            width=max(1, int(round(self.width * factor))),
            height=max(1, int(round(self.height * factor))),
            world_to_camera=self.world_to_camera.copy(),
        )


def look_at_camera(eye, target, up, fx: float, width: int, height: int,
                   fy: float | None = None) -> CameraView:
    """Camera at ``eye`` looking toward ``target`` with +z forward."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    forward = target - eye
    fn = np.linalg.norm(forward)
    if fn < 1e-12:
        raise ValueError("eye and target coincide")
    forward = forward / fn
    right = np.cross(forward, up)
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise ValueError("up vector is parallel to the view direction")
    right = right / rn
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])  # rows: camera axes in world frame
    w2c = np.eye(4)
    w2c[:3, :3] = R
    w2c[:3, 3] = -R @ eye
    return CameraView(fx=fx, fy=fy if fy is not None else fx,
                      cx=width / 2.0, cy=height / 2.0,
                      width=width, height=height, world_to_camera=w2c)


def orbit_camera(theta: float, phi: float, radius: float, fx: float,
                 width: int, height: int, target=(0.0, 0.0, 0.0)) -> CameraView:
    """Orbit rig camera: azimuth theta, elevation phi, distance radius."""
    target = np.asarray(target, dtype=np.float64)
    eye = target + radius * np.array([
        math.cos(phi) * math.cos(theta),
        math.cos(phi) * math.sin(theta),
        math.sin(phi),
    ])
    return look_at_camera(eye, target, up=(0.0, 0.0, 1.0),
                          fx=fx, width=width, height=height)


@dataclass
class FeatureMap:
    """Dense H x W x D grid of feature vectors."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError("feature map data must be H x W x D")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    def validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite value in feature map")

    def copy(self) -> "FeatureMap":
        return FeatureMap(self.data.copy())

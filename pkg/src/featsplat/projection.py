"""Screen-space projection of 3D Gaussians and tile assignment.

Each Gaussian's world covariance is rebuilt from its quaternion and scales
as Sigma = R S S^T R^T (positive semi-definite by construction), then
pushed through the camera with the affine approximation of the perspective
map: cov2d = J W Sigma W^T J^T + 0.3 I, where W is the rotation block of
world-to-camera and J the 2x3 perspective Jacobian at the camera-space
center.  The +0.3 low-pass term keeps every splat invertible and at least
about a pixel wide.

Culling: Gaussians behind the near plane (z <= 0.01) or whose 3-sigma
pixel disk misses the image rectangle are dropped.  The surviving set is
binned into 16x16-pixel tiles by exact disk/rectangle overlap, each tile
sorted front to back (ties broken by source index for determinism).

The backward pass is hand-written; every formula here is covered by
central-finite-difference checks in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import CameraView, GaussianCloud

TILE_SIZE = 16
NEAR_PLANE = 0.01
LOWPASS = 0.3
RADIUS_SIGMAS = 3.0


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """(K, 4) quaternions (w, x, y, z), any norm -> (K, 3, 3) rotations."""
    q = np.asarray(q, dtype=np.float64)
    qn = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = qn[..., 0], qn[..., 1], qn[..., 2], qn[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def build_covariance(rotation: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """World covariance R S S^T R^T for quaternions and positive scales.

    Accepts a single (4,)/(3,) pair or batched (K, 4)/(K, 3) arrays.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    single = rotation.ndim == 1
    R = quaternion_to_rotation(np.atleast_2d(rotation))
    M = R * np.atleast_2d(scale)[:, None, :]
    cov = M @ np.swapaxes(M, -1, -2)
    return cov[0] if single else cov


@dataclass
class ProjectedGaussians:
    """Screen-space Gaussians that survived culling (structure of arrays).

    ``source_index`` maps each row back into the cloud.  ``cov2d`` holds
    the (xx, xy, yy) components; ``inv_cov2d`` likewise for the inverse.
    """

    mean2d: np.ndarray        # (K, 2) pixels
    cov2d: np.ndarray         # (K, 3) = (a, b, c) for [[a, b], [b, c]]
    inv_cov2d: np.ndarray     # (K, 3)
    depth: np.ndarray         # (K,) camera-space z
    radius: np.ndarray        # (K,) pixel radius of the 3-sigma disk
    source_index: np.ndarray  # (K,) int

    @property
    def count(self) -> int:
        return self.mean2d.shape[0]


@dataclass
class ProjectionState:
    """Forward-pass intermediates retained for the backward pass."""

    view: CameraView
    q_raw: np.ndarray      # (K, 4) quaternions as stored (pre-normalization)
    scales: np.ndarray     # (K, 3)
    t_cam: np.ndarray      # (K, 3)
    R_world: np.ndarray    # (K, 3, 3) from quaternion
    M: np.ndarray          # (K, 3, 3) = R diag(s)
    cov3d: np.ndarray      # (K, 3, 3)
    J: np.ndarray          # (K, 2, 3)


def project_cloud(cloud: GaussianCloud,
                  view: CameraView) -> tuple[ProjectedGaussians, ProjectionState]:
    """Project every Gaussian; cull against near plane and image bounds."""
    if cloud.count == 0:
        raise ValueError("empty cloud")
    W_rot = view.rotation
    t_all = cloud.positions @ W_rot.T + view.translation

    in_front = t_all[:, 2] > NEAR_PLANE
    idx = np.nonzero(in_front)[0]
    t = t_all[idx]
    q = cloud.rotations[idx]
    s = np.exp(cloud.log_scales[idx])

    R = quaternion_to_rotation(q)
    M = R * s[:, None, :]
    cov3d = M @ np.swapaxes(M, 1, 2)

    fx, fy = view.fx, view.fy
    tz = t[:, 2]
    J = np.zeros((len(idx), 2, 3))
    J[:, 0, 0] = fx / tz
    J[:, 0, 2] = -fx * t[:, 0] / tz ** 2
    J[:, 1, 1] = fy / tz
    J[:, 1, 2] = -fy * t[:, 1] / tz ** 2

    V = J @ W_rot  # (K, 2, 3)
    cov2d_full = V @ cov3d @ np.swapaxes(V, 1, 2)
    a = cov2d_full[:, 0, 0] + LOWPASS
    b = cov2d_full[:, 0, 1]
    c = cov2d_full[:, 1, 1] + LOWPASS

    mean2d = np.stack([fx * t[:, 0] / tz + view.cx,
                       fy * t[:, 1] / tz + view.cy], axis=1)

    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum((0.5 * (a - c)) ** 2 + b ** 2, 0.0))
    radius = np.ceil(RADIUS_SIGMAS * np.sqrt(lam_max))

    det = a * c - b ** 2
    inv = np.stack([c / det, -b / det, a / det], axis=1)

    # Nearest point of the image rectangle [0, W] x [0, H] to the center.
    nx = np.clip(mean2d[:, 0], 0.0, view.width) - mean2d[:, 0]
    ny = np.clip(mean2d[:, 1], 0.0, view.height) - mean2d[:, 1]
    on_screen = nx ** 2 + ny ** 2 <= radius ** 2

    keep = np.nonzero(on_screen)[0]
    proj = ProjectedGaussians(
        mean2d=mean2d[keep],
        cov2d=np.stack([a, b, c], axis=1)[keep],
        inv_cov2d=inv[keep],
        depth=tz[keep],
        radius=radius[keep],
        source_index=idx[keep],
    )
    state = ProjectionState(
        view=view,
        q_raw=cloud.rotations[idx][keep],
        scales=s[keep],
        t_cam=t[keep],
        R_world=R[keep],
        M=M[keep],
        cov3d=cov3d[keep],
        J=J[keep],
    )
    return proj, state


@dataclass
class TileBinning:
    """Per-tile front-to-back lists of projected-Gaussian indices."""

    tiles_x: int
    tiles_y: int
    tile_indices: list  # list of int arrays, index into ProjectedGaussians

    def tile(self, ty: int, tx: int) -> np.ndarray:
        return self.tile_indices[ty * self.tiles_x + tx]


def _disk_overlaps_rect(center, radius, x0, y0, x1, y1) -> np.ndarray:
    dx = np.clip(center[:, 0], x0, x1) - center[:, 0]
    dy = np.clip(center[:, 1], y0, y1) - center[:, 1]
    return dx ** 2 + dy ** 2 <= radius ** 2


def bin_tiles(proj: ProjectedGaussians, view: CameraView) -> TileBinning:
    """Assign each projected Gaussian to every tile its disk overlaps.

    Tile lists come out sorted by (depth, source_index) ascending, so the
    result is independent of input order.
    """
    tiles_x = (view.width + TILE_SIZE - 1) // TILE_SIZE
    tiles_y = (view.height + TILE_SIZE - 1) // TILE_SIZE
    buckets: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]

    order = np.lexsort((proj.source_index, proj.depth))
    for k in order:
        cx, cy = proj.mean2d[k]
        r = proj.radius[k]
        tx0 = max(int((cx - r) // TILE_SIZE), 0)
        tx1 = min(int((cx + r) // TILE_SIZE), tiles_x - 1)
        ty0 = max(int((cy - r) // TILE_SIZE), 0)
        ty1 = min(int((cy + r) // TILE_SIZE), tiles_y - 1)
        for ty in range(ty0, ty1 + 1):
            ry0, ry1 = ty * TILE_SIZE, (ty + 1) * TILE_SIZE
            for tx in range(tx0, tx1 + 1):
                rx0, rx1 = tx * TILE_SIZE, (tx + 1) * TILE_SIZE
                ddx = min(max(cx, rx0), rx1) - cx
                ddy = min(max(cy, ry0), ry1) - cy
                if ddx * ddx + ddy * ddy <= r * r:
                    buckets[ty * tiles_x + tx].append(k)
    return TileBinning(
        tiles_x=tiles_x,
        tiles_y=tiles_y,
        tile_indices=[np.asarray(b, dtype=np.intp) for b in buckets],
    )


# Derivatives of the rotation matrix w.r.t. the normalized quaternion
# components, as 4 stacked 3x3 patterns built per Gaussian.
def _rotation_quat_jacobian(qn: np.ndarray) -> np.ndarray:
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    zero = np.zeros_like(w)
    dRdw = 2 * np.stack([
        np.stack([zero, -z, y], axis=-1),
        np.stack([z, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=1)
    dRdx = 2 * np.stack([
        np.stack([zero, y, z], axis=-1),
        np.stack([y, -2 * x, -w], axis=-1),
        np.stack([z, w, -2 * x], axis=-1),
    ], axis=1)
    dRdy = 2 * np.stack([
        np.stack([-2 * y, x, w], axis=-1),
        np.stack([x, zero, z], axis=-1),
        np.stack([-w, z, -2 * y], axis=-1),
    ], axis=1)
    dRdz = 2 * np.stack([
        np.stack([-2 * z, -w, x], axis=-1),
        np.stack([w, -2 * z, y], axis=-1),
        np.stack([x, y, zero], axis=-1),
    ], axis=1)
    return np.stack([dRdw, dRdx, dRdy, dRdz], axis=1)  # (K, 4, 3, 3)


def project_backward(state: ProjectionState, grad_mean2d: np.ndarray,
                     grad_cov2d: np.ndarray):
    """Pull gradients on (mean2d, cov2d) back to (position, rotation, scale).

    ``grad_cov2d`` uses the (a, b, c) component convention.  Returns
    gradients w.r.t. world position, the stored (unnormalized) quaternion,
    and log-scale, for the non-culled set described by ``state``.
    """
    K = state.t_cam.shape[0]
    grad_mean2d = np.asarray(grad_mean2d, dtype=np.float64).reshape(K, 2)
    grad_cov2d = np.asarray(grad_cov2d, dtype=np.float64).reshape(K, 3)

    view = state.view
    fx, fy = view.fx, view.fy
    W_rot = view.rotation
    t = state.t_cam
    tz = t[:, 2]
    J = state.J
    V = J @ W_rot

    # cov2d entries: a = v0 S v0, b = v0 S v1, c = v1 S v1 with S = cov3d.
    # d a / d S = v0 v0^T etc., so dL/dS = sum of the rank-1 outer products.
    v0 = V[:, 0, :]
    v1 = V[:, 1, :]
    dL_dS = (grad_cov2d[:, 0, None, None] * np.einsum("ki,kj->kij", v0, v0)
             + grad_cov2d[:, 1, None, None] * np.einsum("ki,kj->kij", v0, v1)
             + grad_cov2d[:, 2, None, None] * np.einsum("ki,kj->kij", v1, v1))

    # Sigma = M M^T  =>  dL/dM = (dL/dS + dL/dS^T) M.
    sym = dL_dS + np.swapaxes(dL_dS, 1, 2)
    dL_dM = sym @ state.M

    # M = R diag(s): columns of M are s_k * R[:, k].
    dL_dR = dL_dM * state.scales[:, None, :]
    dL_ds = np.einsum("kij,kij->kj", dL_dM, state.R_world)
    dL_dlog_s = dL_ds * state.scales

    # Chain through the quaternion normalization.
    qn = state.q_raw / np.linalg.norm(state.q_raw, axis=1, keepdims=True)
    dR_dq = _rotation_quat_jacobian(qn)  # (K, 4, 3, 3)
    dL_dqn = np.einsum("kij,kqij->kq", dL_dR, dR_dq)
    norm = np.linalg.norm(state.q_raw, axis=1, keepdims=True)
    dL_dq = (dL_dqn - qn * np.sum(dL_dqn * qn, axis=1, keepdims=True)) / norm

    # Gradients reaching the camera-space point t: through mean2d (whose
    # Jacobian is exactly J) and through J's own dependence on t.
    dL_dt = np.einsum("kij,ki->kj", J, grad_mean2d)

    # dL/dJ for cov2d = J Sigma_cam J^T with Sigma_cam = W Sigma W^T:
    # a = j0 C j0, b = j0 C j1, c = j1 C j1 with C = sigma_cam, j = rows of J.
    sigma_cam = np.einsum("ij,kjl,ml->kim", W_rot, state.cov3d, W_rot)
    j0 = J[:, 0, :]
    j1 = J[:, 1, :]
    Cj0 = np.einsum("kij,kj->ki", sigma_cam, j0)
    Cj1 = np.einsum("kij,kj->ki", sigma_cam, j1)
    dL_dj0 = 2 * grad_cov2d[:, 0, None] * Cj0 + grad_cov2d[:, 1, None] * Cj1
    dL_dj1 = 2 * grad_cov2d[:, 2, None] * Cj1 + grad_cov2d[:, 1, None] * Cj0

    inv_z = 1.0 / tz
    inv_z2 = inv_z ** 2
    inv_z3 = inv_z2 * inv_z
    dL_dt[:, 0] += dL_dj0[:, 2] * (-fx * inv_z2)
    dL_dt[:, 1] += dL_dj1[:, 2] * (-fy * inv_z2)
    dL_dt[:, 2] += (dL_dj0[:, 0] * (-fx * inv_z2)
                    + dL_dj1[:, 1] * (-fy * inv_z2)
                    + dL_dj0[:, 2] * (2 * fx * t[:, 0] * inv_z3)
                    + dL_dj1[:, 2] * (2 * fy * t[:, 1] * inv_z3))

    dL_dpos = dL_dt @ W_rot
    return dL_dpos, dL_dq, dL_dlog_s

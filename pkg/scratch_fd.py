"""Scratch: quick FD sanity check of the full render backward."""
import numpy as np

from featsplat.scene import CameraView, GaussianCloud, logit
from featsplat.rasterizer import render, render_backward

rng = np.random.default_rng(7)
n = 8

def make_cloud():
    # depths well separated; footprints covering the whole 8x8 image
    z = 4.0 + 2.0 * (np.arange(n) + rng.uniform(0.1, 0.9, n)) / n
    xy = rng.uniform(-0.4, 0.4, (n, 2)) * z[:, None] / 8.0
    positions = np.column_stack([xy, z])
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianCloud(
        positions=positions,
        rotations=q,
        log_scales=np.log(rng.uniform(2.0, 3.5, (n, 3))),
        opacity_logits=logit(rng.uniform(0.25, 0.55, n)),
        colors=rng.uniform(0.1, 0.9, (n, 3)),
        features=rng.standard_normal((n, 4)),
        scene_extent=1.0,
    )

cloud = make_cloud()
view = CameraView(fx=8.0, fy=8.0, cx=4.0, cy=4.0, width=8, height=8)
w_img = rng.standard_normal((8, 8, 3))
w_feat = rng.standard_normal((8, 8, 4))
bg = np.array([0.3, 0.2, 0.6])

def loss(c):
    out = render(c, view, background=bg)
    return float(np.sum(out.image * w_img) + np.sum(out.feature_map.data * w_feat))

out = render(cloud, view, background=bg)
buf = render_backward(out.state, w_img, w_feat)

params = {
    "positions": buf.d_positions,
    "rotations": buf.d_rotations,
    "log_scales": buf.d_log_scales,
    "opacity_logits": buf.d_opacity_logits,
    "colors": buf.d_colors,
    "features": buf.d_features,
}
h = 1e-3
worst = 0.0
for name, analytic in params.items():
    arr = getattr(cloud, name)
    fd = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        c2 = cloud.copy()
        getattr(c2, name)[idx] += h
        lp = loss(c2)
        getattr(c2, name)[idx] -= 2 * h
        lm = loss(c2)
        fd[idx] = (lp - lm) / (2 * h)
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-6)
    rel = np.abs(fd - analytic) / denom
    mask = np.maximum(np.abs(fd), np.abs(analytic)) > 1e-6
    m = rel[mask].max() if mask.any() else 0.0
    worst = max(worst, m)
    print(f"{name:16s} max rel err {m:.3e}   (|g| max {np.abs(analytic).max():.3e})")
print("worst:", worst)

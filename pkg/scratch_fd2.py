"""Scratch: worst-case FD rel error across many scenes + decoder path."""
import numpy as np

from featsplat.scene import CameraView, GaussianCloud, logit, FeatureMap
from featsplat.rasterizer import render, render_backward
from featsplat.decoder import ChannelDecoder, decode, decode_backward, resize_bilinear, resize_bilinear_backward

H = W = 8
view = CameraView(fx=8.0, fy=8.0, cx=4.0, cy=4.0, width=W, height=H)

def make_cloud(rng, n):
    # Depth slots with guaranteed separation; footprints cover the image.
    slots = 4.0 + 2.5 * (np.arange(n) + rng.uniform(0.15, 0.85, n)) / n
    z = slots
    xy = rng.uniform(-1.5 / 8.0, 1.5 / 8.0, (n, 2)) * z[:, None]
    positions = np.column_stack([xy, z])
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianCloud(
        positions=positions,
        rotations=q,
        log_scales=np.log(rng.uniform(2.8, 4.2, (n, 3))),
        opacity_logits=logit(rng.uniform(0.30, 0.55, n)),
        colors=rng.uniform(0.1, 0.9, (n, 3)),
        features=rng.standard_normal((n, 4)),
        scene_extent=1.0,
    )

def full_loss(cloud, dec, wi, wf):
    out = render(cloud, view, background=bg)
    decoded = decode(out.feature_map, dec)
    resized = resize_bilinear(decoded, 10, 10)
    return float(np.sum(out.image * wi) + np.sum(resized.data * wf))

bg = np.array([0.25, 0.4, 0.1])
worst = 0.0
worst_info = None
N_SCENES = 40
for s in range(N_SCENES):
    rng = np.random.default_rng(1000 + s)
    n = int(rng.integers(4, 11))
    cloud = make_cloud(rng, n)
    dec = ChannelDecoder.create(4, 6, seed=s)
    wi = rng.standard_normal((H, W, 3))
    wf = rng.standard_normal((10, 10, 6))

    out = render(cloud, view, background=bg)
    decoded = decode(out.feature_map, dec)
    g_resized = wf
    g_decoded = resize_bilinear_backward(g_resized, H, W)
    d_w, d_b, g_feat = decode_backward(g_decoded, out.feature_map, dec)
    buf = render_backward(out.state, wi, g_feat)

    blocks = {
        "positions": (cloud.positions, buf.d_positions),
        "rotations": (cloud.rotations, buf.d_rotations),
        "log_scales": (cloud.log_scales, buf.d_log_scales),
        "opacity_logits": (cloud.opacity_logits, buf.d_opacity_logits),
        "colors": (cloud.colors, buf.d_colors),
        "features": (cloud.features, buf.d_features),
    }
    h = 1e-3
    for name, (arr, analytic) in blocks.items():
        fd = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            c2 = cloud.copy(); getattr(c2, name)[idx] += h
            lp = full_loss(c2, dec, wi, wf)
            c2 = cloud.copy(); getattr(c2, name)[idx] -= h
            lm = full_loss(c2, dec, wi, wf)
            fd[idx] = (lp - lm) / (2 * h)
        mask = np.maximum(np.abs(fd), np.abs(analytic)) > 1e-6
        if not mask.any():
            continue
        rel = np.abs(fd - analytic) / np.maximum(np.abs(fd), np.abs(analytic))
        m = rel[mask].max()
        if m > worst:
            worst = m
            i = np.unravel_index(np.argmax(np.where(mask, rel, 0)), rel.shape)
            worst_info = (s, name, i, analytic[i], fd[i])
    # decoder params
    for name, arr, analytic in (("W", dec.weights, d_w), ("b", dec.bias, d_b)):
        fd = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            d2 = dec.copy(); getattr(d2, "weights" if name == "W" else "bias")[idx] += h
            lp = full_loss(cloud, d2, wi, wf)
            d2 = dec.copy(); getattr(d2, "weights" if name == "W" else "bias")[idx] -= h
            lm = full_loss(cloud, d2, wi, wf)
            fd[idx] = (lp - lm) / (2 * h)
        mask = np.maximum(np.abs(fd), np.abs(analytic)) > 1e-6
        rel = np.abs(fd - analytic) / np.maximum(np.abs(fd), np.abs(analytic))
        if mask.any():
            m = rel[mask].max()
            if m > worst:
                worst = m
                worst_info = (s, "dec" + name, None, None, None)

print("worst over", N_SCENES, "scenes:", worst, worst_info)

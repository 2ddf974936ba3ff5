"""Scratch: sweep oracle-scene + trainer knobs for the convergence criterion."""
import sys
import time

import numpy as np

import featsplat.oracle as oracle_mod
from featsplat.oracle import make_oracle_scene, teacher_render
from featsplat.trainer import TrainConfig, TrainingData, run_training
from featsplat.rasterizer import render
from featsplat.decoder import decode
from featsplat.losses import psnr
from featsplat.viz import segmentation_map, miou


def evaluate(opac_lo, opac_hi, sig, s_lo, s_hi, tau_p, init_count, iters, seed):
    import featsplat.oracle as om
    import math

    # monkey-patch scene generation parameters for the sweep
    def patched(num_classes, gaussians_per_class, feature_dim, seed=0,
                extent=1.0, num_views=20, image_size=64, num_holdout=4):
        rng = np.random.default_rng(seed)
        codebook = om.make_codebook(num_classes, feature_dim, seed)
        n = num_classes * gaussians_per_class
        positions = np.empty((n, 3)); rotations = np.empty((n, 4))
        log_scales = np.empty((n, 3)); opacity_logits = np.empty(n)
        colors = np.empty((n, 3)); features = np.empty((n, feature_dim))
        class_ids = np.empty(n, dtype=np.int64)
        ring = 0.55 * extent
        for k in range(num_classes):
            angle = 2 * math.pi * k / num_classes
            center = np.array([ring * math.cos(angle), ring * math.sin(angle),
                               0.12 * extent * math.sin(3 * angle)])
            sl = slice(k * gaussians_per_class, (k + 1) * gaussians_per_class)
            positions[sl] = center + sig * extent * rng.standard_normal((gaussians_per_class, 3))
            q = rng.standard_normal((gaussians_per_class, 4))
            rotations[sl] = q / np.linalg.norm(q, axis=1, keepdims=True)
            log_scales[sl] = np.log(rng.uniform(s_lo, s_hi, (gaussians_per_class, 3)) * extent)
            from featsplat.scene import logit
            opacity_logits[sl] = logit(rng.uniform(opac_lo, opac_hi, gaussians_per_class))
            colors[sl] = om._PALETTE[k % len(om._PALETTE)]
            features[sl] = codebook.embeddings[k + 1]
            class_ids[sl] = k + 1
        from featsplat.scene import GaussianCloud, orbit_camera
        cloud = GaussianCloud(positions=positions, rotations=rotations,
                              log_scales=log_scales, opacity_logits=opacity_logits,
                              colors=colors, features=features, scene_extent=extent)
        fx = 0.5 * image_size / math.tan(math.radians(27.5))
        elevation = 0.9; cam_radius = 2.8 * extent
        views = [orbit_camera(2 * math.pi * i / num_views, elevation, cam_radius,
                              fx=fx, width=image_size, height=image_size)
                 for i in range(num_views)]
        half = math.pi / num_views
        holdout = [orbit_camera(2 * math.pi * i / 4 + half, elevation, cam_radius,
                                fx=fx, width=image_size, height=image_size)
                   for i in range(4)]
        return om.OracleScene(cloud=cloud, codebook=codebook, views=views,
                              class_ids=class_ids, extent=extent,
                              holdout_views=holdout)

    scene = patched(5, 100, 32, seed=11)
    data = [TrainingData(view=v, image=i, features=f)
            for v in scene.views for i, f, _ in [teacher_render(scene, v)]]
    config = TrainConfig(iterations=iters, feature_dim=8, init_count=init_count,
                         densify_grad_threshold=tau_p, seed=seed)
    t0 = time.time()
    result = run_training(data, config)
    dt = time.time() - t0
    ps, ms = [], []
    for hv in scene.holdout_views:
        gt_img, _, gt_cls = teacher_render(scene, hv)
        out = render(result.cloud, hv)
        decoded = decode(out.feature_map, result.decoder)
        cls, _ = segmentation_map(decoded, scene.codebook, alpha_map=out.alpha_map)
        _, m = miou(cls, gt_cls, scene.codebook.num_labels)
        ps.append(psnr(out.image, gt_img)); ms.append(m)
    return min(ps), min(ms), np.mean(ms), result.cloud.count, dt


if __name__ == "__main__":
    iters = int(sys.argv[1]) if len(sys.argv) > 1 else 800
    combos = [
        # opac_lo, opac_hi, sigma, s_lo, s_hi, tau_p, init
        (0.85, 0.97, 0.09, 0.035, 0.070, 2e-4, 1500),
        (0.85, 0.97, 0.10, 0.045, 0.080, 2e-4, 1500),
        (0.85, 0.97, 0.10, 0.045, 0.080, 1e-4, 1500),
        (0.90, 0.98, 0.10, 0.050, 0.085, 1e-4, 2500),
        (0.75, 0.95, 0.09, 0.035, 0.070, 1e-4, 1500),
    ]
    for c in combos:
        p, m, mm, cnt, dt = evaluate(*c, iters=iters, seed=3)
        print(f"opac[{c[0]},{c[1]}] sig {c[2]} s[{c[3]},{c[4]}] tau {c[5]:g} "
              f"init {c[6]}: minPSNR {p:.1f} minmIoU {m:.3f} meanmIoU {mm:.3f} "
              f"count {cnt} ({dt:.0f}s)")

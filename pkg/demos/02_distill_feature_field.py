"""Distill a teacher feature field into a fresh Gaussian scene.

A 32-dimensional synthetic teacher supervises an 8-dimensional rendered
feature that a learnable 1x1 channel decoder lifts back to 32 channels.
Training starts from a random cloud and refines it with adaptive
densification.  A few hundred iterations are enough to see the loss move;
the full benchmark in tests/test_acceptance.py runs 2000.

    python3 demos/02_distill_feature_field.py out/demo02 [iterations]
"""

import sys
from pathlib import Path

from featsplat import (TrainConfig, make_oracle_scene, psnr, render,
                       run_training, teacher_render)
from featsplat.oracle import training_data
from featsplat.viz import save_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/demo02")
iterations = int(sys.argv[2]) if len(sys.argv) > 2 else 400

scene = make_oracle_scene(num_classes=5, gaussians_per_class=100,
                          feature_dim=32, seed=11)
data = training_data(scene, image_noise=0.01, seed=11)

config = TrainConfig(iterations=iterations, feature_dim=8, init_count=2000,
                     densify_grad_threshold=1e-4, lr_feature=4e-3,
                     lr_decoder=5e-4, seed=3)
result = run_training(data, config, log_path=out / "metrics.csv")

first, last = result.log[0], result.log[-1]
print(f"loss {first['total_loss']:.4f} -> {last['total_loss']:.4f} over "
      f"{iterations} iterations ({last['num_gaussians']} gaussians)")

heldout = scene.holdout_views[0]
gt_image, _, _ = teacher_render(scene, heldout)
rendered = render(result.cloud, heldout)
print(f"held-out PSNR: {psnr(rendered.image, gt_image):.2f} dB")
save_png(rendered.image, out / "heldout_render.png")
save_png(gt_image, out / "heldout_gt.png")
print(f"wrote heldout_render.png, heldout_gt.png, metrics.csv to {out}/")

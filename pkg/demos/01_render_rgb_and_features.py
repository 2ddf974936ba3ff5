"""Render a synthetic Gaussian scene: RGB image and feature map together.

Builds a 3-class blob scene, rasterizes one orbit view in a single fused
pass, and writes the RGB render, the per-pixel coverage, and a PCA
visualization of the 16-dimensional feature map.

    python3 demos/01_render_rgb_and_features.py out/demo01
"""

import sys
from pathlib import Path

from featsplat import (fit_pca, make_oracle_scene, render,
                       visualize_features)
from featsplat.viz import save_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/demo01")

scene = make_oracle_scene(num_classes=3, gaussians_per_class=80,
                          feature_dim=16, seed=7)
view = scene.views[3]

result = render(scene.cloud, view, background=(0.05, 0.05, 0.08))
print(f"rendered {scene.cloud.count} gaussians at "
      f"{view.width}x{view.height}")
print(f"feature map: {result.feature_map.dim} channels, "
      f"max contributors per pixel: {result.contrib_counts.max()}")

save_png(result.image, out / "rgb.png")
save_png(result.alpha_map, out / "coverage.png")

basis = fit_pca(result.feature_map)
save_png(visualize_features(result.feature_map, basis), out / "feature_pca.png")
print(f"wrote rgb.png, coverage.png, feature_pca.png to {out}/")

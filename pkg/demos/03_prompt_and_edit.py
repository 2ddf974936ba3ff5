"""Query the feature field and edit the scene: extract, delete, recolor.

Uses a ground-truth scene (features already equal to class embeddings) so
selections are exact without training.  Shows soft/hard/hybrid selection
counts and renders each edit next to the original.

    python3 demos/03_prompt_and_edit.py out/demo03
"""

import sys
from pathlib import Path

import numpy as np

from featsplat import (apply_edit, make_oracle_scene, render,
                       score_against_codebook, select_hard, select_hybrid,
                       select_soft)
from featsplat.viz import save_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/demo03")

scene = make_oracle_scene(num_classes=3, gaussians_per_class=60,
                          feature_dim=16, seed=4)
view = scene.views[5]
label = scene.codebook.label_index("class1")

scores = score_against_codebook(scene.cloud, scene.codebook)
for name, selection in [
    ("soft(0.4)", select_soft(scores, label, 0.4)),
    ("hard", select_hard(scores, label)),
    ("hybrid(0.4)", select_hybrid(scores, label, 0.4)),
]:
    print(f"{name:12s} selects {selection.count:3d} of {scene.cloud.count}")

selection = select_hybrid(scores, label, 0.4)
save_png(render(scene.cloud, view).image, out / "original.png")
save_png(render(apply_edit(scene.cloud, selection, "extract"), view).image,
         out / "extracted.png")
save_png(render(apply_edit(scene.cloud, selection, "delete"), view).image,
         out / "deleted.png")
recolored = apply_edit(scene.cloud, selection, "recolor",
                       recolor_fn=lambda c: np.array([1.0, 1.0, 1.0]) - c)
save_png(render(recolored, view).image, out / "recolored.png")
print(f"wrote original/extracted/deleted/recolored renders to {out}/")

"""Differentiable Gaussian splatting with joint RGB + feature rendering.

The package renders explicit 3D Gaussian scenes into RGB images and
N-dimensional semantic feature maps in one fused pass, distills teacher
feature maps into per-Gaussian features by gradient descent, and supports
promptable querying and editing of the trained scene.
"""

from .scene import (CameraView, FeatureMap, Gaussian, GaussianCloud,
                    compact_cloud, look_at_camera, orbit_camera, random_init)
from .projection import (ProjectedGaussians, TileBinning, bin_tiles,
                         build_covariance, project_backward, project_cloud)
from .rasterizer import (GradientBuffer, RenderOutput, render,
                         render_backward, view_space_grad_norms)
from .decoder import (ChannelDecoder, decode, decode_backward,
                      resize_bilinear, resize_bilinear_backward)
from .losses import feature_loss, photometric_loss, psnr
from .trainer import (AdamState, TrainConfig, TrainingAbort, TrainingData,
                      TrainResult, densify_and_prune, run_training,
                      train_step)
from .oracle import (Codebook, OracleScene, make_codebook, make_oracle_scene,
                     reference_render, teacher_render, write_dataset,
                     load_dataset)
from .prompts import (EditSelection, ScoreMatrix, apply_edit, box_query,
                      parse_edit_script, point_query, query_with_complement,
                      run_edit_script, score_against_codebook,
                      score_gaussians, select, select_hard, select_hybrid,
                      select_soft)
from .viz import (PcaBasis, fit_pca, miou, segmentation_map,
                  visualize_features)
from .fileio import (load_checkpoint, load_cloud, load_codebook, load_tensor,
                     load_views, save_cloud, save_codebook, save_tensor,
                     save_views)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CameraView", "ChannelDecoder", "Codebook", "EditSelection",
    "FeatureMap", "Gaussian", "GaussianCloud", "GradientBuffer",
    "OracleScene", "PcaBasis", "ProjectedGaussians", "RenderOutput",
    "ScoreMatrix", "TileBinning", "TrainConfig", "TrainResult",
    "TrainingAbort", "TrainingData", "apply_edit", "bin_tiles", "box_query",
    "build_covariance", "compact_cloud", "decode", "decode_backward",
    "densify_and_prune", "feature_loss", "fit_pca", "load_checkpoint",
    "load_cloud", "load_codebook", "load_dataset", "load_tensor",
    "load_views", "look_at_camera", "make_codebook", "make_oracle_scene",
    "miou", "orbit_camera", "parse_edit_script", "photometric_loss",
    "point_query", "project_backward", "project_cloud", "psnr",
    "query_with_complement", "random_init", "reference_render", "render",
    "render_backward", "resize_bilinear", "resize_bilinear_backward",
    "run_edit_script", "run_training", "save_cloud", "save_codebook",
    "save_tensor", "save_views", "score_against_codebook", "score_gaussians",
    "segmentation_map", "select", "select_hard", "select_hybrid",
    "select_soft", "teacher_render", "train_step", "view_space_grad_norms",
    "visualize_features", "write_dataset",
]

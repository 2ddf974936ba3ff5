"""Command-line entry points.

Subcommands: train, render, edit, query, viz, make-dataset, serve.
Exit codes: 0 success, 2 bad arguments or inputs, 3 training abort.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="cap BLAS thread pools (0 = leave as is)")
    common.add_argument("--verbose", action="store_true",
                        default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="featsplat",
        description="Gaussian splatting with joint RGB + feature rendering")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=0,
                        help="cap BLAS thread pools (0 = leave as is)")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = add_command("train", help="optimize a scene against a dataset")
    p.add_argument("--dataset", help="dataset directory (views.txt layout)")
    p.add_argument("--synthetic", type=int, metavar="K",
                   help="generate a synthetic K-class scene instead")
    p.add_argument("--gaussians-per-class", type=int, default=100)
    p.add_argument("--teacher-dim", type=int, default=32,
                   help="teacher feature dimension for --synthetic")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--feature-dim", type=int, default=8,
                   help="rendered (per-Gaussian) feature dimension")
    p.add_argument("--decoder-out", type=int, default=0,
                   help="decoder output dim (0 = teacher dim when needed)")
    p.add_argument("--init-count", type=int, default=1500)
    p.add_argument("--init-extent", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--lambda-dssim", type=float, default=0.2)
    p.add_argument("--densify-interval", type=int, default=100)
    p.add_argument("--checkpoint-interval", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = add_command("render", help="render a checkpoint at a pose")
    p.add_argument("checkpoint")
    p.add_argument("--pose", help="16 comma-separated row-major scalars")
    p.add_argument("--fx", type=float)
    p.add_argument("--fy", type=float)
    p.add_argument("--cx", type=float)
    p.add_argument("--cy", type=float)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--dataset", help="take the camera from this dataset")
    p.add_argument("--view-index", type=int, default=0)
    p.add_argument("--bg", default="0,0,0")
    p.add_argument("--codebook", help="codebook JSON for the seg output")
    p.add_argument("--out", required=True, help="output directory")

    p = add_command("edit", help="apply an edit script to a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("script", help="edit script file")
    p.add_argument("--codebook", help="codebook JSON (default: sibling)")
    p.add_argument("--out", required=True, help="edited checkpoint path")
    p.add_argument("--keep-killed", action="store_true",
                   help="skip compaction of zero-opacity Gaussians")

    p = add_command("query", help="score a prompt against a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--label", required=True,
                   help="codebook label (comma-separate several)")
    p.add_argument("--mode", choices=["soft", "hard", "hybrid"],
                   default="hybrid")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--codebook", help="codebook JSON (default: sibling)")

    p = add_command("viz", help="PCA-visualize a feature tensor")
    p.add_argument("features", help="FTENS feature map file")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--codebook", help="also write a segmentation map")
    p.add_argument("--seg-out", help="segmentation PNG path")

    p = add_command("make-dataset", help="write a synthetic dataset")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--gaussians-per-class", type=int, default=100)
    p.add_argument("--teacher-dim", type=int, default=32)
    p.add_argument("--views", type=int, default=20)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--out", required=True)

    p = add_command("serve", help="serve render/prompt/edit over HTTP")
    p.add_argument("checkpoint")
    p.add_argument("--codebook", help="codebook JSON (default: sibling)")
    p.add_argument("--port", type=int, default=8399)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", nargs="?", const="default", default=None,
                   help="serve the web UI static assets (optional path)")
    return parser


def _parse_bg(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise ValueError("background must be r,g,b")
    return parts


def _sibling_codebook(checkpoint: str, explicit):
    if explicit:
        return Path(explicit)
    cand = Path(checkpoint).parent / "codebook.json"
    return cand if cand.exists() else None


def _cmd_train(args) -> int:
    import numpy as np

    from . import fileio, oracle
    from .trainer import TrainConfig, TrainingAbort, run_training

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    codebook = None
    if args.synthetic:
        scene = oracle.make_oracle_scene(
            args.synthetic, args.gaussians_per_class, args.teacher_dim,
            seed=args.seed)
        data = []
        for view in scene.views:
            image, fmap, _ = oracle.teacher_render(scene, view)
            data.append(__import__("featsplat.trainer", fromlist=["TrainingData"])
                        .TrainingData(view=view, image=image, features=fmap))
        codebook = scene.codebook
    elif args.dataset:
        data, codebook, _ = oracle.load_dataset(args.dataset)
    else:
        print("error: need --dataset or --synthetic", file=sys.stderr)
        return 2

    teacher_dim = data[0].features.dim
    feature_dim = args.feature_dim
    if args.decoder_out and args.decoder_out != teacher_dim:
        print(f"error: --decoder-out {args.decoder_out} does not match the "
              f"teacher dimension {teacher_dim}", file=sys.stderr)
        return 2
    config = TrainConfig(
        iterations=args.iters, gamma=args.gamma,
        lambda_dssim=args.lambda_dssim, feature_dim=feature_dim,
        init_count=args.init_count, init_extent=args.init_extent,
        densify_interval=args.densify_interval,
        checkpoint_interval=args.checkpoint_interval,
        use_decoder=bool(args.decoder_out), seed=args.seed)
    try:
        config.validate()
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    def checkpoint_fn(it, cloud, decoder):
        fileio.save_cloud(cloud, out / f"checkpoint_{it:06d}.gspl", decoder)

    try:
        result = run_training(data, config, log_path=out / "metrics.csv",
                              checkpoint_fn=checkpoint_fn)
    except TrainingAbort as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return 3
    fileio.save_cloud(result.cloud, out / "checkpoint.gspl", result.decoder)
    if codebook is not None:
        fileio.save_codebook(codebook, out / "codebook.json")
    if args.verbose and result.log:
        last = result.log[-1]
        print(f"final: loss {last['total_loss']:.5f} "
              f"psnr {last['psnr']:.2f} dB, {last['num_gaussians']} gaussians")
    return 0


def _camera_from_args(args):
    import numpy as np

    from . import fileio
    from .scene import CameraView

    if args.dataset:
        views = fileio.load_views(Path(args.dataset) / "views.txt")
        if not 0 <= args.view_index < len(views):
            raise ValueError(f"view index {args.view_index} out of range")
        return views[args.view_index]
    if not args.pose:
        raise ValueError("need --pose or --dataset")
    vals = [float(v) for v in args.pose.split(",")]
    if len(vals) != 16:
        raise ValueError("pose needs 16 comma-separated scalars")
    fx = args.fx if args.fx else 0.5 * args.width / np.tan(np.radians(27.5))
    view = CameraView(
        fx=fx, fy=args.fy or fx,
        cx=args.cx if args.cx is not None else args.width / 2.0,
        cy=args.cy if args.cy is not None else args.height / 2.0,
        width=args.width, height=args.height,
        world_to_camera=np.array(vals).reshape(4, 4))
    view.validate()
    return view


def _cmd_render(args) -> int:
    import numpy as np

    from . import fileio, viz
    from .decoder import decode
    from .rasterizer import render

    try:
        cloud, decoder = fileio.load_checkpoint(args.checkpoint)
        view = _camera_from_args(args)
        bg = _parse_bg(args.bg)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = render(cloud, view, background=bg)
    viz.save_png(result.image, out_dir / "rgb.png")

    fmap = result.feature_map
    if decoder is not None:
        fmap = decode(fmap, decoder)
    try:
        basis = viz.fit_pca(fmap)
        viz.save_png(viz.visualize_features(fmap, basis),
                     out_dir / "feature_pca.png")
    except ValueError as e:
        print(f"warning: feature PCA skipped ({e})", file=sys.stderr)

    codebook_path = _sibling_codebook(args.checkpoint, args.codebook)
    if codebook_path is not None:
        codebook = fileio.load_codebook(codebook_path)
        class_ids, overlay = viz.segmentation_map(
            fmap, codebook, image=result.image, alpha_map=result.alpha_map)
        viz.save_png(overlay, out_dir / "seg.png")
        viz.save_png_gray(class_ids.astype(np.uint8),
                          out_dir / "seg_ids.png")
    return 0


def _cmd_edit(args) -> int:
    from . import fileio
    from .prompts import parse_edit_script, run_edit_script
    from .scene import compact_cloud

    try:
        cloud, decoder = fileio.load_checkpoint(args.checkpoint)
        codebook_path = _sibling_codebook(args.checkpoint, args.codebook)
        if codebook_path is None:
            raise ValueError("no codebook found; pass --codebook")
        codebook = fileio.load_codebook(codebook_path)
        commands = parse_edit_script(Path(args.script).read_text())
        for cmd in commands:
            for name in cmd.labels:
                codebook.label_index(name)  # raises KeyError with the label list
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return 2

    edited = run_edit_script(cloud, codebook, commands, decoder=decoder)
    if not args.keep_killed and commands:
        edited = compact_cloud(edited)
    fileio.save_cloud(edited, args.out, decoder)
    return 0


def _cmd_query(args) -> int:
    from . import fileio
    from .prompts import score_against_codebook, select

    try:
        cloud, decoder = fileio.load_checkpoint(args.checkpoint)
        codebook_path = _sibling_codebook(args.checkpoint, args.codebook)
        if codebook_path is None:
            raise ValueError("no codebook found; pass --codebook")
        codebook = fileio.load_codebook(codebook_path)
        cols = [codebook.label_index(name)
                for name in args.label.split(",")]
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return 2

    scores = score_against_codebook(cloud, codebook, decoder=decoder)
    selection = select(scores, cols, args.mode, args.threshold)
    print(f"{selection.count} of {cloud.count} gaussians selected "
          f"({selection.provenance})")
    return 0


def _cmd_viz(args) -> int:
    from . import fileio, viz
    from .scene import FeatureMap

    try:
        fmap = FeatureMap(fileio.load_tensor(args.features))
        basis = viz.fit_pca(fmap)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    viz.save_png(viz.visualize_features(fmap, basis), args.out)
    if args.codebook:
        import numpy as np

        codebook = fileio.load_codebook(args.codebook)
        class_ids, overlay = viz.segmentation_map(fmap, codebook)
        viz.save_png(overlay, args.seg_out or "seg.png")
    return 0


def _cmd_make_dataset(args) -> int:
    from . import oracle

    try:
        scene = oracle.make_oracle_scene(
            args.classes, args.gaussians_per_class, args.teacher_dim,
            seed=args.seed, num_views=args.views, image_size=args.image_size)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    oracle.write_dataset(scene, args.out)
    return 0


def _cmd_serve(args) -> int:
    from . import fileio
    from .service import SceneService, resolve_ui_dir

    try:
        cloud, decoder = fileio.load_checkpoint(args.checkpoint)
        codebook_path = _sibling_codebook(args.checkpoint, args.codebook)
        codebook = (fileio.load_codebook(codebook_path)
                    if codebook_path else None)
        ui_dir = resolve_ui_dir(args.ui) if args.ui else None
        service = SceneService(cloud, decoder, codebook,
                               checkpoint_path=args.checkpoint,
                               ui_dir=ui_dir)
        server = service.make_server(args.host, args.port)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"serving on http://{args.host}:{server.server_address[1]}/",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "render": _cmd_render,
    "edit": _cmd_edit,
    "query": _cmd_query,
    "viz": _cmd_viz,
    "make-dataset": _cmd_make_dataset,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

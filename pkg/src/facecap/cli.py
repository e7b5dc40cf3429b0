"""Batch command-line front-end.

Every command is deterministic given its flags and seeds: all randomness
flows from an explicit --seed, so re-running a command reproduces its
output files byte for byte. Exit codes: 0 success, 1 I/O or validation
failure, 2 numerical failure (e.g. a rank-deficient fit).
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .container import encode_text, write_container
from .deform import load_model, pose_mesh, fit_expression, save_model
from .errors import FacecapError, NumericalError
from .imageio import save_png_gray, save_png_rgb
from .losses import load_loss_config
from .mesh import TriMesh
from .meshio import load_mesh, save_mesh
from .metrics import evaluate_sequence
from .nn.deformer import make_deformer_net, pretrain_deformer
from .nn.encoding import SinusoidalEncoding
from .nn.mlp import mlp_to_chunks
from .raster import rasterize, render_depth, render_normals, render_semantic, render_shaded
from .remesh import remesh, reproject_tables, save_provenance
from .shading import lights_from_chunks
from .synth import _materials_of, generate_dataset
from .track import load_track


def _parse_size(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 256x256, got '{text}'")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="facecap",
        description="Personalized face-capture geometry toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pose", help="write the posed mesh for one frame")
    p.add_argument("--model", required=True)
    p.add_argument("--track", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="render every frame of a track")
    p.add_argument("--model", required=True)
    p.add_argument("--track", required=True)
    p.add_argument("--mode", choices=("shaded", "semantic", "normals", "depth"),
                   default="shaded")
    p.add_argument("--video-index", type=int, default=0)
    p.add_argument("--size", type=_parse_size, default=(256, 256))
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)

    for name in ("eval-iou", "eval-warp"):
        p = sub.add_parser(name, help=f"compute the {name.split('-')[1]} metric")
        p.add_argument("--model", required=True)
        p.add_argument("--track", required=True)
        p.add_argument("--frames", required=True)
        p.add_argument("--masks", required=True)
        p.add_argument("--interval-ms", type=float, default=170.0)
        p.add_argument("--fps", type=float, default=30.0)
        p.add_argument("--report", required=True)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--config", default=None)

    p = sub.add_parser("pretrain-deformer", help="supervised deformer init")
    p.add_argument("--model", required=True)
    p.add_argument("--L", type=int, default=10)
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("remesh", help="isotropic remesh + table reprojection")
    p.add_argument("--model", required=True)
    p.add_argument("--target-edge", type=float, required=True)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--provenance-out", default=None)

    p = sub.add_parser("synth", help="generate the synthetic ground-truth dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise-deg", type=float, default=0.0)
    p.add_argument("--size", type=_parse_size, default=(256, 256))
    p.add_argument("--fps", type=float, default=30.0)

    p = sub.add_parser("fit", help="least-squares expression fit to a target mesh")
    p.add_argument("--model", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_pose(args):
    model = load_model(args.model)
    track = load_track(args.track)
    verts = pose_mesh(model, track.pose(args.frame), track.expression(args.frame))
    save_mesh(args.out, TriMesh(verts, model.faces))
    print(f"wrote {args.out}")


def _cmd_render(args):
    model = load_model(args.model)
    track = load_track(args.track)
    width, height = args.size
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh = model.canonical_mesh()
    lights = None
    if args.mode == "shaded":
        for key in ("albedo", "roughness", "specular"):
            if key not in model.extras:
                raise FacecapError(f"shaded mode needs per-vertex '{key}' in the model file")
        lights = lights_from_chunks(model.extras)
    for t in range(track.n_frames):
        verts = pose_mesh(model, track.pose(t), track.expression(t))
        gbuf = rasterize(mesh, verts, track.camera(t), width, height,
                         threads=args.threads, tile_size=64 if args.threads > 1 else None)
        path = out / f"{args.mode}_{t:06d}.png"
        if args.mode == "shaded":
            save_png_rgb(path, render_shaded(gbuf, mesh, verts, _materials_of(model),
                                             lights, args.video_index, track.camera(t)))
        elif args.mode == "semantic":
            if model.annotation is None:
                raise FacecapError("semantic mode needs labels/class_names in the model file")
            save_png_gray(path, render_semantic(gbuf, mesh, model.annotation))
        elif args.mode == "normals":
            save_png_rgb(path, render_normals(gbuf, mesh, verts))
        else:
            save_png_gray(path, np.round(render_depth(gbuf) * 255.0).astype(np.uint8))
    print(f"wrote {track.n_frames} {args.mode} frames to {out}")


def _cmd_eval(args, do_iou, do_warp):
    model = load_model(args.model)
    track = load_track(args.track)
    tau_frac = 0.01
    if args.config:
        _, extras = load_loss_config(args.config)
        tau_frac = extras.get("tau_frac", tau_frac)
    report = evaluate_sequence(
        model, track, args.frames, args.masks,
        interval_ms=args.interval_ms, fps=args.fps,
        do_iou=do_iou, do_warp=do_warp, tau_frac=tau_frac, threads=args.threads,
    )
    report.save(args.report)
    agg = report.aggregates()
    summary = ", ".join(f"{k}={v:.6g}" for k, v in agg.items()) or "no items"
    print(f"wrote {args.report} ({summary})")


def _cmd_pretrain(args):
    model = load_model(args.model)
    enc = SinusoidalEncoding(frequencies=args.L)
    net = make_deformer_net(enc, model.n_expr, seed=args.seed)
    net, history = pretrain_deformer(model, net, enc, iters=args.iters, lr=args.lr)
    chunks = mlp_to_chunks(net)
    chunks["deformer_meta"] = encode_text(json.dumps({
        "L": args.L, "include_input": True, "seed": args.seed,
        "iters": args.iters, "lr": args.lr,
    }, sort_keys=True))
    write_container(args.out, chunks)
    csv_path = str(args.out) + ".loss.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("iteration,loss\n")
        for i, loss in enumerate(history):
            fh.write(f"{i},{loss!r}\n")
    final = history[-1] if history else float("nan")
    print(f"wrote {args.out} and {csv_path} (final loss {final:.3e})")


def _cmd_remesh(args):
    model = load_model(args.model)
    new_mesh, prov = remesh(model.canonical_mesh(), args.target_edge,
                            iterations=args.iterations)
    new_model = reproject_tables(model, new_mesh, prov)
    save_model(args.out, new_model)
    if args.provenance_out:
        save_provenance(args.provenance_out, prov)
    print(f"wrote {args.out}: {new_model.n_vertices} vertices, "
          f"{len(new_model.faces)} faces")


def _cmd_synth(args):
    width, height = args.size
    generate_dataset(args.out, n_frames=args.frames, seed=args.seed,
                     noise_deg=args.noise_deg, width=width, height=height,
                     fps=args.fps)
    print(f"wrote synthetic dataset to {args.out}")


def _cmd_fit(args):
    model = load_model(args.model)
    target = load_mesh(args.target)
    result = fit_expression(model, target.vertices)
    lines = [repr(float(v)) for v in result.params.coeffs]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {args.out} (residual {result.residual:.3e})")


_COMMANDS = {
    "pose": _cmd_pose,
    "render": _cmd_render,
    "eval-iou": lambda a: _cmd_eval(a, True, False),
    "eval-warp": lambda a: _cmd_eval(a, False, True),
    "pretrain-deformer": _cmd_pretrain,
    "remesh": _cmd_remesh,
    "synth": _cmd_synth,
    "fit": _cmd_fit,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FacecapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()

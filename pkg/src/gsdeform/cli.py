"""Batch command-line interface over the deformation pipeline.

Subcommands compose the library modules: ``sample`` writes a control
graph, ``solve`` deforms a splat under a handle file, ``render``
rasterizes to PNG, ``composite`` blends over a background and emits the
boundary band mask, ``serve`` starts the interactive edit service.
"""

import argparse
import csv
import sys

import numpy as np

from . import __version__
from .arap import HandleSet, deform
from .compositor import alpha_composite, boundary_mask
from .config import (
    DEFAULT_CONTROL_COUNT,
    DEFAULT_DILATION_RADIUS,
    DEFAULT_GRAPH_DEGREE,
    DEFAULT_MASK_THRESHOLD,
    DEFAULT_SKIN_NEIGHBORS,
    DEFAULT_SOLVE_ITERS,
)
from .errors import GsdeformError
from .graph import ControlGraph, build_control_graph
from .images import read_png, write_mask_png, write_png
from .render import Camera, render
from .skinning import apply_lbs, bind
from .splat_io import read_ply, write_ply


def _cmd_sample(args):
    cloud = read_ply_arg(args.input, args.activated)
    graph = build_control_graph(
        cloud, m=args.n, k=args.k, seed=args.seed, weighting=args.weighting
    )
    graph.save_json(args.out)
    print(f"sampled {len(graph)} control nodes (k={args.k}) -> {args.out}")
    return 0


def read_ply_arg(path, activated):
    return read_ply(path, activated=activated)


def _write_report(report_dir, trace):
    import os

    os.makedirs(report_dir, exist_ok=True)
    csv_path = os.path.join(report_dir, "energy_trace.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "energy"])
        for i, e in enumerate(trace):
            writer.writerow([i, f"{e:.12g}"])

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(range(len(trace)), trace, marker="o", ms=3)
    ax.set_xlabel("half-step")
    ax.set_ylabel("rigidity energy")
    ax.set_yscale("log" if min(trace) > 0 else "linear")
    ax.set_title("solver energy trace")
    fig.tight_layout()
    fig_path = os.path.join(report_dir, "energy_trace.png")
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    print(f"report written to {csv_path} and {fig_path}")


def _cmd_solve(args):
    cloud = read_ply_arg(args.splat, args.activated)
    graph = ControlGraph.load_json(args.graph)
    handles = HandleSet.load_json(args.handles)
    result = deform(graph, handles, iters=args.iters)
    binding = bind(cloud, graph, k_tilde=args.skin_k)
    deformed = apply_lbs(cloud, binding, graph, result)
    write_ply(args.out, deformed, activated=args.activated)
    trace = " ".join(f"{e:.6g}" for e in result.energy_trace)
    print(f"energy trace: {trace}")
    print(f"deformed splat ({len(deformed)} Gaussians) -> {args.out}")
    if args.result_json:
        result.save_json(args.result_json)
    if args.report:
        _write_report(args.report, result.energy_trace)
    return 0


def _cmd_render(args):
    cloud = read_ply_arg(args.splat, args.activated)
    camera = Camera.load_json(args.camera)
    img = render(cloud, camera)
    write_png(args.out, img)
    print(f"rendered {camera.width}x{camera.height} image -> {args.out}")
    return 0


def _cmd_composite(args):
    fg = read_png(args.fg, channels="RGBA")
    bg = read_png(args.bg, channels="RGB")
    out = alpha_composite(fg, bg)
    write_png(args.out, out)
    print(f"composite -> {args.out}")
    if args.mask_out:
        mask = boundary_mask(fg[:, :, 3], threshold=args.threshold, radius=args.radius)
        write_mask_png(args.mask_out, mask)
        print(f"boundary band mask ({int(mask.sum())} px) -> {args.mask_out}")
    return 0


def _cmd_serve(args):
    from .wsserver import serve

    serve(host=args.host, port=args.port)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gsdeform",
        description="As-rigid-as-possible deformation for 3D Gaussian Splat objects",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample control nodes and build the graph")
    p.add_argument("--input", required=True, help="input splat PLY")
    p.add_argument("--n", type=int, default=DEFAULT_CONTROL_COUNT)
    p.add_argument("--k", type=int, default=DEFAULT_GRAPH_DEGREE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weighting", choices=["uniform", "inverse_distance"], default="uniform")
    p.add_argument("--activated", action="store_true", help="PLY stores working values")
    p.add_argument("--out", required=True, help="output graph JSON")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("solve", help="deform a splat under handle constraints")
    p.add_argument("--splat", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--handles", required=True, help="handle set JSON")
    p.add_argument("--iters", type=int, default=DEFAULT_SOLVE_ITERS)
    p.add_argument("--skin-k", type=int, default=DEFAULT_SKIN_NEIGHBORS)
    p.add_argument("--activated", action="store_true")
    p.add_argument("--out", required=True, help="output deformed PLY")
    p.add_argument("--result-json", default=None, help="also dump solved nodes/energies")
    p.add_argument("--report", default=None, help="directory for energy CSV + figure")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("render", help="rasterize a splat to PNG")
    p.add_argument("--splat", required=True)
    p.add_argument("--camera", required=True, help="camera JSON")
    p.add_argument("--activated", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("composite", help="blend a render over a background")
    p.add_argument("--fg", required=True, help="RGBA foreground PNG")
    p.add_argument("--bg", required=True, help="RGB background PNG")
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out", default=None, help="boundary band mask PNG")
    p.add_argument("--threshold", type=float, default=DEFAULT_MASK_THRESHOLD)
    p.add_argument("--radius", type=int, default=DEFAULT_DILATION_RADIUS)
    p.set_defaults(func=_cmd_composite)

    p = sub.add_parser("serve", help="run the interactive edit service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GsdeformError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: gen-scene, plan, run, render-cache, eval-overlap, losses.
Failures print a single `error: ...` line to stderr and exit 1; argument
errors exit 2 with usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .floorplan import load_scene, save_scene
from .geometry import PanoPose, quat_from_yaw
from .images import read_raw_raster, write_png
from .metrics import auto_regions, depth_loss, overlap_psnr, total_loss
from .nodegraph import build_node_graph, insert_auxiliary_nodes
from .oracle import default_targets, gen_scene
from .pipeline import TourConfig, load_manifest_panos, run_tour
from .shell import build_shell
from .splats import load_gaussians, render_pano


def _cmd_gen_scene(args) -> int:
    spec = gen_scene(args.seed, args.rooms)
    save_scene(args.output, spec, default_targets(spec))
    print(f"wrote {args.output} ({args.rooms} rooms, "
          f"{len(spec.doorways)} doorways)")
    return 0


def _cmd_plan(args) -> int:
    spec, targets = load_scene(args.scene)
    shell = build_shell(spec)
    graph = build_node_graph(shell, targets, args.max_spacing)
    graph = insert_auxiliary_nodes(graph, shell, args.max_spacing,
                                   allow_any_spacing=True)
    text = json.dumps(graph.to_dict(), indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_run(args) -> int:
    if args.config:
        config = TourConfig.from_json(args.config, scene_path=args.scene,
                                      out_dir=args.output)
    else:
        config = TourConfig(
            scene_path=args.scene, out_dir=args.output, seed=args.seed,
            width=args.width, height=args.height, max_spacing=args.max_spacing,
            k_same=args.k_same, k_door=args.k_door, tau_mu=args.tau_mu,
            tau_v=args.tau_v, tau_d=args.tau_d, alpha_min=args.alpha_min,
            lift_stride=args.stride, use_cache=not args.no_cache,
            eval_overlap=not args.no_eval, save_snapshots=args.snapshots)
    report = run_tour(config)
    print(f"generated {len(report.order)} nodes into {report.out_dir}")
    if report.overlap_mean is not None:
        print(f"overlap-psnr mean {report.overlap_mean:.4f} dB")
    return 0


def _cmd_render_cache(args) -> int:
    gaussians = load_gaussians(args.cache)
    vals = [float(v) for v in args.pose.split(",")]
    if len(vals) not in (3, 4):
        raise ValueError("--pose needs x,y,z or x,y,z,yaw_deg")
    yaw = np.radians(vals[3]) if len(vals) == 4 else 0.0
    pose = PanoPose(np.array(vals[:3]), quat_from_yaw(yaw))
    result = render_pano(gaussians, pose, args.width, args.height)
    write_png(args.output, result.image.color)
    print(f"wrote {args.output} ({len(gaussians)} splats, "
          f"{result.image.valid.mean() * 100:.1f}% covered)")
    return 0


def _cmd_eval_overlap(args) -> int:
    spec, _ = load_scene(args.scene)
    shell = build_shell(spec)
    panos, labels, _ = load_manifest_panos(args.run_dir)
    report = overlap_psnr(shell, panos, auto_regions(shell),
                          base_index=args.base_index, labels=labels)
    text = report.to_text()
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    print(f"mean {report.mean_psnr:.4f} dB")
    return 0


def _cmd_losses(args) -> int:
    d_hat = read_raw_raster(args.pred).astype(np.float64).ravel()
    d = read_raw_raster(args.target).astype(np.float64).ravel()
    res = depth_loss(d_hat, d)
    print(f"l_log {res.l_log:.6f}")
    print(f"l_si {res.l_si:.6f}")
    print(f"depth {res.total:.6f}")
    print(f"total {total_loss(0.0, 0.0, 0.0, res.total):.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panotour",
                                description="Panoramic tour engine over floorplan shells")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", help="generate a procedural multi-room scene file")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rooms", type=int, default=3)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=_cmd_gen_scene)

    g = sub.add_parser("plan", help="build and dump the node graph for a scene")
    g.add_argument("--scene", required=True)
    g.add_argument("--max-spacing", type=float, default=1.0)
    g.add_argument("-o", "--output")
    g.set_defaults(func=_cmd_plan)

    g = sub.add_parser("run", help="run the autoregressive tour")
    g.add_argument("--scene", required=True)
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--config", help="TourConfig JSON file (flags below ignored)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--width", type=int, default=512)
    g.add_argument("--height", type=int, default=256)
    g.add_argument("--max-spacing", type=float, default=1.0)
    g.add_argument("--stride", type=int, default=2)
    g.add_argument("--k-same", type=int, default=3)
    g.add_argument("--k-door", type=int, default=1)
    g.add_argument("--tau-mu", type=float, default=1.0)
    g.add_argument("--tau-v", type=float, default=0.5)
    g.add_argument("--tau-d", type=float, default=0.10)
    g.add_argument("--alpha-min", type=float, default=0.05)
    g.add_argument("--no-cache", action="store_true",
                   help="disable the splat memory (ablation)")
    g.add_argument("--no-eval", action="store_true")
    g.add_argument("--snapshots", action="store_true",
                   help="write a cache snapshot after every node")
    g.set_defaults(func=_cmd_run)

    g = sub.add_parser("render-cache", help="render a cache file at a pose")
    g.add_argument("--cache", required=True)
    g.add_argument("--pose", required=True, help="x,y,z[,yaw_deg]")
    g.add_argument("--width", type=int, default=512)
    g.add_argument("--height", type=int, default=256)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=_cmd_render_cache)

    g = sub.add_parser("eval-overlap", help="overlap-PSNR report for a finished run")
    g.add_argument("--scene", required=True)
    g.add_argument("--run-dir", required=True)
    g.add_argument("--base-index", type=int, default=0)
    g.add_argument("-o", "--output")
    g.set_defaults(func=_cmd_eval_overlap)

    g = sub.add_parser("losses", help="depth losses between two raw depth rasters")
    g.add_argument("--pred", required=True)
    g.add_argument("--target", required=True)
    g.set_defaults(func=_cmd_losses)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # one-line machine-parsable failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

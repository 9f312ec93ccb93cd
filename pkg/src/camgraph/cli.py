"""Command-line entry point: ``camgraph <verb> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .formats import (
    DataError,
    atomic_write,
    dump_json,
    emit_match_list,
    format_colmap_images,
    load_poses,
    pair_params_from_json,
    pairs_from_json,
    pairs_to_json,
    poses_to_json,
    read_image,
    read_ply,
    weights_export,
    write_ply,
)
from .geometry import pair_codes, pose_arrays
from .graph import EdgeWeightParams, build_camera_graph, target_camera
from .octree import OctreeParams, build_octree, prune
from .pairing import PairingParams, select_pairs
from .photometric import DEFAULT_LAMBDA, ConsistencyInputs, consistency_loss
from .quadrant import MODES, StateTable, auto_mode, filter_pairs
from .trajectories import KINDS, generate_trajectory

log = logging.getLogger("camgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# -- stages ----------------------------------------------------------------------

def _params(cls, **kw):
    try:
        return cls(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def run_pairs(poses, args):
    params = _params(PairingParams, r=args.r, h=args.h, w=args.w)
    t0 = time.perf_counter()
    pairs = select_pairs(poses, params)
    log.info("pairing: %d cameras -> %d pairs in %.2fs", len(poses), len(pairs), time.perf_counter() - t0)
    return pairs, {"r": params.r, "h": params.h, "w": params.w}


def resolve_mode(mode: str, poses) -> str:
    if mode != "auto":
        return mode
    P, _ = pose_arrays(poses)
    chosen = auto_mode(P)
    log.info("auto mode picked %s", chosen)
    return chosen


def run_filter(poses, pairs, args):
    mode = resolve_mode(args.mode, poses)
    table = StateTable.load(mode, args.state_table)
    kept, report = filter_pairs(poses, pairs, table)
    log.info("filter (%s): kept %d of %d pairs", mode, report.kept, report.input_pairs)
    return kept, report, mode


def run_graph(poses, pairs, args, extra_params=None):
    ew = _params(EdgeWeightParams, k=args.k, epsilon=args.epsilon)
    if not 0.0 <= args.min_prob < 1.0:
        raise UsageError(f"--min-prob must lie in [0, 1), got {args.min_prob}")
    graph = build_camera_graph(
        poses, pairs, ew, p_min=args.min_prob, centrality=args.centrality, normalize_scale=args.normalize_scale
    )
    P, D = pose_arrays(poses)
    codes = {}
    if graph.edges:
        e = np.asarray(graph.edges) - 1
        codes = dict(zip(graph.edges, pair_codes(P, D, e[:, 0], e[:, 1]).tolist()))
    targets = {i: target_camera(graph, i) for i in graph.ids if graph.neighbors(i)}
    params = {
        "k": args.k,
        "epsilon": args.epsilon,
        "p_min": args.min_prob,
        "centrality": args.centrality,
        "normalize_scale": args.normalize_scale,
        "seed": args.seed,
    }
    params.update(extra_params or {})
    return weights_export(graph, codes, params, targets)


# -- verbs -----------------------------------------------------------------------

def cmd_gen(args):
    if args.n < 2 or args.noise < 0:
        raise UsageError("--n must be >= 2 and --noise >= 0")
    poses = generate_trajectory(args.kind, args.n, args.noise, args.seed)
    text = format_colmap_images(poses) if args.format == "colmap" else poses_to_json(poses)
    atomic_write(args.out, text)


def cmd_pairs(args):
    poses = load_poses(args.poses, args.format)
    pairs, params = run_pairs(poses, args)
    atomic_write(args.out, pairs_to_json(pairs, params))
    if args.match_list:
        atomic_write(args.match_list, emit_match_list(pairs, poses))


def cmd_filter(args):
    poses = load_poses(args.poses, args.format)
    text = Path(args.pairs).read_text(encoding="utf-8")
    pairs = pairs_from_json(text)
    kept, report, mode = run_filter(poses, pairs, args)
    atomic_write(args.out, pairs_to_json(kept, {**pair_params_from_json(text), "mode": mode}))
    if args.match_list:
        atomic_write(args.match_list, emit_match_list(kept, poses))
    if args.report:
        atomic_write(args.report, dump_json({"mode": mode, **report.to_dict()}))


def cmd_graph(args):
    poses = load_poses(args.poses, args.format)
    text = Path(args.pairs).read_text(encoding="utf-8")
    pairs = pairs_from_json(text)
    atomic_write(args.out, dump_json(run_graph(poses, pairs, args, pair_params_from_json(text))))


def cmd_octree(args):
    cloud = read_ply(args.input)
    params = _params(
        OctreeParams,
        max_depth=args.max_depth,
        leaf_capacity=args.leaf_capacity,
        tau=args.tau,
        target_count=args.target_points,
        seed=args.seed,
    )
    tree = build_octree(cloud.xyz, params)
    idx = prune(tree, params)
    log.info("octree: %d leaves, %d -> %d points", len(tree.leaves), len(cloud), len(idx))
    write_ply(args.out, cloud.take(idx), binary=not args.ascii)


def _load_camera_json(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return {k: np.asarray(doc[k], dtype=np.float64) for k in ("K_i", "K_j", "R_ji", "T_ji")}
    except KeyError as exc:
        raise DataError(f"camera file lacks {exc}") from None


def cmd_consistency(args):
    cams = _load_camera_json(args.camera)
    depth = read_image(args.depth_i)
    if depth.ndim == 3:
        depth = depth[:, :, 0]
    inputs = ConsistencyInputs(
        read_image(args.image_i), read_image(args.image_j),
        cams["K_i"], cams["K_j"], cams["R_ji"], cams["T_ji"], depth, args.lam,
    )
    loss, frac = consistency_loss(inputs)
    atomic_write(args.out, dump_json({"lambda": args.lam, "loss": loss, "valid_fraction": frac}))


def cmd_validate(args):
    from .validation import run_validation

    report = run_validation(samples=args.samples, seed=args.seed, quick=args.quick)
    atomic_write(args.out, dump_json(report))
    for name, item in report["checks"].items():
        print(f"{'PASS' if item['passed'] else 'FAIL'}  {name}")
    if not report["passed"]:
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_pipeline(args):
    out = Path(args.out_dir)
    poses = load_poses(args.poses, args.format)
    pairs, pair_params = run_pairs(poses, args)
    atomic_write(out / "pairs.json", pairs_to_json(pairs, pair_params))
    kept, report, mode = run_filter(poses, pairs, args)
    atomic_write(out / "filtered_pairs.json", pairs_to_json(kept, {"mode": mode, **pair_params}))
    atomic_write(out / "match_list.txt", emit_match_list(kept, poses))
    atomic_write(out / "filter_report.json", dump_json({"mode": mode, **report.to_dict()}))
    weights = run_graph(poses, kept, args, {**pair_params, "mode": mode})
    atomic_write(out / "weights.json", dump_json(weights))
    if args.points:
        args.input = args.points
        args.out = str(out / "points_pruned.ply")
        cmd_octree(args)


# -- parser ----------------------------------------------------------------------

def _add_pose_args(p):
    p.add_argument("--poses", required=True, help="pose JSON or COLMAP images.txt")
    p.add_argument("--format", choices=("auto", "json", "colmap"), default="auto", help="pose file format")


def _add_pairing_args(p):
    p.add_argument("--r", type=int, default=5, help="nearest neighbours per camera")
    p.add_argument("--h", type=int, default=20, help="gap between ring picks")
    p.add_argument("--w", type=int, default=1, help="ring picks per h+w cameras")


def _add_filter_args(p):
    p.add_argument("--mode", choices=(*MODES, "auto"), default="auto",
                   help="state table mode; auto = loose for long narrow tracks, strict otherwise")
    p.add_argument("--state-table", default=None, help="override the bundled state table file")


def _add_graph_args(p):
    p.add_argument("--k", type=float, default=1.0, help="distance decay of edge weights")
    p.add_argument("--epsilon", type=float, default=1e-6, help="edge-weight denominator floor")
    p.add_argument("--min-prob", type=float, default=0.5, help="minimum sampling probability")
    p.add_argument("--centrality", choices=("betweenness", "degree"), default="betweenness")
    p.add_argument("--normalize-scale", action="store_true", help="divide positions by the median edge length")


def _add_octree_args(p):
    p.add_argument("--tau", type=int, default=1, help="minimum points per surviving leaf")
    p.add_argument("--target-points", type=int, default=None, help="global output point budget")
    p.add_argument("--max-depth", type=int, default=10)
    p.add_argument("--leaf-capacity", type=int, default=32)
    p.add_argument("--ascii", action="store_true", help="write ASCII PLY instead of binary")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="camgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a synthetic camera set")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "colmap"), default="json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pairs", help="concentric nearest-neighbour pairing")
    _add_pose_args(p)
    _add_pairing_args(p)
    p.add_argument("--out", required=True, help="tagged pair JSON")
    p.add_argument("--match-list", help="also write a 'nameA nameB' match list")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("filter", help="quadrant filter over a pair file")
    _add_pose_args(p)
    _add_filter_args(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--match-list")
    p.add_argument("--report")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("graph", help="camera graph weights and sampling probabilities")
    _add_pose_args(p)
    _add_graph_args(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("octree", help="prune an initial point cloud")
    _add_octree_args(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_octree)

    p = sub.add_parser("consistency", help="evaluate the reprojection consistency loss")
    p.add_argument("--image-i", required=True)
    p.add_argument("--image-j", required=True)
    p.add_argument("--depth-i", required=True, help="PFM depth map of view i")
    p.add_argument("--camera", required=True, help="JSON with K_i, K_j, R_ji, T_ji")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("validate", help="Monte Carlo rates, oracle equivalence, connectivity")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="fewer trials, for smoke runs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("pipeline", help="pairs, filter and graph in one go")
    _add_pose_args(p)
    _add_pairing_args(p)
    _add_filter_args(p)
    _add_graph_args(p)
    _add_octree_args(p)
    p.add_argument("--points", help="optional PLY to prune alongside")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"camgraph: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"camgraph: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"camgraph: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return code or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

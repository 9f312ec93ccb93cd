"""Acceptance criteria, one check per criterion.

Run under pytest (a PASS/FAIL line per criterion is printed in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import json
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from camgraph.graph import (
    betweenness_node_weights,
    connectivity,
    graph_from_edges,
    sampling_probabilities,
)
from camgraph.octree import OctreeParams, build_octree, prune
from camgraph.pairing import PairingParams, select_pairs
from camgraph.photometric import ConsistencyInputs, consistency_loss
from camgraph.quadrant import LOOSE, STRICT, monte_carlo_filter_rate
from camgraph.trajectories import disconnects_without_connection, generate_trajectory
from camgraph.validation import (
    betweenness_max_error,
    connectivity_trials,
    orientation_mismatches,
    random_poses,
)

RESULTS = {}


def record(key, passed, detail):
    RESULTS[key] = (bool(passed), detail)
    return bool(passed), detail


def criterion_1():
    t0 = time.perf_counter()
    rate = monte_carlo_filter_rate(STRICT, 1_000_000, seed=0)
    dt = time.perf_counter() - t0
    ok = abs(rate - 0.8125) <= 0.01 and dt < 10.0
    return record(1, ok, f"strict filter rate {rate:.6f} (target 0.8125 +/- 0.01) in {dt:.2f}s (< 10s)")


def criterion_2():
    t0 = time.perf_counter()
    rate = monte_carlo_filter_rate(LOOSE, 1_000_000, seed=0)
    dt = time.perf_counter() - t0
    ok = abs(rate - 0.375) <= 0.01 and dt < 10.0
    return record(2, ok, f"loose filter rate {rate:.6f} (target 0.375 +/- 0.01) in {dt:.2f}s")


def criterion_3():
    bad, compared = orientation_mismatches(100_000, seed=0)
    return record(3, bad == 0 and compared > 99_000,
                  f"{bad} mismatches over {compared} of 100000 pairs (sign arguments > 1e-9)")


def criterion_4():
    failures = connectivity_trials(1000, seed=0, n_range=(8, 300))
    fixture = generate_trajectory("two_cluster", 8)
    split = disconnects_without_connection(fixture)
    with_conn = select_pairs(fixture, PairingParams(r=2, h=5, w=1))
    joined = connectivity(graph_from_edges(8, with_conn.pairs))[0] == 1
    return record(4, failures == 0 and split and joined,
                  f"{failures}/1000 disconnected trials; two_cluster split without connection pairs: {split}, "
                  f"joined with them: {joined}")


def criterion_5():
    n600 = len(select_pairs(random_poses(np.random.default_rng(0), 600), PairingParams(r=5, h=20, w=1)))
    poses = random_poses(np.random.default_rng(1), 2000)
    t0 = time.perf_counter()
    select_pairs(poses, PairingParams(r=5, h=20, w=1))
    dt = time.perf_counter() - t0
    return record(5, 14_000 <= n600 <= 21_000 and dt < 12.0,
                  f"N=600 gives {n600} pairs (window [14000, 21000]); N=2000 pairing took {dt:.2f}s (< 12s)")


def criterion_6():
    err = betweenness_max_error(200, seed=0, max_nodes=12)
    path = betweenness_node_weights(graph_from_edges(3, [(1, 2), (2, 3)]))
    star = betweenness_node_weights(graph_from_edges(5, [(1, j) for j in range(2, 6)]))
    cycle = betweenness_node_weights(graph_from_edges(4, [(1, 2), (2, 3), (3, 4), (1, 4)]))
    closed = (
        path == {1: 0, 2: 1, 3: 0}
        and star[1] == 6 and all(star[j] == 0 for j in range(2, 6))
        and all(abs(v - 0.5) < 1e-12 for v in cycle.values())
    )
    return record(6, err <= 1e-9 and closed,
                  f"max |fast - brute force| = {err:.2e} over 200 graphs; closed forms match: {closed}")


def criterion_7():
    rng = np.random.default_rng(0)
    ok = True
    for trial in range(200):
        n = int(rng.integers(1, 60))
        w = {i: float(x) for i, x in enumerate(rng.exponential(size=n) * rng.uniform(0, 1e3), start=1)}
        if trial % 10 == 0:
            w = {i: 0.0 for i in w}
        p = sampling_probabilities(w)
        in_range = all(0.5 <= v <= 1.0 for v in p.values())
        top = max(w.values())
        at_one = top == 0 or p[max(w, key=w.get)] == 1.0
        s = float(rng.uniform(1e-3, 1e3))
        ps = sampling_probabilities({i: x * s for i, x in w.items()})
        invariant = all(abs(ps[i] - p[i]) <= 1e-12 for i in p)
        ok &= in_range and at_one and invariant
    poses = generate_trajectory("orbit", 40)
    from camgraph.graph import build_camera_graph

    g = build_camera_graph(poses, select_pairs(poses, PairingParams()))
    ok &= min(g.sampling_prob.values()) >= 0.5 and max(g.sampling_prob.values()) == 1.0
    return record(7, ok, "P in [0.5, 1], argmax weight at 1.0, invariant under weight scaling (200 random sets + orbit graph)")


def criterion_8():
    pts = np.random.default_rng(0).uniform(size=(300_000, 3))
    params = OctreeParams(target_count=100_000)
    tree = build_octree(pts, params)
    first = pts[prune(tree, params)]
    budget = abs(len(first) - 100_000) <= 1
    ident_idx = prune(tree, OctreeParams(tau=0))
    identity = np.array_equal(pts[ident_idx], pts)
    again = first[prune(build_octree(first, params, bounds=tree.bounds), params)]
    idempotent = np.array_equal(again, first)
    return record(8, budget and identity and idempotent,
                  f"300000 -> {len(first)} points (100000 +/- 1); tau=0 identity: {identity}; idempotent: {idempotent}")


def _plane_case(depth_scale):
    h, w, f, Z = 48, 64, 50.0, 4.0
    K = np.array([[f, 0, (w - 1) / 2], [0, f, (h - 1) / 2], [0, 0, 1.0]])
    b = Z / f  # one pixel of disparity

    def render(cx):
        v, u = np.mgrid[0:h, 0:w].astype(float)
        X = (u - K[0, 2]) * Z / f + cx
        Y = (v - K[1, 2]) * Z / f
        return np.stack([0.5 + 0.2 * np.sin(5.0 * X) * np.cos(3.0 * Y), 0.5 + 0.2 * np.cos(4.0 * X + 2.0 * Y)], -1)

    inputs = ConsistencyInputs(render(0.0), render(b), K, K, np.eye(3), [-b, 0, 0], np.full((h, w), Z * depth_scale))
    return consistency_loss(inputs)[0]


def criterion_9():
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(48, 64, 3))
    K = np.array([[50.0, 0, 31.5], [0, 50.0, 23.5], [0, 0, 1]])
    identity, frac = consistency_loss(ConsistencyInputs(img, img, K, K, np.eye(3), np.zeros(3), np.full((48, 64), 3.0)))
    good, bad = _plane_case(1.0), _plane_case(2.0)
    ok = identity == 0.0 and frac == 1.0 and good < 1e-3 and bad >= 10 * good
    return record(9, ok, f"identity loss {identity!r}; plane loss {good:.2e} (< 1e-3), doubled depth {bad:.2e} (>= 10x)")


def criterion_10():
    from camgraph.formats import PointCloud, write_pfm, write_ply, write_png

    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        rng = np.random.default_rng(0)
        write_ply(d / "pts.ply", PointCloud(rng.uniform(size=(2000, 3)), rng.integers(0, 256, (2000, 3)).astype(np.uint8)))
        write_png(d / "i.png", rng.uniform(size=(12, 16, 3)))
        write_pfm(d / "d.pfm", np.full((12, 16), 2.0))
        K = [[8.0, 0, 7.5], [0, 8.0, 5.5], [0, 0, 1]]
        (d / "cam.json").write_text(json.dumps({"K_i": K, "K_j": K, "R_ji": np.eye(3).tolist(), "T_ji": [0.01, 0, 0]}))
        runs = []
        for name in ("a", "b"):
            o = d / name
            (o / "pipe").mkdir(parents=True)
            cmds = [
                ["gen", "--kind", "grid", "--n", "60", "--noise", "0.1", "--seed", "3", "--out", o / "poses.json"],
                ["pairs", "--poses", o / "poses.json", "--out", o / "pairs.json", "--match-list", o / "pairs.txt"],
                ["filter", "--poses", o / "poses.json", "--pairs", o / "pairs.json", "--out", o / "kept.json",
                 "--match-list", o / "kept.txt", "--report", o / "report.json"],
                ["graph", "--poses", o / "poses.json", "--pairs", o / "kept.json", "--out", o / "weights.json"],
                ["octree", "--in", d / "pts.ply", "--out", o / "pruned.ply", "--target-points", "700"],
                ["consistency", "--image-i", d / "i.png", "--image-j", d / "i.png", "--depth-i", d / "d.pfm",
                 "--camera", d / "cam.json", "--out", o / "loss.json"],
                ["validate", "--quick", "--samples", "100000", "--out", o / "validate.json"],
                ["pipeline", "--poses", o / "poses.json", "--points", d / "pts.ply", "--target-points", "500",
                 "--out-dir", o / "pipe"],
            ]
            for cmd in cmds:
                proc = subprocess.run([sys.executable, "-m", "camgraph.cli", *map(str, cmd)], capture_output=True)
                if proc.returncode != 0:
                    return record(10, False, f"stage {cmd[0]} exited {proc.returncode}: {proc.stderr.decode()[-200:]}")
            runs.append({str(p.relative_to(o)): p.read_bytes() for p in sorted(o.rglob("*")) if p.is_file()})
        same = runs[0] == runs[1]
        diff = sorted(k for k in runs[0] if runs[0][k] != runs[1].get(k))
    return record(10, same, f"{len(runs[0])} output files across 8 verbs byte-identical over two runs" if same
                  else f"differing outputs: {diff}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{k}" for k in range(1, 11)])
def test_criterion(check):
    passed, detail = check()
    assert passed, detail


if __name__ == "__main__":
    failed = 0
    for check in CRITERIA:
        passed, detail = check()
        failed += not passed
        print(f"{check.__name__:>13}: {'PASS' if passed else 'FAIL'}  {detail}")
    sys.exit(1 if failed else 0)

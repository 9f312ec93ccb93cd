"""Self-checks behind ``camgraph validate``: rates, oracle agreement, connectivity."""
from __future__ import annotations

import numpy as np

from .geometry import CameraPose, encode_orientation, encode_orientation_oracle
from .graph import betweenness_node_weights, brute_force_betweenness, connectivity, graph_from_edges
from .pairing import PairingParams, select_pairs
from .quadrant import LOOSE, STRICT, StateTable, monte_carlo_filter_rate, random_unit_vectors
from .trajectories import disconnects_without_connection, generate_trajectory

EXPECTED_FILTER_RATE = {STRICT: 13 / 16, LOOSE: 6 / 16}
RATE_TOLERANCE = 0.01
SIGN_MARGIN = 1e-9


def random_poses(rng: np.random.Generator, n: int, scale: float = 1.0) -> list[CameraPose]:
    P = rng.uniform(0.0, scale, size=(n, 3))
    D = random_unit_vectors(rng, n)
    return [CameraPose(k + 1, f"{k + 1}", tuple(P[k]), tuple(D[k])) for k in range(n)]


def orientation_mismatches(n_pairs: int, seed: int) -> tuple[int, int]:
    """(mismatches, pairs compared) between the fast and rotation-based encoders.

    Pairs with any sign argument within ``SIGN_MARGIN`` of zero are skipped.
    """
    rng = np.random.default_rng(seed)
    Di = random_unit_vectors(rng, n_pairs)
    Dj = random_unit_vectors(rng, n_pairs)
    c = np.cross(Di, Dj)
    dot = np.einsum("ij,ij->i", Di, Dj)
    ok = (np.abs(c[:, 0]) > SIGN_MARGIN) & (np.abs(c[:, 1]) > SIGN_MARGIN) & (np.abs(dot) > SIGN_MARGIN)
    origin = (0.0, 0.0, 0.0)
    bad = 0
    for k in np.flatnonzero(ok):
        ci = CameraPose(1, "i", origin, tuple(Di[k]))
        cj = CameraPose(2, "j", origin, tuple(Dj[k]))
        if encode_orientation(ci, cj) != encode_orientation_oracle(ci, cj):
            bad += 1
    return bad, int(ok.sum())


def random_pairing_params(rng: np.random.Generator, n: int) -> PairingParams:
    return PairingParams(
        r=int(rng.integers(1, 8)),
        h=int(rng.integers(0, max(2, n // 2))),
        w=int(rng.integers(0, 4)),
    )


def connectivity_trials(trials: int, seed: int, n_range=(8, 300)) -> int:
    """Number of random pose sets whose pairing graph is NOT connected."""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(trials):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        poses = random_poses(rng, n, scale=float(rng.uniform(0.1, 100.0)))
        pairs = select_pairs(poses, random_pairing_params(rng, n))
        count, _ = connectivity(graph_from_edges(n, pairs.pairs))
        failures += count != 1
    return failures


def random_connected_edges(rng: np.random.Generator, n: int, extra_p: float) -> list[tuple[int, int]]:
    """Random spanning tree plus independent extra edges."""
    order = rng.permutation(n) + 1
    edges = set()
    for k in range(1, n):
        a = int(order[k])
        b = int(order[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    for a in range(1, n + 1):
        for b in range(a + 1, n + 1):
            if rng.random() < extra_p:
                edges.add((a, b))
    return sorted(edges)


def betweenness_max_error(graphs: int, seed: int, max_nodes: int = 12) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(graphs):
        n = int(rng.integers(2, max_nodes + 1))
        edges = random_connected_edges(rng, n, float(rng.uniform(0.0, 0.5)))
        fast = betweenness_node_weights(graph_from_edges(n, edges))
        ref = brute_force_betweenness(n, edges)
        worst = max(worst, max(abs(fast[i] - ref[i]) for i in ref))
    return worst


def run_validation(samples: int = 1_000_000, seed: int = 0, quick: bool = False) -> dict:
    checks = {}
    for mode in (STRICT, LOOSE):
        rate = monte_carlo_filter_rate(mode, samples, seed)
        expected = EXPECTED_FILTER_RATE[mode]
        checks[f"filter_rate_{mode}"] = {
            "value": rate,
            "expected": expected,
            "tolerance": RATE_TOLERANCE,
            "passed": abs(rate - expected) <= RATE_TOLERANCE,
        }

    tables = {m: StateTable.load(m) for m in (STRICT, LOOSE)}
    counts = {m: int(t.mask.sum()) for m, t in tables.items()}
    nested = all(tables[STRICT].admissible[p] <= tables[LOOSE].admissible[p] for p in range(8))
    checks["state_table"] = {"counts": counts, "nested": nested,
                             "passed": counts == {STRICT: 12, LOOSE: 40} and nested}

    bad, compared = orientation_mismatches(10_000 if quick else 100_000, seed)
    checks["orientation_oracle"] = {"mismatches": bad, "compared": compared, "passed": bad == 0}

    trials = 50 if quick else 1000
    failures = connectivity_trials(trials, seed)
    fixture = generate_trajectory("two_cluster", 8, 0.0, seed)
    split = disconnects_without_connection(fixture)
    checks["connectivity"] = {"trials": trials, "disconnected": failures,
                              "two_cluster_split": split, "passed": failures == 0 and split}

    err = betweenness_max_error(40 if quick else 200, seed)
    checks["betweenness_oracle"] = {"max_abs_error": err, "passed": err <= 1e-9}

    return {"seed": seed, "samples": samples, "checks": checks,
            "passed": all(c["passed"] for c in checks.values())}

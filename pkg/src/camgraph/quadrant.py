"""Relative-pose state table and the pair filter built on it."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import (
    CameraPose,
    check_pose_ids,
    int_to_bits,
    orientation_codes,
    orientation_code_for_label,
    pair_codes,
    pose_arrays,
    position_code_for_label,
    position_codes,
)
from .pairing import CONNECTION, PairSet

STRICT = "strict"
LOOSE = "loose"
MODES = (STRICT, LOOSE)

# Admissible orientation quadrants per position quadrant, by octant label.
TABLE7_STRICT = {1: (7,), 2: (7, 8), 3: (5, 6), 4: (6,), 5: (3,), 6: (3, 4), 7: (1, 2), 8: (2,)}
TABLE7_LOOSE = {
    1: (2, 3, 6, 7),
    2: (2, 3, 4, 6, 7, 8),
    3: (1, 2, 3, 5, 6, 7),
    4: (2, 3, 6, 7),
    5: (2, 3, 6, 7),
    6: (2, 3, 4, 6, 7, 8),
    7: (1, 2, 3, 5, 6, 7),
    8: (2, 3, 6, 7),
}

COINCIDENT_EPS = 1e-9


def table_rows() -> list[tuple[int, int, int, int]]:
    """64 ``(pos_code, ori_code, strict, loose)`` rows generated from the label tables."""
    strict, loose = set(), set()
    for labels, dest in ((TABLE7_STRICT, strict), (TABLE7_LOOSE, loose)):
        for pos_label, ori_labels in labels.items():
            p = position_code_for_label(pos_label)
            for ol in ori_labels:
                dest.add((p, orientation_code_for_label(ol)))
    return [(p, o, int((p, o) in strict), int((p, o) in loose)) for p in range(8) for o in range(8)]


def format_rows(rows) -> str:
    bits = lambda c: "".join(map(str, int_to_bits(c)))  # noqa: E731
    return "".join(f"{bits(p)} {bits(o)} {s} {l}\n" for p, o, s, l in rows)


def parse_rows(text: str) -> list[tuple[int, int, int, int]]:
    rows = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"state table line {lineno}: expected 4 fields, got {len(parts)}")
        pb, ob, s, l = parts
        if len(pb) != 3 or len(ob) != 3 or set(pb + ob) - {"0", "1"} or s not in "01" or l not in "01" or len(s + l) != 2:
            raise ValueError(f"state table line {lineno}: malformed row {line!r}")
        p, o = int(pb, 2), int(ob, 2)
        if (p, o) in seen:
            raise ValueError(f"state table line {lineno}: duplicate code {pb} {ob}")
        seen.add((p, o))
        rows.append((p, o, int(s), int(l)))
    if len(rows) != 64:
        raise ValueError(f"state table must have 64 rows, got {len(rows)}")
    return rows


@dataclass(frozen=True)
class StateTable:
    mode: str
    admissible: dict[int, frozenset[int]]

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def from_rows(cls, rows, mode: str) -> "StateTable":
        col = 2 if mode == STRICT else 3
        adm: dict[int, set[int]] = {p: set() for p in range(8)}
        for row in rows:
            if row[col]:
                adm[row[0]].add(row[1])
        return cls(mode, {p: frozenset(o) for p, o in adm.items()})

    @classmethod
    def load(cls, mode: str, path: str | Path | None = None) -> "StateTable":
        if path is None:
            text = resources.files("camgraph").joinpath("data/state_table.txt").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_rows(parse_rows(text), mode)

    @property
    def mask(self) -> np.ndarray:
        """Boolean lookup over the 64 six-bit codes."""
        m = np.zeros(64, dtype=bool)
        for p, os in self.admissible.items():
            for o in os:
                m[p * 8 + o] = True
        return m

    def admits(self, code: int) -> bool:
        return (code & 7) in self.admissible[code >> 3]


@dataclass
class FilterReport:
    input_pairs: int = 0
    kept: int = 0
    filtered: int = 0
    bypass: int = 0
    coincident: int = 0
    histogram: list[int] = field(default_factory=lambda: [0] * 64)

    def to_dict(self) -> dict:
        return {
            "input_pairs": self.input_pairs,
            "kept": self.kept,
            "filtered": self.filtered,
            "bypass": self.bypass,
            "coincident": self.coincident,
            "histogram": list(self.histogram),
        }


def filter_pairs(poses: Sequence[CameraPose], pairs: PairSet, table: StateTable) -> tuple[PairSet, FilterReport]:
    """Keep connection pairs, coincident cameras and pairs whose 6-bit code the table admits.

    The code of a pair ``(a, b)`` with ``a < b`` is taken with ``a`` as the
    reference camera.
    """
    check_pose_ids(poses)
    n = len(poses)
    for a, b in pairs:
        if not (1 <= a <= n and 1 <= b <= n):
            raise KeyError(f"pair ({a}, {b}) references an unknown camera id")
    P, D = pose_arrays(poses)
    plist = pairs.pairs
    report = FilterReport(input_pairs=len(plist))
    if not plist:
        return PairSet(), report

    ia, ib = pairs.as_arrays()
    ia, ib = ia - 1, ib - 1
    codes = pair_codes(P, D, ia, ib)
    report.histogram = np.bincount(codes, minlength=64).tolist()
    bypass = np.array([CONNECTION in pairs.tags[p] for p in plist])
    coincident = np.linalg.norm(P[ib] - P[ia], axis=1) < COINCIDENT_EPS
    keep = bypass | coincident | table.mask[codes]

    report.bypass = int(bypass.sum())
    report.coincident = int((coincident & ~bypass).sum())
    report.kept = int(keep.sum())
    report.filtered = report.input_pairs - report.kept
    return pairs.subset(p for p, k in zip(plist, keep) if k), report


def filter_rate(table: StateTable, Pi, Di, Pj, Dj) -> float:
    """Fraction of the given camera pairs that the table rejects (no connection bypass)."""
    Pi, Di, Pj, Dj = (np.asarray(x, dtype=np.float64) for x in (Pi, Di, Pj, Dj))
    codes = position_codes(Pi, Pj) * 8 + orientation_codes(Di, Dj)
    keep = table.mask[codes] | (np.linalg.norm(Pj - Pi, axis=1) < COINCIDENT_EPS)
    return float(1.0 - keep.mean())


def random_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    while np.any(norms < 1e-12):
        bad = norms[:, 0] < 1e-12
        v[bad] = rng.normal(size=(int(bad.sum()), 3))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norms


def monte_carlo_filter_rate(mode: str, n_samples: int = 1_000_000, seed: int = 0,
                            cube_size: float = 1.0, table: StateTable | None = None) -> float:
    """Filtered fraction for camera pairs with uniform positions and directions.

    Positions are uniform in a cube of side ``cube_size`` (``0`` makes every
    camera coincident); directions are uniform on the sphere.
    """
    if n_samples < 100_000:
        raise ValueError(f"n_samples must be >= 1e5, got {n_samples}")
    table = table or StateTable.load(mode)
    rng = np.random.default_rng(seed)
    rates = []
    done = 0
    chunk = 250_000
    while done < n_samples:
        m = min(chunk, n_samples - done)
        Pi = rng.uniform(0.0, cube_size, size=(m, 3))
        Pj = rng.uniform(0.0, cube_size, size=(m, 3))
        Di = random_unit_vectors(rng, m)
        Dj = random_unit_vectors(rng, m)
        rates.append(filter_rate(table, Pi, Di, Pj, Dj) * m)
        done += m
    return float(sum(rates) / n_samples)


def elongation(positions: np.ndarray) -> float:
    """Ratio of the two largest principal extents of the camera track."""
    P = np.asarray(positions, dtype=np.float64)
    if len(P) < 3:
        return float("inf")
    s = np.linalg.svd(P - P.mean(axis=0), compute_uv=False)
    return float(s[0] / max(s[1], 1e-12))


def auto_mode(positions: np.ndarray, threshold: float = 5.0) -> str:
    """Loose for long, narrow (driving-like) tracks, strict otherwise."""
    return LOOSE if elongation(positions) >= threshold else STRICT


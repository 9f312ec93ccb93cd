"""Camera poses and the 3+3 bit relative-pose encodings.

Bit order everywhere is (x, y, z) with the first bit most significant, so a
3-bit code is ``4*bx + 2*by + bz`` and the 6-bit code is ``8*pos + ori``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

Bits3 = tuple[int, int, int]

# Standard octant order over a signed axis triple (A, B, C).
_OCTANT_SIGNS = [
    (1, 1, 1), (-1, 1, 1), (-1, -1, 1), (1, -1, 1),
    (1, 1, -1), (-1, 1, -1), (-1, -1, -1), (1, -1, -1),
]


@dataclass(frozen=True)
class CameraPose:
    """A camera centre and unit viewing direction.

    ``direction`` is normalised on construction; a zero vector is rejected.
    """

    id: int
    name: str
    position: tuple[float, float, float]
    direction: tuple[float, float, float]

    def __post_init__(self):
        p = tuple(float(v) for v in self.position)
        d = np.asarray(self.direction, dtype=np.float64)
        if len(p) != 3 or d.shape != (3,):
            raise ValueError(f"camera {self.id}: position and direction must be 3-vectors")
        if not (all(math.isfinite(v) for v in p) and np.all(np.isfinite(d))):
            raise ValueError(f"camera {self.id}: non-finite pose")
        n = float(np.linalg.norm(d))
        if n < 1e-12:
            raise ValueError(f"camera {self.id}: zero-length direction")
        # already-unit vectors are left bit-identical so files round-trip exactly
        if abs(n - 1.0) > 1e-12:
            d = d / n
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "direction", tuple(float(v) for v in d))

    @property
    def p(self) -> np.ndarray:
        return np.array(self.position)

    @property
    def d(self) -> np.ndarray:
        return np.array(self.direction)


def check_pose_ids(poses: Sequence[CameraPose]) -> None:
    """Raise unless ids are exactly 1..N in list order."""
    for k, pose in enumerate(poses, start=1):
        if pose.id != k:
            raise ValueError(f"pose ids must be contiguous 1..N in order; position {k} has id {pose.id}")


def pose_arrays(poses: Sequence[CameraPose]) -> tuple[np.ndarray, np.ndarray]:
    """Stack poses into (N, 3) position and direction arrays."""
    P = np.array([c.position for c in poses], dtype=np.float64).reshape(-1, 3)
    D = np.array([c.direction for c in poses], dtype=np.float64).reshape(-1, 3)
    return P, D


def sgn(x: float) -> int:
    if not math.isfinite(x):
        raise ValueError(f"sgn of non-finite value {x!r}")
    return 1 if x > 0 else 0


def bits_to_int(bits: Sequence[int]) -> int:
    out = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"not a bit: {b!r}")
        out = (out << 1) | int(b)
    return out


def int_to_bits(value: int, width: int = 3) -> tuple[int, ...]:
    if not 0 <= value < (1 << width):
        raise ValueError(f"{value} does not fit in {width} bits")
    return tuple((value >> (width - 1 - k)) & 1 for k in range(width))


def encode_position(ci: CameraPose, cj: CameraPose) -> Bits3:
    """Sign bits of the offset ``p_j - p_i``."""
    return tuple(sgn(b - a) for a, b in zip(ci.position, cj.position))  # type: ignore[return-value]


def encode_orientation(ci: CameraPose, cj: CameraPose) -> Bits3:
    """Orientation bits from one cross product and one inner product.

    Returns ``(sgn(c_x), sgn(c_y), sgn(d_i . d_j))`` with ``c = d_i x d_j``.
    """
    c = np.cross(ci.d, cj.d)
    return (sgn(float(c[0])), sgn(float(c[1])), sgn(float(np.dot(ci.d, cj.d))))


def skew(v) -> np.ndarray:
    """Anti-symmetric cross-product matrix, ``skew(a) @ b == a x b``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def encode_orientation_matrix(ci: CameraPose, cj: CameraPose) -> Bits3:
    """Same code as :func:`encode_orientation`, via ``e_x [d_i]x d_j`` and ``e_y [d_i]x d_j``."""
    S = skew(ci.d)
    ex = np.array([1.0, 0.0, 0.0])
    ey = np.array([0.0, 1.0, 0.0])
    return (
        sgn(float(ex @ S @ cj.d)),
        sgn(float(ey @ S @ cj.d)),
        sgn(float(ci.d @ cj.d)),
    )


def _axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    K = skew(axis)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def canonical_rotation(d_i, d_j) -> np.ndarray:
    """Rotation taking ``d_i`` to +z with the twist about +z fixed by the pair.

    First an axis-angle alignment of ``d_i`` onto +z (a 180 degree turn about x
    is applied first when ``d_i`` is anti-parallel to +z). The frame is then
    twisted about +z until the rotated cross product ``d_i x d_j`` lies along
    ``(c_x, c_y, 0)`` of the unrotated cross product, which fixes the one free
    degree of freedom left by the alignment.
    """
    d_i = np.asarray(d_i, dtype=np.float64)
    d_j = np.asarray(d_j, dtype=np.float64)
    z = np.array([0.0, 0.0, 1.0])
    R = np.eye(3)
    v = d_i
    if v[2] < -1.0 + 1e-9:
        R = np.diag([1.0, -1.0, -1.0])
        v = R @ v
    axis = np.cross(v, z)
    s = np.linalg.norm(axis)
    if s > 1e-15:
        angle = math.atan2(s, float(np.dot(v, z)))
        R = _axis_angle_matrix(axis, angle) @ R

    c = np.cross(d_i, d_j)
    target = c[:2]
    rotated = (R @ c)[:2]
    if np.linalg.norm(target) > 1e-15 and np.linalg.norm(rotated) > 1e-15:
        phi = math.atan2(target[1], target[0]) - math.atan2(rotated[1], rotated[0])
        R = _axis_angle_matrix(z, phi) @ R
    return R


_ORACLE_SNAP = 1e-12


def encode_orientation_oracle(ci: CameraPose, cj: CameraPose) -> Bits3:
    """Orientation bits read off ``d_j`` after an explicit change of frame.

    In the canonical frame ``d_i`` is +z, so ``d_i x d_j`` becomes
    ``(-d'_y, d'_x, 0)`` and the cross-sign bits are ``(sgn(-d'_y), sgn(d'_x))``.
    """
    R = canonical_rotation(ci.d, cj.d)
    dj = R @ cj.d
    # rotation round-off must not flip an exact zero into a 1 bit
    dj[np.abs(dj) < _ORACLE_SNAP] = 0.0
    return (sgn(float(-dj[1])), sgn(float(dj[0])), sgn(float(dj[2])))


def concat_encoding(pos: Sequence[int], ori: Sequence[int]) -> int:
    return bits_to_int(pos) * 8 + bits_to_int(ori)


def split_encoding(code: int) -> tuple[Bits3, Bits3]:
    if not 0 <= code < 64:
        raise ValueError(f"6-bit code out of range: {code}")
    return int_to_bits(code >> 3), int_to_bits(code & 7)  # type: ignore[return-value]


# -- vectorised forms ---------------------------------------------------------

def position_codes(Pi: np.ndarray, Pj: np.ndarray) -> np.ndarray:
    diff = np.asarray(Pj) - np.asarray(Pi)
    b = (diff > 0).astype(np.int64)
    return b[..., 0] * 4 + b[..., 1] * 2 + b[..., 2]


def orientation_codes(Di: np.ndarray, Dj: np.ndarray) -> np.ndarray:
    Di = np.asarray(Di)
    Dj = np.asarray(Dj)
    c = np.cross(Di, Dj)
    dot = np.einsum("...k,...k->...", Di, Dj)
    return (c[..., 0] > 0).astype(np.int64) * 4 + (c[..., 1] > 0) * 2 + (dot > 0)


def pair_codes(P: np.ndarray, D: np.ndarray, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
    """6-bit codes of camera ``ib`` relative to camera ``ia`` (0-based indices)."""
    return position_codes(P[ia], P[ib]) * 8 + orientation_codes(D[ia], D[ib])


# -- human-readable quadrant labels -------------------------------------------
#
# Octants are numbered in the standard order over the axis triple
# (-z, x, y). This is the only numbering that puts position bits 011 in
# octant 3 and the right/+y/rear offset (x>0, y>0, z<0) in octant 1.
# Orientation labels name the octant of d_j in the canonical frame of d_i,
# where d_j's signs are (x: sgn c_y, y: not sgn c_x, z: sgn dot).

def _octant_label(bx: int, by: int, bz: int) -> int:
    signs = (-1 if bz else 1, 1 if bx else -1, 1 if by else -1)
    return _OCTANT_SIGNS.index(signs) + 1


def position_label(code: int) -> int:
    bx, by, bz = int_to_bits(code)
    return _octant_label(bx, by, bz)


def orientation_label(code: int) -> int:
    b0, b1, b2 = int_to_bits(code)
    return _octant_label(b1, 1 - b0, b2)


def position_code_for_label(label: int) -> int:
    return next(c for c in range(8) if position_label(c) == label)


def orientation_code_for_label(label: int) -> int:
    return next(c for c in range(8) if orientation_label(c) == label)

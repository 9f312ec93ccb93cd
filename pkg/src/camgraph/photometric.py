"""Depth-based reprojection between two views and the L1 consistency loss.

Pixel coordinates are ``(u, v)`` = (column, row) with pixel centres on
integers. A pixel of image i is lifted with its depth, moved into camera j by
``X' = R_ji X + T_ji`` and projected with ``K_j``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.07


@dataclass
class ConsistencyInputs:
    image_i: np.ndarray
    image_j: np.ndarray
    K_i: np.ndarray
    K_j: np.ndarray
    R_ji: np.ndarray
    T_ji: np.ndarray
    depth_i: np.ndarray
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        self.image_i = _as_hwc(self.image_i, "image_i")
        self.image_j = _as_hwc(self.image_j, "image_j")
        self.K_i = np.asarray(self.K_i, dtype=np.float64)
        self.K_j = np.asarray(self.K_j, dtype=np.float64)
        self.R_ji = np.asarray(self.R_ji, dtype=np.float64)
        self.T_ji = np.asarray(self.T_ji, dtype=np.float64).reshape(3)
        self.depth_i = np.asarray(self.depth_i, dtype=np.float64)
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.image_i.shape[2] != self.image_j.shape[2]:
            raise ValueError("images must have the same number of channels")
        if self.depth_i.shape != self.image_i.shape[:2]:
            raise ValueError(f"depth shape {self.depth_i.shape} does not match image_i {self.image_i.shape[:2]}")
        for name, K, img in (("K_i", self.K_i, self.image_i), ("K_j", self.K_j, self.image_j)):
            _check_intrinsics(name, K, img.shape[:2])
        R = self.R_ji
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1) > 1e-6:
            raise ValueError("R_ji must be a rotation matrix")


def _as_hwc(img, name: str) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"{name} must be HxW or HxWxC, got shape {a.shape}")
    return a


def _check_intrinsics(name: str, K: np.ndarray, hw: tuple[int, int]) -> None:
    if K.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3")
    if K[0, 1] != 0 or np.any(K[2] != [0, 0, 1]) or K[1, 0] != 0:
        raise ValueError(f"{name} must be a zero-skew pinhole matrix")
    if K[0, 0] <= 0 or K[1, 1] <= 0:
        raise ValueError(f"{name} focal lengths must be positive")
    h, w = hw
    cx, cy = K[0, 2], K[1, 2]
    if not (-0.5 <= cx <= w - 0.5 and -0.5 <= cy <= h - 0.5):
        raise ValueError(f"{name} principal point ({cx}, {cy}) lies outside the {w}x{h} image")


SNAP_TOL = 1e-9


def _snap(x: np.ndarray) -> np.ndarray:
    # round-off from K^-1 then K must not push a pixel off the grid or off the image
    r = np.round(x)
    return np.where(np.abs(x - r) < SNAP_TOL, r, x)


def warp_coords(u: np.ndarray, v: np.ndarray, depth: np.ndarray, inputs: ConsistencyInputs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Warp pixel coordinates of image i into image j.

    Returns ``(u', v', valid)`` where ``valid`` requires a finite positive
    depth, positive depth in camera j and a landing point inside image j's
    bilinear support.
    """
    good_depth = np.isfinite(depth) & (depth > 0)
    d = np.where(good_depth, depth, 1.0)
    rays = np.linalg.solve(inputs.K_i, np.stack([u, v, np.ones_like(u)], axis=0).reshape(3, -1))
    X = rays * d.reshape(1, -1)
    Xj = inputs.R_ji @ X + inputs.T_ji[:, None]
    z = Xj[2]
    in_front = z > 0
    proj = inputs.K_j @ Xj
    zs = np.where(in_front, z, 1.0)
    uj = _snap((proj[0] / zs).reshape(np.shape(u)))
    vj = _snap((proj[1] / zs).reshape(np.shape(u)))
    h, w = inputs.image_j.shape[:2]
    inside = (uj >= 0) & (uj <= w - 1) & (vj >= 0) & (vj <= h - 1)
    valid = good_depth & in_front.reshape(np.shape(u)) & inside
    return uj, vj, valid


def warp_pixel(p, inputs: ConsistencyInputs) -> tuple[float, float] | None:
    """Warp one pixel ``(u, v)`` of image i; ``None`` when it cannot be sampled in image j."""
    u, v = float(p[0]), float(p[1])
    h, w = inputs.image_i.shape[:2]
    if not (0 <= u <= w - 1 and 0 <= v <= h - 1):
        raise ValueError(f"pixel {p} lies outside image i")
    depth = inputs.depth_i[int(round(v)), int(round(u))]
    uj, vj, ok = warp_coords(np.array([u]), np.array([v]), np.array([depth]), inputs)
    if not ok[0]:
        return None
    return float(uj[0]), float(vj[0])


def bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample an HxWxC image at real coordinates inside ``[0, W-1] x [0, H-1]``."""
    h, w = img.shape[:2]
    u0 = np.clip(np.floor(u).astype(np.int64), 0, max(w - 2, 0))
    v0 = np.clip(np.floor(v).astype(np.int64), 0, max(h - 2, 0))
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    a = (u - u0)[..., None]
    b = (v - v0)[..., None]
    top = img[v0, u0] * (1 - a) + img[v0, u1] * a
    bot = img[v1, u0] * (1 - a) + img[v1, u1] * a
    return top * (1 - b) + bot * b


def consistency_loss(inputs: ConsistencyInputs) -> tuple[float, float]:
    """``lambda`` times the mean per-pixel L1 colour difference over valid pixels.

    The per-pixel difference is summed over channels. Returns
    ``(loss, valid_fraction)``; the loss is 0 when no pixel is valid.
    """
    h, w = inputs.image_i.shape[:2]
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    uj, vj, valid = warp_coords(u, v, inputs.depth_i, inputs)
    frac = float(valid.mean())
    if not valid.any():
        log.warning("no pixel of image i reprojects validly into image j")
        return 0.0, frac
    sampled = bilinear(inputs.image_j, uj[valid], vj[valid])
    diff = np.abs(inputs.image_i[valid] - sampled).sum(axis=-1)
    return float(inputs.lam * diff.mean()), frac

"""Readers and writers for poses, pair lists, graph exports, PLY, PFM and PNG."""
from __future__ import annotations

import json
import logging
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import CameraPose
from .pairing import PairSet

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class DataError(ValueError):
    """Malformed or inconsistent input data."""


# -- files ---------------------------------------------------------------------

def atomic_write(path: str | Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


# -- rotations -----------------------------------------------------------------

def qvec_to_rotmat(q) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion; the quaternion is normalised first."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not n > 0:
        raise ValueError("zero quaternion")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * y * y - 2 * z * z, 2 * x * y - 2 * w * z, 2 * z * x + 2 * w * y],
        [2 * x * y + 2 * w * z, 1 - 2 * x * x - 2 * z * z, 2 * y * z - 2 * w * x],
        [2 * z * x - 2 * w * y, 2 * y * z + 2 * w * x, 1 - 2 * x * x - 2 * y * y],
    ])


def rotmat_to_qvec(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return -q if q[0] < 0 else q


def pose_from_colmap(image_id: int, name: str, qvec, tvec) -> CameraPose:
    """World-to-camera (q, t) to centre ``-R^T t`` and viewing direction ``R^T e_z``."""
    R = qvec_to_rotmat(qvec)
    t = np.asarray(tvec, dtype=np.float64)
    center = -R.T @ t
    return CameraPose(image_id, name, tuple(center), tuple(R[2]))


def look_rotation(direction, up=(0.0, -1.0, 0.0)) -> np.ndarray:
    """World-to-camera rotation whose third row is ``direction``."""
    z = np.asarray(direction, dtype=np.float64)
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(up, z)
    if np.linalg.norm(x) < 1e-8:
        x = np.cross([1.0, 0.0, 0.0] if abs(z[0]) < 0.9 else [0.0, 0.0, 1.0], z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])


def pose_to_colmap(pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    R = look_rotation(pose.direction)
    q = rotmat_to_qvec(R)
    t = -R @ pose.p
    return q, t


# -- poses ---------------------------------------------------------------------

_SPLIT = re.compile(r"\s+")


def parse_colmap_images(text: str) -> list[CameraPose]:
    """Poses from COLMAP ``images.txt``; the 2D point line after each image line is skipped."""
    poses = []
    seen: set[int] = set()
    expect_points = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if expect_points:
            expect_points = False
            continue
        if not line:
            continue
        parts = _SPLIT.split(line, maxsplit=9)
        if len(parts) < 10:
            raise DataError(f"images.txt line {lineno}: expected 10 fields, got {len(parts)}")
        try:
            image_id = int(parts[0])
            q = [float(v) for v in parts[1:5]]
            t = [float(v) for v in parts[5:8]]
            int(parts[8])
        except ValueError as exc:
            raise DataError(f"images.txt line {lineno}: {exc}") from None
        if image_id in seen:
            raise DataError(f"images.txt line {lineno}: duplicate IMAGE_ID {image_id}")
        seen.add(image_id)
        try:
            poses.append(pose_from_colmap(image_id, parts[9], q, t))
        except ValueError as exc:
            raise DataError(f"images.txt line {lineno}: {exc}") from None
        expect_points = True
    return poses


def format_colmap_images(poses: Sequence[CameraPose], camera_id: int = 1) -> str:
    lines = [
        "# Image list with two lines of data per image:",
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
        "#   POINTS2D[] as (X, Y, POINT3D_ID)",
    ]
    for pose in poses:
        q, t = pose_to_colmap(pose)
        vals = " ".join(repr(float(v)) for v in (*q, *t))
        lines.append(f"{pose.id} {vals} {camera_id} {pose.name}")
        lines.append("")
    return "\n".join(lines) + "\n"


def renumber(poses: Sequence[CameraPose]) -> list[CameraPose]:
    """Poses sorted by id and relabelled 1..N (names kept)."""
    ordered = sorted(poses, key=lambda p: p.id)
    return [CameraPose(k, p.name, p.position, p.direction) for k, p in enumerate(ordered, start=1)]


def poses_to_json(poses: Sequence[CameraPose]) -> str:
    cams = [
        {"id": p.id, "name": p.name, "position": list(p.position), "direction": list(p.direction)}
        for p in poses
    ]
    return dump_json({"version": FORMAT_VERSION, "cameras": cams})


def poses_from_json(text: str) -> list[CameraPose]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"pose file is not valid JSON: {exc}") from None
    cams = doc.get("cameras") if isinstance(doc, dict) else None
    if not isinstance(cams, list):
        raise DataError("pose file needs a 'cameras' list")
    poses = []
    seen: set[int] = set()
    for k, c in enumerate(cams):
        try:
            cid = int(c["id"])
            name = str(c.get("name", f"{cid}"))
            if "direction" in c:
                pose = CameraPose(cid, name, tuple(c["position"]), tuple(c["direction"]))
            else:
                pose = pose_from_colmap(cid, name, c["quaternion"], c["translation"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"camera entry {k}: {exc!r}") from None
        if cid in seen:
            raise DataError(f"duplicate camera id {cid}")
        seen.add(cid)
        poses.append(pose)
    return poses


def load_poses(path: str | Path, fmt: str = "auto") -> list[CameraPose]:
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "auto":
        fmt = "json" if text.lstrip().startswith("{") else "colmap"
    if fmt == "json":
        poses = poses_from_json(text)
    elif fmt == "colmap":
        poses = parse_colmap_images(text)
    else:
        raise ValueError(f"unknown pose format {fmt!r}")
    return renumber(poses)


# -- pairs and match lists -------------------------------------------------------

def emit_match_list(pairs: PairSet | Sequence[tuple[int, int]], poses: Sequence[CameraPose]) -> str:
    names = {p.id: p.name for p in poses}
    lines = []
    for a, b in pairs:
        a, b = (a, b) if a < b else (b, a)
        if a not in names or b not in names:
            raise DataError(f"pair ({a}, {b}) has an id without an image name")
        lines.append(f"{names[a]} {names[b]}")
    lines.sort()
    return "".join(line + "\n" for line in lines)


def pairs_to_json(pairs: PairSet, params: dict | None = None) -> str:
    rows = [[a, b, sorted(pairs.tags[(a, b)])] for a, b in pairs.pairs]
    return dump_json({"version": FORMAT_VERSION, "params": params or {}, "pairs": rows})


def pair_params_from_json(text: str) -> dict:
    """The ``params`` block of a pair file (empty when absent)."""
    try:
        params = json.loads(text).get("params", {})
    except (AttributeError, json.JSONDecodeError) as exc:
        raise DataError(f"bad pair file: {exc}") from None
    return dict(params) if isinstance(params, dict) else {}


def pairs_from_json(text: str) -> PairSet:
    try:
        doc = json.loads(text)
        out = PairSet()
        for a, b, tags in doc["pairs"]:
            for tag in tags:
                out.add(int(a), int(b), tag)
            if not tags:
                raise ValueError(f"pair ({a}, {b}) has no origin tag")
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"bad pair file: {exc}") from None
    return out


def weights_export(graph, state_codes: dict[tuple[int, int], int], params: dict, targets: dict[int, int]) -> dict:
    nodes = [
        {
            "id": p.id,
            "name": p.name,
            "w_n": graph.node_weight[p.id],
            "P": graph.sampling_prob[p.id],
            "target": targets.get(p.id),
        }
        for p in graph.poses
    ]
    edges = [
        {"a": a, "b": b, "w_e": graph.edge_weight[(a, b)], "state_code": state_codes[(a, b)]}
        for a, b in graph.edges
    ]
    return {
        "version": FORMAT_VERSION,
        "params": params,
        "guarded_edges": graph.guarded_edges,
        "nodes": nodes,
        "edges": edges,
    }


def check_weights_export(doc: dict) -> None:
    """Raise :class:`DataError` unless the export is self-consistent."""
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported weights version {doc.get('version')!r}")
    ids = {n["id"] for n in doc["nodes"]}
    p_min = doc.get("params", {}).get("p_min", 0.0)
    for n in doc["nodes"]:
        if not (p_min - 1e-12 <= n["P"] <= 1.0):
            raise DataError(f"node {n['id']}: P={n['P']} outside [{p_min}, 1]")
    for e in doc["edges"]:
        if e["a"] not in ids or e["b"] not in ids:
            raise DataError(f"edge ({e['a']}, {e['b']}) references a missing node")


# -- PLY -----------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_PLY_NAMES = {"f4": "float", "f8": "double", "u1": "uchar"}


@dataclass
class PointCloud:
    xyz: np.ndarray
    rgb: np.ndarray | None = None
    xyz_dtype: str = "f4"
    # ASCII pass-through: property (name, type) and raw tokens, one row per point
    extra_props: list[tuple[str, str]] = field(default_factory=list)
    extra_tokens: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.xyz)

    def take(self, idx) -> "PointCloud":
        return PointCloud(
            self.xyz[idx],
            None if self.rgb is None else self.rgb[idx],
            self.xyz_dtype,
            list(self.extra_props),
            None if self.extra_tokens is None else self.extra_tokens[idx],
        )


def _read_ply_header(fh) -> tuple[str, list[tuple[str, int, list[tuple[str, str]]]]]:
    magic = fh.readline().strip()
    if magic != b"ply":
        raise DataError("not a PLY file")
    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    while True:
        line = fh.readline()
        if not line:
            raise DataError("PLY header has no end_header")
        words = line.decode("ascii", errors="replace").split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        if words[0] == "format":
            fmt = words[1]
        elif words[0] == "element":
            elements.append((words[1], int(words[2]), []))
        elif words[0] == "property":
            if not elements:
                raise DataError("PLY property before any element")
            if words[1] == "list":
                elements[-1][2].append((words[4], "list"))
            else:
                if words[1] not in _PLY_TYPES:
                    raise DataError(f"unsupported PLY type {words[1]!r}")
                elements[-1][2].append((words[2], words[1]))
        elif words[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise DataError(f"unsupported PLY format {fmt!r}")
    if not elements or elements[0][0] != "vertex":
        raise DataError("PLY vertex element must come first")
    return fmt, elements


def read_ply(path: str | Path) -> PointCloud:
    with open(path, "rb") as fh:
        fmt, elements = _read_ply_header(fh)
        _, count, props = elements[0]
        if any(t == "list" for _, t in props):
            raise DataError("list properties on vertices are not supported")
        names = [n for n, _ in props]
        for axis in "xyz":
            if axis not in names:
                raise DataError(f"PLY vertex element lacks property {axis!r}")
        if len(elements) > 1:
            log.warning("ignoring PLY elements after 'vertex': %s", [e[0] for e in elements[1:]])
        known = {"x", "y", "z", "red", "green", "blue"}
        if fmt == "ascii":
            rows = []
            for _ in range(count):
                tokens = fh.readline().split()
                if len(tokens) != len(props):
                    raise DataError(f"PLY vertex row has {len(tokens)} values, expected {len(props)}")
                rows.append([t.decode("ascii") for t in tokens])
            table = np.array(rows, dtype=object).reshape(count, len(props))
            cols = {n: table[:, k] for k, n in enumerate(names)}
            xyz = np.stack([cols[a].astype(np.float64) for a in "xyz"], axis=1)
            extra_idx = [k for k, n in enumerate(names) if n not in known]
            extra_props = [props[k] for k in extra_idx]
            extra_tokens = table[:, extra_idx] if extra_idx else None
        else:
            dtype = np.dtype([(n, "<" + _PLY_TYPES[t]) for n, t in props])
            buf = fh.read(dtype.itemsize * count)
            if len(buf) < dtype.itemsize * count:
                raise DataError("PLY binary payload is truncated")
            arr = np.frombuffer(buf, dtype=dtype, count=count)
            cols = {n: arr[n] for n in names}
            xyz = np.stack([cols[a].astype(np.float64) for a in "xyz"], axis=1)
            dropped = [n for n in names if n not in known]
            if dropped:
                log.warning("dropping unknown binary PLY properties: %s", dropped)
            extra_props, extra_tokens = [], None
    xyz_type = _PLY_TYPES[dict(props)["x"]]
    rgb = None
    if all(c in names for c in ("red", "green", "blue")):
        rgb = np.stack([np.asarray(cols[c]).astype(np.float64) for c in ("red", "green", "blue")], axis=1)
        rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    return PointCloud(xyz, rgb, "f8" if xyz_type == "f8" else "f4", extra_props, extra_tokens)


def write_ply(path: str | Path, cloud: PointCloud, binary: bool = True) -> None:
    n = len(cloud)
    ftype = cloud.xyz_dtype
    props = [(a, ftype) for a in "xyz"]
    if cloud.rgb is not None:
        props += [(c, "u1") for c in ("red", "green", "blue")]
    extra = cloud.extra_props if cloud.extra_tokens is not None else []
    if binary and extra:
        log.warning("dropping pass-through properties in binary PLY output: %s", [e[0] for e in extra])
        extra = []
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0", f"element vertex {n}"]
    header += [f"property {_PLY_NAMES[t]} {name}" for name, t in props]
    header += [f"property {t} {name}" for name, t in extra]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")
    if binary:
        arr = np.empty(n, dtype=[(name, "<" + t) for name, t in props])
        for k, a in enumerate("xyz"):
            arr[a] = cloud.xyz[:, k]
        if cloud.rgb is not None:
            for k, c in enumerate(("red", "green", "blue")):
                arr[c] = cloud.rgb[:, k]
        atomic_write(path, head + arr.tobytes())
        return
    cast = np.float32 if ftype == "f4" else np.float64
    lines = []
    for k in range(n):
        vals = [repr(float(cast(v))) for v in cloud.xyz[k]]
        if cloud.rgb is not None:
            vals += [str(int(v)) for v in cloud.rgb[k]]
        if extra:
            vals += [str(t) for t in cloud.extra_tokens[k]]
        lines.append(" ".join(vals))
    atomic_write(path, head + "".join(line + "\n" for line in lines).encode("ascii"))


# -- images ---------------------------------------------------------------------

def read_pfm(path: str | Path) -> np.ndarray:
    """PFM as float64, rows top to bottom; HxW for ``Pf``, HxWx3 for ``PF``."""
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag not in (b"PF", b"Pf"):
            raise DataError("not a PFM file")
        dims = fh.readline().split()
        while not dims:
            dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        channels = 3 if tag == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(4 * w * h * channels), dtype=dtype)
    if data.size != w * h * channels:
        raise DataError("PFM payload is truncated")
    img = data.reshape(h, w, channels)[::-1].astype(np.float64)
    return img[:, :, 0] if channels == 1 else img


def write_pfm(path: str | Path, img: np.ndarray) -> None:
    a = np.asarray(img, dtype="<f4")
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError("PFM holds HxW or HxWx3 data")
    h, w = a.shape[:2]
    head = tag + b"\n" + f"{w} {h}\n-1.0\n".encode("ascii")
    atomic_write(path, head + np.ascontiguousarray(a[::-1]).tobytes())


def read_image(path: str | Path) -> np.ndarray:
    """Image as float64 in [0, 1] (PNG and friends via Pillow) or raw PFM values."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB", "I;16", "I"):
            im = im.convert("RGB")
        a = np.asarray(im)
    scale = 65535.0 if a.dtype == np.uint16 or a.max(initial=0) > 255 else 255.0
    return a.astype(np.float64) / scale


def write_png(path: str | Path, img: np.ndarray) -> None:
    from io import BytesIO

    from PIL import Image

    a = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    buf = BytesIO()
    Image.fromarray(a).save(buf, format="PNG")
    atomic_write(path, buf.getvalue())


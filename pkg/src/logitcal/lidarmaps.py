"""Range-view / reflectance-view maps from LiDAR point clouds.

Points are moved into the camera frame, projected with a 3x4 camera matrix
and splatted to the nearest pixel (the closest point wins a pixel). The
sparse map is then densified with an inverse-distance bilateral filter:
for a pixel ``c0`` and occupied neighbors ``c_i`` in a ``c x c`` window::

    r0_hat = sum_i Gs_i Gr_i r_i / sum_i Gs_i Gr_i
    Gs_i = 1 / (1 + ||c0 - c_i||)        Gr_i = 1 / (1 + |r0 - r_i|)

``r0`` is the measured value at an occupied pixel. At an empty pixel it is
unknown, so the plain mean of the occupied window neighbors stands in.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image, PngImagePlugin

CHANNELS = ("depth", "reflectance")
MAP_FORMATS = ("pgm16", "png16", "csv")
QMAX = 65535


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray  # (n, 4): x, y, z [m], reflectance

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 4)
        if not np.all(np.isfinite(pts[:, :3])):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class ProjectionCalib:
    P: np.ndarray   # 3x4 camera projection
    Tr: np.ndarray  # 4x4 LiDAR -> camera rigid transform
    image_size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float).reshape(3, 4)
        Tr = np.asarray(self.Tr, dtype=float)
        if Tr.shape == (3, 4):
            Tr = np.vstack([Tr, [0.0, 0.0, 0.0, 1.0]])
        Tr = Tr.reshape(4, 4)
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Tr))):
            raise ValueError("calibration matrices must be finite")
        w, h = (int(v) for v in self.image_size)
        if w <= 0 or h <= 0:
            raise ValueError(f"image size must be positive, got {self.image_size}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Tr", Tr)
        object.__setattr__(self, "image_size", (w, h))


@dataclass(frozen=True, eq=False)
class SparseMap:
    """Per-pixel values with an occupancy mask; empty pixels hold 0."""

    values: np.ndarray     # (height, width) float
    occupancy: np.ndarray  # (height, width) bool

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        vals = np.where(occ, np.asarray(self.values, dtype=float), 0.0)
        if vals.shape != occ.shape or vals.ndim != 2:
            raise ValueError("values and occupancy must be 2-D arrays of the same shape")
        if not np.all(np.isfinite(vals)):
            raise ValueError("occupied pixel values must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "occupancy", occ)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @classmethod
    def empty(cls, width, height):
        return cls(np.zeros((height, width)), np.zeros((height, width), dtype=bool))

    def masked(self):
        return np.where(self.occupancy, self.values, np.nan)


def project(cloud: PointCloud, calib: ProjectionCalib, channel: str = "depth") -> SparseMap:
    """Project points to the image plane; nearest point per pixel wins.

    Pixel coordinates are rounded half-up. Points with non-positive camera
    depth or landing outside the image are dropped.
    """
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}, got {channel!r}")
    w, h = calib.image_size
    out = SparseMap.empty(w, h)
    pts = cloud.points
    if len(pts) == 0:
        return out
    homo = np.hstack([pts[:, :3], np.ones((len(pts), 1))])
    cam = homo @ calib.Tr.T
    depth = cam[:, 2]
    front = depth > 0
    cam, depth, refl = cam[front], depth[front], pts[front, 3]
    uvw = cam @ calib.P.T
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.floor(uvw[:, 0] / uvw[:, 2] + 0.5)
        v = np.floor(uvw[:, 1] / uvw[:, 2] + 0.5)
    ok = np.isfinite(u) & np.isfinite(v) & (u >= 0) & (u < w) & (v >= 0) & (v < h)
    u, v, depth, refl = u[ok].astype(int), v[ok].astype(int), depth[ok], refl[ok]
    if u.size == 0:
        return out
    value = depth if channel == "depth" else refl
    pix = v * w + u
    # order by pixel, then depth, then value so the winner is order-independent
    order = np.lexsort((value, depth, pix))
    pix, value = pix[order], value[order]
    first = np.append(True, pix[1:] != pix[:-1])
    vals = np.zeros(h * w)
    occ = np.zeros(h * w, dtype=bool)
    vals[pix[first]] = value[first]
    occ[pix[first]] = True
    return SparseMap(vals.reshape(h, w), occ.reshape(h, w))


def _shifted(a, dy, dx, fill):
    """``out[y, x] = a[y + dy, x + dx]``, ``fill`` where that falls off the image."""
    h, w = a.shape
    out = np.full_like(a, fill)
    ys, ye = max(0, -dy), min(h, h - dy)
    xs, xe = max(0, -dx), min(w, w - dx)
    if ys < ye and xs < xe:
        out[ys:ye, xs:xe] = a[ys + dy:ye + dy, xs + dx:xe + dx]
    return out


def bilateral_upsample(smap: SparseMap, mask_size: int = 13, iterations: int = 1,
                       range_weight: bool = True) -> SparseMap:
    """Densify a sparse map with the inverse-distance bilateral filter.

    Every pixel with at least one occupied neighbor inside the
    ``mask_size x mask_size`` window (clipped at the image border) receives
    the weighted mean of those neighbors; pixels with none stay empty.
    ``range_weight=False`` drops the value-similarity term, leaving pure
    inverse-distance weighting. ``iterations > 1`` feeds each output back
    in as the next input.
    """
    if int(mask_size) != mask_size or mask_size < 1 or mask_size % 2 == 0:
        raise ValueError(f"mask_size must be a positive odd integer, got {mask_size}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    out = smap
    for _ in range(iterations):
        out = _bilateral_pass(out, int(mask_size), range_weight)
    return out


def _bilateral_pass(smap, c, range_weight):
    vals, occ = smap.values, smap.occupancy
    half = c // 2
    offsets = [(dy, dx) for dy in range(-half, half + 1) for dx in range(-half, half + 1)]
    occ_f = occ.astype(float)

    count = np.zeros_like(vals)
    total = np.zeros_like(vals)
    vmin = np.full_like(vals, np.inf)
    for dy, dx in offsets:
        o = _shifted(occ_f, dy, dx, 0.0)
        r = _shifted(vals, dy, dx, 0.0)
        count += o
        total += o * r
        vmin = np.minimum(vmin, np.where(o > 0, r, np.inf))
    has = count > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        r0 = np.where(occ, vals, total / count)

    # accumulate around the window minimum so constant windows come out exact
    base = np.where(has, vmin, 0.0)
    wsum = np.zeros_like(vals)
    acc = np.zeros_like(vals)
    for dy, dx in offsets:
        o = _shifted(occ_f, dy, dx, 0.0)
        r = _shifted(vals, dy, dx, 0.0)
        wt = o / (1.0 + math.hypot(dy, dx))
        if range_weight:
            wt = wt / (1.0 + np.abs(np.where(has, r0, 0.0) - r))
        wsum += wt
        acc += wt * (r - base)
    with np.errstate(invalid="ignore", divide="ignore"):
        dense = np.where(has, base + acc / wsum, 0.0)
    return SparseMap(dense, has)


# --------------------------------------------------------------------------
# map files


@dataclass(frozen=True)
class MapRange:
    vmin: float
    vmax: float


def _default_range(smap):
    if not smap.occupancy.any():
        return MapRange(0.0, 1.0)
    v = smap.values[smap.occupancy]
    lo, hi = float(v.min()), float(v.max())
    return MapRange(lo, hi if hi > lo else lo + 1.0)


def quantize(smap: SparseMap, rng: MapRange) -> np.ndarray:
    span = rng.vmax - rng.vmin
    q = np.floor((smap.values - rng.vmin) / span * QMAX + 0.5)
    q = np.clip(q, 0, QMAX).astype(np.uint16)
    return np.where(smap.occupancy, q, 0).astype(np.uint16)


def dequantize(q: np.ndarray, occupancy: np.ndarray, rng: MapRange) -> SparseMap:
    vals = rng.vmin + q.astype(float) / QMAX * (rng.vmax - rng.vmin)
    return SparseMap(vals, occupancy)


def occupancy_path(path):
    root, _ = os.path.splitext(str(path))
    return root + ".occ.pgm"


def _write_pgm(path, arr, maxval, comments=()):
    h, w = arr.shape
    head = "P5\n" + "".join(f"# {c}\n" for c in comments) + f"{w} {h}\n{maxval}\n"
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, comments, pos = [], [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            end = data.index(b"\n", pos)
            comments.append(data[pos + 1:end].decode("ascii").strip())
            pos = end + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    pos += 1  # single whitespace before the raster
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr.astype(np.uint16), comments


def _range_from_comments(comments):
    for c in comments:
        m = re.search(r"vmin=(\S+)\s+vmax=(\S+)", c)
        if m:
            return MapRange(float(m.group(1)), float(m.group(2)))
    raise ValueError("map file lacks a 'vmin=... vmax=...' range declaration")


def write_map(smap: SparseMap, path, format: str = "pgm16", rng: MapRange | None = None):
    """Write a map; pgm16/png16 quantize ``rng`` to 0..65535 and add an occupancy sidecar.

    The sidecar is an 8-bit PGM (0 empty, 1 occupied) next to ``path``
    named ``<stem>.occ.pgm``. CSV writes full-precision values with empty
    cells for empty pixels and needs no sidecar.
    """
    if format not in MAP_FORMATS:
        raise ValueError(f"format must be one of {MAP_FORMATS}, got {format!r}")
    if format == "csv":
        with open(path, "w", newline="") as fh:
            for row_v, row_o in zip(smap.values, smap.occupancy):
                fh.write(",".join(repr(float(v)) if o else "" for v, o in zip(row_v, row_o)))
                fh.write("\n")
        return
    rng = rng or _default_range(smap)
    if not rng.vmax > rng.vmin:
        raise ValueError(f"empty quantization range {rng}")
    q = quantize(smap, rng)
    decl = f"vmin={rng.vmin!r} vmax={rng.vmax!r}"
    if format == "pgm16":
        _write_pgm(path, q, QMAX, [decl])
    else:
        info = PngImagePlugin.PngInfo()
        info.add_text("range", decl)
        Image.fromarray(q.astype(np.uint16)).save(path, format="PNG", pnginfo=info)
    _write_pgm(occupancy_path(path), smap.occupancy.astype(np.uint8), 1)


def read_map(path, format: str | None = None) -> SparseMap:
    if format is None:
        ext = os.path.splitext(str(path))[1].lower()
        format = {".pgm": "pgm16", ".png": "png16", ".csv": "csv"}.get(ext, "pgm16")
    if format == "csv":
        rows = []
        with open(path) as fh:
            for line in fh:
                rows.append(line.rstrip("\n").split(","))
        occ = np.array([[c != "" for c in r] for r in rows], dtype=bool)
        vals = np.array([[float(c) if c else 0.0 for c in r] for r in rows])
        return SparseMap(vals, occ)
    if format == "pgm16":
        q, comments = _read_pgm(path)
        rng = _range_from_comments(comments)
    elif format == "png16":
        with Image.open(path) as im:
            q = np.asarray(im, dtype=np.uint16)
            rng = _range_from_comments([im.text.get("range", "")])
    else:
        raise ValueError(f"format must be one of {MAP_FORMATS}, got {format!r}")
    occ, _ = _read_pgm(occupancy_path(path))
    return dequantize(q, occ.astype(bool), rng)


# --------------------------------------------------------------------------
# KITTI inputs


def read_kitti_calib(path, image_size=(1242, 375)) -> ProjectionCalib:
    """Parse a KITTI object calibration file (``P2``, ``R0_rect``, ``Tr_velo_to_cam``).

    When ``R0_rect`` is present it is folded into the LiDAR-to-camera
    transform so the result maps LiDAR points into the rectified frame.
    """
    data = {}
    with open(path) as fh:
        for line in fh:
            if ":" not in line:
                continue
            key, value = line.split(":", 1)
            try:
                data[key.strip()] = np.array([float(x) for x in value.split()])
            except ValueError:
                continue
    if "P2" not in data or "Tr_velo_to_cam" not in data:
        raise ValueError(f"{path}: calibration needs P2 and Tr_velo_to_cam lines")
    Tr = np.vstack([data["Tr_velo_to_cam"].reshape(3, 4), [0.0, 0.0, 0.0, 1.0]])
    if "R0_rect" in data:
        R0 = np.eye(4)
        R0[:3, :3] = data["R0_rect"].reshape(3, 3)
        Tr = R0 @ Tr
    return ProjectionCalib(data["P2"].reshape(3, 4), Tr, image_size)


def read_velodyne_bin(path) -> PointCloud:
    """KITTI velodyne scan: flat little-endian float32 records (x, y, z, reflectance)."""
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 4:
        raise ValueError(f"{path}: size is not a multiple of 4 float32 values")
    return PointCloud(raw.reshape(-1, 4).astype(float))


def write_velodyne_bin(cloud: PointCloud, path):
    np.asarray(cloud.points, dtype="<f4").tofile(path)

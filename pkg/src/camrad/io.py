"""On-disk formats.

Text files are line-delimited records under a versioned header line;
lines starting with '#' are comments.  Radar frames are stored as a
flat little-endian float32 array in range-major order next to a text
sidecar that carries the grid geometry.  All errors name the offending
file (and line where that makes sense).
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .align import Annotation, CameraObject, ColumnMask, SOURCES, WindowLog
from .errors import FormatError
from .geometry import CameraModel, GroundPlane, RadarPoint
from .rf_detect import RfImage
from .scoring import PointDet

RF_MAGIC = "rfimage v1"
DET_MAGIC = "camdet v1"
ANN_MAGIC = "radannot v1"
PLANE_MAGIC = "planelog v1"
CALIB_MAGIC = "calib v1"

RF_DATA_SUFFIX = ".rf32"
RF_HEADER_SUFFIX = ".rfh"


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _read_lines(path: Path, magic: str) -> list[tuple[int, str]]:
    """(file line number, payload line) pairs under the header."""
    try:
        raw = path.read_text().splitlines()
    except OSError as e:
        raise FormatError(f"{path}: {e}") from e
    if not raw or raw[0].strip() != magic:
        raise FormatError(f"{path}: expected header {magic!r}")
    return [(n, ln) for n, ln in enumerate(raw[1:], start=2)
            if ln.strip() and not ln.lstrip().startswith("#")]


# ----------------------------------------------------------------- RF frames

def rf_frame_paths(directory: Path, frame_id: int) -> tuple[Path, Path]:
    stem = f"{frame_id:06d}"
    return (directory / (stem + RF_DATA_SUFFIX),
            directory / (stem + RF_HEADER_SUFFIX))


def write_rf_frame(directory: Path, img: RfImage) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    data_path, hdr_path = rf_frame_paths(directory, img.frame_id)
    img.data.astype("<f4").tofile(data_path)
    lines = [RF_MAGIC,
             f"frame_id {img.frame_id}",
             f"n_range {img.n_range}",
             f"n_azimuth {img.n_azimuth}",
             f"range_res {_fmt(img.range_res)}",
             f"range_min {_fmt(img.range_min)}",
             "azimuth_rad " + " ".join(_fmt(a) for a in img.azimuth_grid)]
    hdr_path.write_text("\n".join(lines) + "\n")


def read_rf_frame(hdr_path: Path) -> RfImage:
    fields: dict[str, str] = {}
    for _, ln in _read_lines(hdr_path, RF_MAGIC):
        key, _, rest = ln.partition(" ")
        fields[key] = rest.strip()
    try:
        frame_id = int(fields["frame_id"])
        n_range = int(fields["n_range"])
        n_azimuth = int(fields["n_azimuth"])
        range_res = float(fields["range_res"])
        range_min = float(fields["range_min"])
        grid = np.array([float(t) for t in fields["azimuth_rad"].split()])
    except (KeyError, ValueError) as e:
        raise FormatError(f"{hdr_path}: bad or missing field ({e})") from e

    # Azimuths are stored at 9 significant digits, which can push a value
    # sitting exactly on the +-pi/2 domain edge a few 1e-9 past it.  A stored
    # azimuth indistinguishable from the edge at format precision is the edge.
    half = math.pi / 2
    edge = np.abs(np.abs(grid) - half) < 1e-8
    grid[edge] = np.copysign(half, grid[edge])

    data_path = hdr_path.with_suffix(RF_DATA_SUFFIX)
    try:
        flat = np.fromfile(data_path, dtype="<f4")
    except OSError as e:
        raise FormatError(f"{data_path}: {e}") from e
    if flat.size != n_range * n_azimuth:
        raise FormatError(
            f"{data_path}: expected {n_range}x{n_azimuth} values, got {flat.size}")
    try:
        return RfImage(flat.reshape(n_range, n_azimuth), range_res, range_min,
                       grid, frame_id=frame_id)
    except ValueError as e:
        raise FormatError(f"{hdr_path}: {e}") from e


def list_rf_frames(directory: Path) -> list[Path]:
    """Header paths of every frame in the directory, by frame id."""
    return sorted(Path(directory).glob("*" + RF_HEADER_SUFFIX))


# ---------------------------------------------------------- camera detections

def encode_mask(mask: ColumnMask, bbox: tuple[float, float, float, float]) -> str:
    """Rasterize a column mask to the box's integer grid, RLE-encoded.

    Format: 'w,h,c0,c1,...' with column-major runs alternating empty and
    filled, starting with empty.
    """
    u0, v0 = math.floor(bbox[0]), math.floor(bbox[1])
    w = max(1, math.ceil(bbox[2]) - u0)
    h = max(1, math.ceil(bbox[3]) - v0)
    bitmap = np.zeros((h, w), dtype=bool)
    for k in range(mask.tops.size):
        top, bot = mask.tops[k], mask.bottoms[k]
        if np.isnan(top):
            continue
        col = int(mask.u0) + k - u0
        if not (0 <= col < w):
            continue
        r0 = min(max(int(math.floor(top - v0)), 0), h)
        r1 = min(max(int(math.ceil(bot - v0)), 0), h)
        bitmap[r0:r1, col] = True

    flat = bitmap.flatten(order="F")
    runs: list[int] = []
    current, count = False, 0
    for bit in flat:
        if bit == current:
            count += 1
        else:
            runs.append(count)
            current, count = bit, 1
    runs.append(count)
    return ",".join(str(n) for n in [w, h] + runs)


def decode_mask(token: str, bbox: tuple[float, float, float, float],
                where: str) -> ColumnMask:
    try:
        vals = [int(t) for t in token.split(",")]
        w, h, runs = vals[0], vals[1], vals[2:]
    except (ValueError, IndexError) as e:
        raise FormatError(f"{where}: bad mask RLE") from e
    if w < 1 or h < 1 or sum(runs) != w * h or any(r < 0 for r in runs):
        raise FormatError(f"{where}: mask RLE does not cover its grid")
    flat = np.zeros(w * h, dtype=bool)
    pos, filled = 0, False
    for run in runs:
        if filled:
            flat[pos:pos + run] = True
        pos += run
        filled = not filled
    bitmap = flat.reshape((h, w), order="F")

    u0, v0 = math.floor(bbox[0]), math.floor(bbox[1])
    tops = np.full(w, np.nan)
    bottoms = np.full(w, np.nan)
    for col in range(w):
        rows = np.nonzero(bitmap[:, col])[0]
        if rows.size:
            tops[col] = v0 + rows[0]
            bottoms[col] = v0 + rows[-1] + 1
    if np.all(np.isnan(tops)):
        raise FormatError(f"{where}: mask RLE is empty")
    return ColumnMask(float(u0), tops, bottoms)


def write_detections(path: Path, frames: Iterable[tuple[int, Sequence[CameraObject]]],
                     ) -> None:
    lines = [DET_MAGIC,
             "# frame class score u_min v_min u_max v_max track mask"]
    for frame_id, objects in frames:
        for obj in objects:
            track = str(obj.track_id) if obj.track_id is not None else "-"
            mask = encode_mask(obj.mask, obj.bbox) if obj.mask is not None else "-"
            u0, v0, u1, v1 = obj.bbox
            lines.append(" ".join([str(frame_id), obj.class_id, _fmt(obj.score),
                                   _fmt(u0), _fmt(v0), _fmt(u1), _fmt(v1),
                                   track, mask]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_detections(path: Path) -> dict[int, list[CameraObject]]:
    out: dict[int, list[CameraObject]] = {}
    for n, ln in _read_lines(Path(path), DET_MAGIC):
        parts = ln.split()
        where = f"{path}:{n}"
        if len(parts) != 9:
            raise FormatError(f"{where}: expected 9 fields, got {len(parts)}")
        try:
            frame_id = int(parts[0])
            score = float(parts[2])
            bbox = tuple(float(x) for x in parts[3:7])
            track = None if parts[7] == "-" else int(parts[7])
        except ValueError as e:
            raise FormatError(f"{where}: {e}") from e
        mask = None if parts[8] == "-" else decode_mask(parts[8], bbox, where)
        try:
            obj = CameraObject(parts[1], bbox, score, track, mask)
        except ValueError as e:
            raise FormatError(f"{where}: {e}") from e
        out.setdefault(frame_id, []).append(obj)
    return out


# -------------------------------------------------------------- annotations

def write_annotations(path: Path, annotations: Iterable[Annotation]) -> None:
    lines = [ANN_MAGIC, "# frame class range_m azimuth_rad source confidence"]
    for a in annotations:
        lines.append(" ".join([str(a.frame_id), a.class_id, _fmt(a.point.r),
                               _fmt(a.point.theta), a.source,
                               _fmt(a.confidence)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_annotations(path: Path) -> list[Annotation]:
    out = []
    for n, ln in _read_lines(Path(path), ANN_MAGIC):
        parts = ln.split()
        where = f"{path}:{n}"
        if len(parts) != 6:
            raise FormatError(f"{where}: expected 6 fields, got {len(parts)}")
        if parts[4] not in SOURCES:
            raise FormatError(f"{where}: unknown source {parts[4]!r}")
        try:
            out.append(Annotation(int(parts[0]), parts[1],
                                  RadarPoint(float(parts[2]), float(parts[3])),
                                  parts[4], float(parts[5])))
        except ValueError as e:
            raise FormatError(f"{where}: {e}") from e
    return out


def read_point_dets(path: Path) -> list[PointDet]:
    """Annotations as scoring inputs; the source column is ignored."""
    return [PointDet(a.frame_id, a.class_id, a.point, a.confidence)
            for a in read_annotations(path)]


# ----------------------------------------------------------------- plane log

def write_plane_log(path: Path, windows: Iterable[WindowLog]) -> None:
    lines = [PLANE_MAGIC,
             "# frame_start frame_end phi_rad gamma_rad h_m objective n_pairs"]
    for w in windows:
        lines.append(" ".join([str(w.frame_start), str(w.frame_end),
                               _fmt(w.plane.phi), _fmt(w.plane.gamma),
                               _fmt(w.plane.h), _fmt(w.objective),
                               str(w.n_pairs)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_plane_log(path: Path) -> list[WindowLog]:
    out = []
    for n, ln in _read_lines(Path(path), PLANE_MAGIC):
        parts = ln.split()
        if len(parts) != 7:
            raise FormatError(f"{path}:{n}: expected 7 fields, got {len(parts)}")
        try:
            out.append(WindowLog(int(parts[0]), int(parts[1]),
                                 GroundPlane(float(parts[2]), float(parts[3]),
                                             float(parts[4])),
                                 float(parts[5]), int(parts[6])))
        except ValueError as e:
            raise FormatError(f"{path}:{n}: {e}") from e
    return out


# --------------------------------------------------------------- calibration

def write_calibration(path: Path, cam: CameraModel, g0: GroundPlane) -> None:
    tx, ty, tz = cam.t_cr
    lines = [CALIB_MAGIC,
             f"fx {_fmt(cam.fx)}", f"fy {_fmt(cam.fy)}",
             f"cx {_fmt(cam.cx)}", f"cy {_fmt(cam.cy)}",
             f"image_width {cam.image_width}",
             f"image_height {cam.image_height}",
             f"t_cr {_fmt(tx)} {_fmt(ty)} {_fmt(tz)}",
             f"phi0_deg {_fmt(math.degrees(g0.phi))}",
             f"gamma0_deg {_fmt(math.degrees(g0.gamma))}",
             f"h0_m {_fmt(g0.h)}"]
    Path(path).write_text("\n".join(lines) + "\n")


def read_calibration(path: Path) -> tuple[CameraModel, GroundPlane]:
    fields: dict[str, str] = {}
    for _, ln in _read_lines(Path(path), CALIB_MAGIC):
        key, _, rest = ln.partition(" ")
        fields[key] = rest.strip()
    try:
        cam = CameraModel(fx=float(fields["fx"]), fy=float(fields["fy"]),
                          cx=float(fields["cx"]), cy=float(fields["cy"]),
                          t_cr=tuple(float(t) for t in fields["t_cr"].split()),
                          image_width=int(fields["image_width"]),
                          image_height=int(fields["image_height"]))
        g0 = GroundPlane(math.radians(float(fields["phi0_deg"])),
                         math.radians(float(fields["gamma0_deg"])),
                         float(fields["h0_m"]))
    except (KeyError, ValueError) as e:
        raise FormatError(f"{path}: bad or missing field ({e})") from e
    return cam, g0

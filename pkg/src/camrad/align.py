"""Cross-sensor alignment: radar clusters against camera objects.

Each radar cluster is lifted to a vertical image segment (a "line")
whose foot is the projected ground contact of the cluster centroid and
whose length is the projected average physical height of a candidate
class.  The line is compared against the candidate object's mask and
box heights; a range-adaptive weight blends the two residuals, trusting
the mask near the sensor and the box far away where masks get ragged.

A window of frames then refines the ground pitch and roll by pushing
the feet of the aligned lines onto the mask bottoms, camera height held
fixed.  Finally objects the radar missed are back-projected from their
ground-contact pixel so the output stays camera-complete.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, ProjectionDomainError
from .geometry import (CameraModel, CamPoint3, GroundPlane, PixelPoint,
                       RadarPoint, project_c2r, r2c_cam_point)
from .rf_detect import PeakCluster, weighted_centroid

log = logging.getLogger(__name__)

ALIGNED = "ALIGNED"
SUPPLEMENTARY = "SUPPLEMENTARY"
TRUTH = "TRUTH"
SOURCES = frozenset({ALIGNED, SUPPLEMENTARY, TRUTH})

#: marks a cluster no camera object claimed
OUTLIER = None


@dataclass(frozen=True)
class ClassMeta:
    """Per-class constants: average physical height (m) and the
    location-similarity tolerance used by scoring."""

    class_id: str
    avg_height: float
    kappa: float

    def __post_init__(self):
        if not self.class_id:
            raise ConfigError("classes: class id must be non-empty")
        if not (self.avg_height > 0 and math.isfinite(self.avg_height)):
            raise ConfigError(
                f"classes.{self.class_id}.avg_height_m: must be positive")
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ConfigError(f"classes.{self.class_id}.kappa: must be positive")


#: Engineering defaults; live in the shipped config, overridable per run.
DEFAULT_CLASS_META: dict[str, ClassMeta] = {
    "pedestrian": ClassMeta("pedestrian", avg_height=1.75, kappa=0.02),
    "cyclist": ClassMeta("cyclist", avg_height=1.75, kappa=0.04),
    "car": ClassMeta("car", avg_height=1.55, kappa=0.07),
}


@dataclass(frozen=True)
class ColumnMask:
    """Instance mask stored as per-column vertical extents.

    Column k spans pixels [u0 + k, u0 + k + 1); tops/bottoms give the
    mask's vertical extent in that column, NaN where the column is
    empty.  bottoms is exclusive (one past the last covered row).
    """

    u0: float
    tops: np.ndarray
    bottoms: np.ndarray

    def __post_init__(self):
        tops = np.asarray(self.tops, dtype=np.float64)
        bottoms = np.asarray(self.bottoms, dtype=np.float64)
        if tops.shape != bottoms.shape or tops.ndim != 1 or tops.size == 0:
            raise ValueError("mask columns must be matching non-empty vectors")
        filled = ~np.isnan(tops)
        if not filled.any():
            raise ValueError("mask must cover at least one column")
        if np.any(tops[filled] >= bottoms[filled]):
            raise ValueError("mask column extents must be positive")
        tops.setflags(write=False)
        bottoms.setflags(write=False)
        object.__setattr__(self, "tops", tops)
        object.__setattr__(self, "bottoms", bottoms)

    def _nearest_column(self, u: float) -> int:
        filled = np.nonzero(~np.isnan(self.tops))[0]
        centers = self.u0 + filled + 0.5
        return int(filled[np.argmin(np.abs(centers - u))])

    def height_at(self, u: float) -> float:
        k = self._nearest_column(u)
        return float(self.bottoms[k] - self.tops[k])

    def bottom_at(self, u: float) -> float:
        k = self._nearest_column(u)
        return float(self.bottoms[k])

    def bottom_center(self) -> tuple[float, float]:
        """Ground-contact pixel: bottom of the column nearest the
        mask's horizontal center."""
        filled = np.nonzero(~np.isnan(self.tops))[0]
        u_mid = self.u0 + (filled[0] + filled[-1] + 1) / 2.0
        k = self._nearest_column(u_mid)
        return float(self.u0 + k + 0.5), float(self.bottoms[k])


@dataclass(frozen=True)
class CameraObject:
    """One camera detection in a frame."""

    class_id: str
    bbox: tuple[float, float, float, float]
    score: float
    track_id: int | None = None
    mask: ColumnMask | None = None

    def __post_init__(self):
        u0, v0, u1, v1 = (float(x) for x in self.bbox)
        object.__setattr__(self, "bbox", (u0, v0, u1, v1))
        if not all(math.isfinite(x) for x in self.bbox):
            raise ValueError(f"bbox must be finite: {self.bbox!r}")
        if u0 >= u1 or v0 >= v1:
            raise ValueError(f"bbox must have positive extent: {self.bbox!r}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1]: {self.score!r}")

    @property
    def width(self) -> float:
        return self.bbox[2] - self.bbox[0]

    @property
    def h_bbox(self) -> float:
        return self.bbox[3] - self.bbox[1]

    def contact_pixel(self) -> PixelPoint:
        """Bottom-center of the mask when present, else of the box."""
        if self.mask is not None:
            u, v = self.mask.bottom_center()
            return PixelPoint(u, v)
        u0, _, u1, v1 = self.bbox
        return PixelPoint((u0 + u1) / 2.0, v1)


@dataclass(frozen=True)
class CfarLine:
    """Vertical image segment for one cluster under one candidate class."""

    cluster_ref: int
    foot: PixelPoint
    top: PixelPoint
    h_line: float

    def __post_init__(self):
        if not (self.h_line > 0 and self.top.v < self.foot.v):
            raise ValueError("line top must sit above its foot")


@dataclass(frozen=True)
class Association:
    """Assignment of one cluster: object index, or OUTLIER (None)."""

    cluster_ref: int
    object_ref: int | None
    cost: float
    weight: float


@dataclass(frozen=True)
class Annotation:
    """One BEV object annotation."""

    frame_id: int
    class_id: str
    point: RadarPoint
    source: str
    confidence: float

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown annotation source: {self.source!r}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1]: {self.confidence!r}")


@dataclass(frozen=True)
class AlignConfig:
    """Knobs for association and plane refinement."""

    alpha: float = 0.06            # range decay of the mask-vs-box weight
    window: int = 50               # frames per plane-optimization window
    gate_margin: float = 0.2       # bbox span inflation, fraction of width per side
    reject_ratio: float = 0.5      # outlier if cost > (ratio * line height)^2
    bound_deg: float = 10.0        # pitch/roll search bound around the prior
    simplex_tol: float = 1e-4      # Nelder-Mead simplex diameter, radians

    def __post_init__(self):
        if not (self.alpha > 0):
            raise ConfigError(f"align.alpha: must be positive, got {self.alpha!r}")
        if self.window < 1:
            raise ConfigError(f"align.window: must be >= 1, got {self.window!r}")
        if self.gate_margin < 0:
            raise ConfigError("align.gate_margin: must be >= 0")
        if not (0 < self.reject_ratio):
            raise ConfigError("align.reject_ratio: must be positive")
        if not (0 < self.bound_deg <= 30):
            raise ConfigError("align.bound_deg: must lie in (0, 30]")
        if not (0 < self.simplex_tol):
            raise ConfigError("align.simplex_tol: must be positive")


@dataclass(frozen=True)
class FrameInput:
    """Detections of one frame entering the aligner."""

    frame_id: int
    clusters: tuple[PeakCluster, ...]
    objects: tuple[CameraObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class WindowLog:
    """Plane estimate for one optimization window."""

    frame_start: int
    frame_end: int
    plane: GroundPlane
    objective: float
    n_pairs: int


@dataclass
class AnnotateResult:
    annotations: list[Annotation] = field(default_factory=list)
    windows: list[WindowLog] = field(default_factory=list)
    skipped: int = 0               # supplementary candidates outside the domain


def adaptive_weight(zc: float, alpha: float) -> float:
    """Mask-vs-box blend exp(-alpha * z): 1 at the sensor, ->0 far out."""
    if zc <= 0:
        raise ValueError(f"depth must be positive: {zc!r}")
    return math.exp(-alpha * zc)


def alignment_cost(line: CfarLine, obj: CameraObject, zc: float,
                   alpha: float) -> tuple[float, float]:
    """Blended squared height residual between a line and an object.

    cost = w*(h_line - h_mask)^2 + (1-w)*(h_line - h_bbox)^2 with
    w = exp(-alpha*zc); w is forced to 0 when the object has no mask.
    Returns (cost, w).
    """
    if zc <= 0:
        raise ValueError("cluster depth must be positive")
    h_box = obj.h_bbox
    if obj.mask is None:
        return (line.h_line - h_box) ** 2, 0.0
    w = adaptive_weight(zc, alpha)
    h_mask = obj.mask.height_at(line.foot.u)
    return (w * (line.h_line - h_mask) ** 2
            + (1.0 - w) * (line.h_line - h_box) ** 2), w


def _centroid_cam_point(cluster: PeakCluster, g: GroundPlane,
                        cam: CameraModel) -> CamPoint3 | None:
    try:
        return r2c_cam_point(cluster.centroid, g, cam)
    except ProjectionDomainError:
        return None


def build_cfar_line(cluster_ref: int, c: CamPoint3, avg_height: float,
                    cam: CameraModel) -> CfarLine:
    """Lift a cluster's camera-frame ground point to a vertical segment.

    The top is the same BEV point raised by avg_height straight up in
    the camera frame, so foot and top share u and the segment spans
    fy*avg_height/z_c pixels.
    """
    u = cam.fx * c.xc / c.zc + cam.cx
    v_foot = cam.fy * c.yc / c.zc + cam.cy
    h_line = cam.fy * avg_height / c.zc
    return CfarLine(cluster_ref, PixelPoint(u, v_foot),
                    PixelPoint(u, v_foot - h_line), h_line)


def associate_frame(clusters: Sequence[PeakCluster],
                    objects: Sequence[CameraObject],
                    g: GroundPlane, cam: CameraModel,
                    meta: Mapping[str, ClassMeta],
                    cfg: AlignConfig = AlignConfig()) -> list[Association]:
    """Assign each cluster to its cheapest gated camera object.

    Candidates are objects whose bbox horizontal span, inflated by
    gate_margin of its width per side, contains the line's foot column.
    Many clusters may share an object; each cluster gets at most one.
    Per-cluster minimization is exact for that objective.  A cluster
    whose best cost exceeds (reject_ratio * line height)^2, or with no
    gated candidate, is an outlier.
    """
    out = []
    for ci, cluster in enumerate(clusters):
        c = _centroid_cam_point(cluster, g, cam)
        if c is None:
            out.append(Association(ci, OUTLIER, math.inf, 0.0))
            continue
        u_foot = cam.fx * c.xc / c.zc + cam.cx
        best: tuple[float, int, float, float] | None = None
        for oi, obj in enumerate(objects):
            if obj.class_id not in meta:
                continue
            u0, _, u1, _ = obj.bbox
            margin = cfg.gate_margin * obj.width
            if not (u0 - margin <= u_foot <= u1 + margin):
                continue
            line = build_cfar_line(ci, c, meta[obj.class_id].avg_height, cam)
            cost, w = alignment_cost(line, obj, c.zc, cfg.alpha)
            if best is None or cost < best[0]:
                best = (cost, oi, w, line.h_line)
        if best is None:
            out.append(Association(ci, OUTLIER, math.inf, 0.0))
            continue
        cost, oi, w, h_line = best
        if cost > (cfg.reject_ratio * h_line) ** 2:
            out.append(Association(ci, OUTLIER, cost, w))
        else:
            out.append(Association(ci, oi, cost, w))
    return out


def _collect_pairs(frames: Sequence[FrameInput], g0: GroundPlane,
                   cam: CameraModel, meta: Mapping[str, ClassMeta],
                   cfg: AlignConfig) -> np.ndarray:
    """Per aligned pair: (r, x_c, z_c, v_target) rows for the objective.

    v_target is the object's mask bottom at the column nearest the
    line's foot (box bottom without a mask).  Neither the gate nor the
    height costs involve pitch or roll, so the pair set itself is
    plane-independent; g0 only has to place the centroids in front of
    the camera.
    """
    rows = []
    for frame in frames:
        assoc = associate_frame(frame.clusters, frame.objects, g0, cam, meta, cfg)
        for a in assoc:
            if a.object_ref is OUTLIER:
                continue
            cluster = frame.clusters[a.cluster_ref]
            obj = frame.objects[a.object_ref]
            c = _centroid_cam_point(cluster, g0, cam)
            if c is None:
                continue
            u_foot = cam.fx * c.xc / c.zc + cam.cx
            if obj.mask is not None:
                v_target = obj.mask.bottom_at(u_foot)
            else:
                v_target = obj.bbox[3]
            rows.append((cluster.centroid.r, c.xc, c.zc, v_target))
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def _window_objective(pairs: np.ndarray, g: GroundPlane,
                      cam: CameraModel) -> float:
    r, xc, zc, v_t = pairs.T
    v = cam.fy * (g.h - r * math.sin(g.phi) - xc * math.tan(g.gamma)) / zc + cam.cy
    return float(((v - v_t) ** 2).sum())


def plane_objective(frames: Sequence[FrameInput], g: GroundPlane,
                    cam: CameraModel, meta: Mapping[str, ClassMeta],
                    cfg: AlignConfig = AlignConfig()) -> tuple[float, int]:
    """Sum of squared foot-vs-mask-bottom residuals and the pair count."""
    pairs = _collect_pairs(frames, g, cam, meta, cfg)
    if pairs.shape[0] == 0:
        return 0.0, 0
    return _window_objective(pairs, g, cam), pairs.shape[0]


def optimize_ground_plane(frames: Sequence[FrameInput], g0: GroundPlane,
                          cam: CameraModel, meta: Mapping[str, ClassMeta],
                          cfg: AlignConfig = AlignConfig()) -> GroundPlane:
    """Refine pitch and roll over a window, camera height held fixed.

    Associations are built once under g0.  Nelder-Mead explores
    (phi, gamma) with a quadratic penalty outside +-bound_deg of g0;
    the result is then polished by an exact least-squares step, which
    is available because the residuals are affine in (sin phi,
    tan gamma) for a fixed pair set.  Rank deficiency (e.g. one pair)
    resolves toward the smallest parameter move.  Falls back to g0 when
    the window has no aligned pairs; the returned objective never
    exceeds the one at g0.
    """
    pairs = _collect_pairs(frames, g0, cam, meta, cfg)
    if pairs.shape[0] == 0:
        return g0

    r, xc, zc, v_t = pairs.T
    # residual(p) = b - M @ (sin phi, tan gamma), p in radians
    b = cam.fy * g0.h / zc + cam.cy - v_t
    m = np.stack([cam.fy * r / zc, cam.fy * xc / zc], axis=1)
    bound = math.radians(cfg.bound_deg)

    def objective(p: np.ndarray) -> float:
        phi, gam = p
        e = b - m @ (math.sin(phi), math.tan(gam))
        cost = float(e @ e)
        over = max(0.0, abs(phi - g0.phi) - bound) + max(0.0, abs(gam - g0.gamma) - bound)
        return cost + 1e9 * over * over

    x0 = np.array([g0.phi, g0.gamma])
    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"xatol": cfg.simplex_tol, "fatol": 1e-12,
                            "maxiter": 2000})
    cand = [(float(res.fun), (float(res.x[0]), float(res.x[1]))),
            (objective(x0), (g0.phi, g0.gamma))]

    # Exact polish: lstsq in (sin phi, tan gamma) anchored at the NM result.
    p_nm = np.array([math.sin(res.x[0]), math.tan(res.x[1])])
    delta, *_ = np.linalg.lstsq(m, b - m @ p_nm, rcond=None)
    p_ls = p_nm + delta
    if abs(p_ls[0]) < 1.0:
        phi_ls = math.asin(p_ls[0])
        gam_ls = math.atan(p_ls[1])
        if (abs(phi_ls - g0.phi) <= bound and abs(gam_ls - g0.gamma) <= bound
                and abs(phi_ls) < math.pi / 4 and abs(gam_ls) < math.pi / 4):
            cand.append((objective(np.array([phi_ls, gam_ls])), (phi_ls, gam_ls)))

    _, (phi, gam) = min(cand, key=lambda c: c[0])
    return GroundPlane(phi, gam, g0.h)


def supplementary_projection(objects: Sequence[CameraObject],
                             claimed: Iterable[int], g: GroundPlane,
                             cam: CameraModel, frame_id: int,
                             fov: tuple[float, float, float, float] | None = None,
                             ) -> tuple[list[Annotation], int]:
    """Back-project camera objects the radar missed.

    Each unclaimed object's ground-contact pixel goes through the
    pixel-to-radar projection under the current plane.  Objects whose
    contact sits at or above the horizon, or (when fov is given) whose
    BEV point falls outside it, are skipped and counted.
    """
    claimed = set(claimed)
    out: list[Annotation] = []
    skipped = 0
    for oi, obj in enumerate(objects):
        if oi in claimed:
            continue
        try:
            point = project_c2r(obj.contact_pixel(), g, cam)
        except ProjectionDomainError:
            skipped += 1
            continue
        if fov is not None and not _in_fov(point, fov):
            skipped += 1
            continue
        out.append(Annotation(frame_id, obj.class_id, point,
                              SUPPLEMENTARY, obj.score))
    return out, skipped


def _in_fov(p: RadarPoint, fov: tuple[float, float, float, float]) -> bool:
    r_lo, r_hi, th_lo, th_hi = fov
    return r_lo <= p.r <= r_hi and th_lo <= p.theta <= th_hi


def annotate_sequence(frames: Sequence[FrameInput], g0: GroundPlane,
                      cam: CameraModel,
                      meta: Mapping[str, ClassMeta] = DEFAULT_CLASS_META,
                      cfg: AlignConfig = AlignConfig(),
                      fov: tuple[float, float, float, float] | None = None,
                      ) -> AnnotateResult:
    """Annotate a frame sequence window by window.

    Windows of cfg.window frames (stride equal to the window, so they
    tile the sequence) are independent: each starts from the calibration
    prior g0, optimizes the plane, re-associates under the optimized
    plane, and emits one ALIGNED annotation per camera object holding at
    least one cluster, at the power-weighted centroid of all member
    peaks.  Unclaimed objects yield SUPPLEMENTARY annotations.  A frame
    that fails is logged and skipped, never fatal.
    """
    result = AnnotateResult()
    for start in range(0, len(frames), cfg.window):
        window = frames[start:start + cfg.window]
        anns, wlog, skipped = _annotate_window(window, g0, cam, meta, cfg, fov)
        result.annotations.extend(anns)
        result.windows.append(wlog)
        result.skipped += skipped
    return result


def _annotate_window(window: Sequence[FrameInput], g0: GroundPlane,
                     cam: CameraModel, meta: Mapping[str, ClassMeta],
                     cfg: AlignConfig,
                     fov: tuple[float, float, float, float] | None,
                     ) -> tuple[list[Annotation], WindowLog, int]:
    g_star = optimize_ground_plane(window, g0, cam, meta, cfg)
    objective, n_pairs = plane_objective(window, g_star, cam, meta, cfg)

    annotations: list[Annotation] = []
    skipped = 0
    for frame in window:
        try:
            anns, n_skip = _annotate_frame(frame, g_star, cam, meta, cfg, fov)
        except Exception:
            log.exception("frame %d failed; skipping", frame.frame_id)
            continue
        annotations.extend(anns)
        skipped += n_skip
    wlog = WindowLog(window[0].frame_id, window[-1].frame_id, g_star,
                     objective, n_pairs)
    return annotations, wlog, skipped


def _annotate_frame(frame: FrameInput, g: GroundPlane, cam: CameraModel,
                    meta: Mapping[str, ClassMeta], cfg: AlignConfig,
                    fov: tuple[float, float, float, float] | None,
                    ) -> tuple[list[Annotation], int]:
    assoc = associate_frame(frame.clusters, frame.objects, g, cam, meta, cfg)

    by_object: dict[int, list[int]] = {}
    for a in assoc:
        if a.object_ref is not OUTLIER:
            by_object.setdefault(a.object_ref, []).append(a.cluster_ref)

    annotations: list[Annotation] = []
    skipped = 0
    for oi in sorted(by_object):
        obj = frame.objects[oi]
        peaks = [p for ci in by_object[oi] for p in frame.clusters[ci].peaks]
        point = weighted_centroid(peaks)
        if fov is not None and not _in_fov(point, fov):
            skipped += 1
            continue
        annotations.append(Annotation(frame.frame_id, obj.class_id, point,
                                      ALIGNED, obj.score))

    supp, n_skip = supplementary_projection(frame.objects, by_object, g, cam,
                                            frame.frame_id, fov)
    annotations.extend(a for a in supp if a.class_id in meta)
    return annotations, skipped + n_skip

"""Point-detection scoring with an object-location-similarity kernel.

A detection and a ground-truth point of the same class score
ols = exp(-d^2 / (2*(s*kappa)^2)) where d is their BEV Euclidean
distance in meters, s the ground truth's range, and kappa a per-class
tolerance.  The kernel is 1 at zero distance, strictly decreasing in d,
and more forgiving both far away and for extended classes.

Matching is greedy per frame: detections in descending confidence order
each claim the unclaimed same-class truth with the highest kernel value
at or above the threshold.  Cross-class matches are forbidden outright.

The detection-quality score dqf1 = 2/(n_det + n_gt) * sum(matched ols)
degrades F1 by localization quality: it equals F1 when every match is
perfect and can only fall below it otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .align import ClassMeta
from .errors import ConfigError
from .geometry import RadarPoint, bev_distance


@dataclass(frozen=True)
class PointDet:
    """A scored BEV point: one detection or one ground-truth object."""

    frame_id: int
    class_id: str
    point: RadarPoint
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1]: {self.confidence!r}")


@dataclass(frozen=True)
class ScoringConfig:
    primary_threshold: float = 0.5
    sweep_start: float = 0.5
    sweep_stop: float = 0.9
    sweep_step: float = 0.05

    def __post_init__(self):
        for name in ("primary_threshold", "sweep_start", "sweep_stop"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ConfigError(f"scoring.{name}: must lie in (0, 1], got {v!r}")
        if self.sweep_step <= 0 or self.sweep_stop < self.sweep_start:
            raise ConfigError("scoring.sweep: stop must be >= start, step > 0")

    def thresholds(self) -> list[float]:
        n = int(round((self.sweep_stop - self.sweep_start) / self.sweep_step)) + 1
        return [round(self.sweep_start + k * self.sweep_step, 12) for k in range(n)]


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching of one frame at one threshold.

    pairs holds (det_index, gt_index, ols) into the frame's input lists.
    """

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_dets: tuple[int, ...]
    unmatched_gts: tuple[int, ...]


@dataclass(frozen=True)
class MetricSet:
    """One row of the report.  mae fields are None without matches."""

    n_det: int
    n_gt: int
    precision: float
    recall: float
    ap: float
    ar: float
    dqf1: float
    mae_mean: float | None
    mae_std: float | None


@dataclass
class ScoreReport:
    overall: MetricSet
    per_class: dict[str, MetricSet] = field(default_factory=dict)
    macro: MetricSet | None = None
    per_scenario: dict[str, MetricSet] = field(default_factory=dict)
    sweep: list[tuple[float, float, float]] = field(default_factory=list)


def ols(det: PointDet, gt: PointDet, meta: Mapping[str, ClassMeta]) -> float:
    """Location similarity in (0, 1]; exactly 0 across classes."""
    if det.class_id != gt.class_id:
        return 0.0
    d = bev_distance(det.point, gt.point)
    scale = gt.point.r * meta[gt.class_id].kappa
    return math.exp(-d * d / (2.0 * scale * scale))


def _det_order(dets: Sequence[PointDet]) -> list[int]:
    # Descending confidence; ties by lower frame, lower range, lower
    # azimuth, then input order, so matching is reproducible.
    return sorted(range(len(dets)),
                  key=lambda i: (-dets[i].confidence, dets[i].frame_id,
                                 dets[i].point.r, dets[i].point.theta, i))


def match_frame(dets: Sequence[PointDet], gts: Sequence[PointDet],
                threshold: float,
                meta: Mapping[str, ClassMeta]) -> MatchResult:
    """Greedy same-class matching of one frame's detections to truths."""
    claimed = [False] * len(gts)
    pairs = []
    for di in _det_order(dets):
        best_gi, best_ols = -1, threshold
        for gi, gt in enumerate(gts):
            if claimed[gi]:
                continue
            v = ols(dets[di], gt, meta)
            if v > best_ols or (v == best_ols and v > 0 and best_gi == -1):
                best_gi, best_ols = gi, v
        if best_gi >= 0 and best_ols >= threshold:
            claimed[best_gi] = True
            pairs.append((di, best_gi, best_ols))
    matched_d = {p[0] for p in pairs}
    return MatchResult(tuple(sorted(pairs)),
                       tuple(i for i in range(len(dets)) if i not in matched_d),
                       tuple(i for i in range(len(gts)) if not claimed[i]))


def _by_frame(pts: Sequence[PointDet]) -> dict[int, list[PointDet]]:
    out: dict[int, list[PointDet]] = {}
    for p in pts:
        out.setdefault(p.frame_id, []).append(p)
    return out


def _match_all(dets: Sequence[PointDet], gts: Sequence[PointDet],
               threshold: float, meta: Mapping[str, ClassMeta],
               ) -> list[tuple[PointDet, PointDet, float]]:
    det_f, gt_f = _by_frame(dets), _by_frame(gts)
    out = []
    for f in sorted(det_f.keys() | gt_f.keys()):
        fd = det_f.get(f, [])
        fg = gt_f.get(f, [])
        for di, gi, v in match_frame(fd, fg, threshold, meta).pairs:
            out.append((fd[di], fg[gi], v))
    return out


def _pr(n_matched: int, n_det: int, n_gt: int) -> tuple[float, float]:
    # Both sides empty: vacuously perfect.  Exactly one empty: zero.
    if n_det == 0 and n_gt == 0:
        return 1.0, 1.0
    if n_det == 0 or n_gt == 0:
        return 0.0, 0.0
    return n_matched / n_det, n_matched / n_gt


def _metrics(dets: Sequence[PointDet], gts: Sequence[PointDet],
             meta: Mapping[str, ClassMeta], cfg: ScoringConfig,
             ) -> tuple[MetricSet, list[tuple[float, float, float]]]:
    n_det, n_gt = len(dets), len(gts)
    matches = _match_all(dets, gts, cfg.primary_threshold, meta)
    precision, recall = _pr(len(matches), n_det, n_gt)

    if n_det == 0 and n_gt == 0:
        dqf1 = 1.0
    elif n_det == 0 or n_gt == 0:
        dqf1 = 0.0
    else:
        dqf1 = 2.0 * sum(v for _, _, v in matches) / (n_det + n_gt)

    if matches:
        dists = np.array([bev_distance(d.point, g.point) for d, g, _ in matches])
        mae_mean, mae_std = float(dists.mean()), float(dists.std())
    else:
        mae_mean = mae_std = None

    sweep = []
    for t in cfg.thresholds():
        p, r = _pr(len(_match_all(dets, gts, t, meta)), n_det, n_gt)
        sweep.append((t, p, r))
    ap = float(np.mean([p for _, p, _ in sweep]))
    ar = float(np.mean([r for _, _, r in sweep]))
    return (MetricSet(n_det, n_gt, precision, recall, ap, ar, dqf1,
                      mae_mean, mae_std), sweep)


def score(dets: Sequence[PointDet], gts: Sequence[PointDet],
          meta: Mapping[str, ClassMeta], cfg: ScoringConfig = ScoringConfig(),
          scenarios: Mapping[str, tuple[int, int]] | None = None) -> ScoreReport:
    """Score detections against ground truth.

    Matching is class-aware everywhere; the overall row pools counts and
    kernel sums across classes, and per-class rows plus their unweighted
    macro average are always included.  scenarios optionally maps a name
    to an inclusive frame range for per-scenario rows.
    """
    for d in list(dets) + list(gts):
        if d.class_id not in meta:
            raise ConfigError(f"classes: unknown class {d.class_id!r}")

    overall, sweep = _metrics(dets, gts, meta, cfg)
    report = ScoreReport(overall=overall, sweep=sweep)

    classes = sorted({d.class_id for d in dets} | {g.class_id for g in gts})
    for c in classes:
        ms, _ = _metrics([d for d in dets if d.class_id == c],
                         [g for g in gts if g.class_id == c], meta, cfg)
        report.per_class[c] = ms
    if classes:
        report.macro = _macro(list(report.per_class.values()))

    if scenarios:
        for name, (lo, hi) in scenarios.items():
            ms, _ = _metrics([d for d in dets if lo <= d.frame_id <= hi],
                             [g for g in gts if lo <= g.frame_id <= hi],
                             meta, cfg)
            report.per_scenario[name] = ms
    return report


def _macro(rows: list[MetricSet]) -> MetricSet:
    """Unweighted mean over class rows; mae averaged where defined."""
    maes = [r.mae_mean for r in rows if r.mae_mean is not None]
    stds = [r.mae_std for r in rows if r.mae_std is not None]
    return MetricSet(
        n_det=sum(r.n_det for r in rows),
        n_gt=sum(r.n_gt for r in rows),
        precision=float(np.mean([r.precision for r in rows])),
        recall=float(np.mean([r.recall for r in rows])),
        ap=float(np.mean([r.ap for r in rows])),
        ar=float(np.mean([r.ar for r in rows])),
        dqf1=float(np.mean([r.dqf1 for r in rows])),
        mae_mean=float(np.mean(maes)) if maes else None,
        mae_std=float(np.mean(stds)) if stds else None,
    )

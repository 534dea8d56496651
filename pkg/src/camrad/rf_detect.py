"""Peak detection and clustering on range-azimuth radar frames.

cfar_detect runs 2D cell-averaging CFAR: each cell is compared against
alpha * mean(training ring), where the training ring is the window
around the cell minus a guard box, truncated at the image borders, and
alpha = N * (Pfa^(-1/N) - 1) for the per-cell training count N.  Cells
must also be local maxima within their guard window so flat shoulders
do not produce runs of detections.

cluster_peaks groups detections with DBSCAN in Cartesian BEV meters.
The implementation is self-contained: border points (possible only for
min_pts > 1) attach to the cluster of their nearest core point, which
keeps the resulting partition independent of input ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import ConfigError
from .geometry import EPS_DENOM, RadarPoint, bev_xy


@dataclass(frozen=True)
class CfarConfig:
    """Cell-averaging CFAR window, half-extents in cells per side."""

    guard_range: int = 2
    guard_azimuth: int = 2
    train_range: int = 4
    train_azimuth: int = 4
    pfa: float = 1e-3

    def __post_init__(self):
        if self.guard_range < 0 or self.guard_azimuth < 0:
            raise ConfigError("cfar.guard: extents must be >= 0")
        if self.train_range < 1 or self.train_azimuth < 1:
            raise ConfigError(
                "cfar.train: training ring must extend beyond the guard")
        if not (0.0 < self.pfa < 1.0):
            raise ConfigError(f"cfar.pfa: must lie in (0, 1), got {self.pfa!r}")


@dataclass(frozen=True)
class DbscanConfig:
    """Clustering radius in BEV meters and the core-point threshold."""

    eps_m: float = 1.0
    min_pts: int = 1

    def __post_init__(self):
        if not (self.eps_m > 0 and np.isfinite(self.eps_m)):
            raise ConfigError(f"dbscan.eps_m: must be positive, got {self.eps_m!r}")
        if self.min_pts < 1:
            raise ConfigError(f"dbscan.min_pts: must be >= 1, got {self.min_pts!r}")


@dataclass(frozen=True)
class RfImage:
    """One radar frame: magnitudes on a range x azimuth grid.

    data[i, j] is the magnitude at range bin i, azimuth bin j.  Bin i
    maps to range_min + i*range_res meters; column j maps to
    azimuth_grid[j] radians.  The array is frozen after construction.
    """

    data: np.ndarray
    range_res: float
    range_min: float
    azimuth_grid: np.ndarray
    frame_id: int = 0

    def __post_init__(self):
        # Private copies: freezing must not make the caller's arrays
        # read-only behind its back.
        data = np.array(self.data, dtype=np.float64)
        grid = np.array(self.azimuth_grid, dtype=np.float64)
        if data.ndim != 2 or data.size == 0:
            raise ValueError("rf image must be a non-empty 2D array")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ValueError("rf magnitudes must be finite and non-negative")
        if self.range_res <= 0 or not np.isfinite(self.range_res):
            raise ValueError(f"range_res must be positive: {self.range_res!r}")
        if self.range_min < 0 or not np.isfinite(self.range_min):
            raise ValueError(f"range_min must be non-negative: {self.range_min!r}")
        if grid.shape != (data.shape[1],):
            raise ValueError("azimuth grid length must match image columns")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("azimuth grid must be strictly increasing")
        if grid[0] < -np.pi / 2 - 1e-9 or grid[-1] > np.pi / 2 + 1e-9:
            raise ValueError("azimuth grid must lie within +-pi/2")
        data.setflags(write=False)
        grid.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "azimuth_grid", grid)

    @property
    def n_range(self) -> int:
        return self.data.shape[0]

    @property
    def n_azimuth(self) -> int:
        return self.data.shape[1]

    def range_of_bin(self, i: int | np.ndarray) -> float | np.ndarray:
        return self.range_min + np.asarray(i) * self.range_res

    def fov(self) -> tuple[float, float, float, float]:
        """(r_lo, r_hi, theta_lo, theta_hi) spanned by the bin centers."""
        return (self.range_min,
                self.range_min + (self.n_range - 1) * self.range_res,
                float(self.azimuth_grid[0]), float(self.azimuth_grid[-1]))


@dataclass(frozen=True)
class RadarPeak:
    """A CFAR detection: BEV point, magnitude, and the source cell."""

    point: RadarPoint
    magnitude: float
    cell: tuple[int, int]


@dataclass(frozen=True)
class PeakCluster:
    """A non-empty group of peaks with its power-weighted BEV centroid."""

    cluster_id: int
    peaks: tuple[RadarPeak, ...]
    centroid: RadarPoint

    def __post_init__(self):
        if not self.peaks:
            raise ValueError("cluster must contain at least one peak")


def _box_stats(x: np.ndarray, half_r: int, half_c: int):
    """Per-cell sum and count over a truncated (2*half_r+1)x(2*half_c+1) box."""
    nr, nc = x.shape
    s = np.zeros((nr + 1, nc + 1))
    s[1:, 1:] = x.cumsum(axis=0).cumsum(axis=1)
    i = np.arange(nr)[:, None]
    j = np.arange(nc)[None, :]
    r0 = np.maximum(i - half_r, 0)
    r1 = np.minimum(i + half_r, nr - 1)
    c0 = np.maximum(j - half_c, 0)
    c1 = np.minimum(j + half_c, nc - 1)
    total = s[r1 + 1, c1 + 1] - s[r0, c1 + 1] - s[r1 + 1, c0] + s[r0, c0]
    count = (r1 - r0 + 1) * (c1 - c0 + 1)
    return total, count


def cfar_detect(img: RfImage, cfg: CfarConfig = CfarConfig()) -> list[RadarPeak]:
    """Return every cell exceeding its adaptive threshold, ordered by cell.

    Border cells use the in-bounds part of their window with the
    threshold factor recomputed from the truncated training count, so
    sensitivity stays calibrated at the edges.
    """
    x = img.data
    gr, ga = cfg.guard_range, cfg.guard_azimuth
    wr, wa = gr + cfg.train_range, ga + cfg.train_azimuth

    total_sum, total_cnt = _box_stats(x, wr, wa)
    guard_sum, guard_cnt = _box_stats(x, gr, ga)
    # Cancellation in the prefix-sum difference can leave tiny negatives.
    train_sum = np.maximum(total_sum - guard_sum, 0.0)
    n_train = (total_cnt - guard_cnt).astype(np.float64)
    noise = train_sum / n_train
    alpha = n_train * (cfg.pfa ** (-1.0 / n_train) - 1.0)

    local_max = x >= maximum_filter(x, size=(2 * gr + 1, 2 * ga + 1),
                                    mode="nearest")
    hits = (x > alpha * noise) & local_max

    peaks = []
    for i, j in np.argwhere(hits):
        r = float(img.range_min + i * img.range_res)
        if r <= EPS_DENOM:
            # A hit in the zero-range bin has no usable azimuth.
            continue
        point = RadarPoint(r, float(img.azimuth_grid[j]))
        peaks.append(RadarPeak(point, float(x[i, j]), (int(i), int(j))))
    return peaks


def _dbscan_partition(xy: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Label array for DBSCAN over row vectors; -1 marks noise."""
    n = xy.shape[0]
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
    adj = d2 <= eps * eps
    core = adj.sum(axis=1) >= min_pts

    cluster = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        stack = [seed]
        labels[seed] = cluster
        while stack:
            p = stack.pop()
            for q in np.nonzero(adj[p] & core)[0]:
                if labels[q] == -1:
                    labels[q] = cluster
                    stack.append(int(q))
        cluster += 1

    # Border points: non-core within eps of a core point.  Attaching to
    # the nearest core keeps the partition order-independent.
    for p in range(n):
        if core[p] or labels[p] != -1:
            continue
        cores = np.nonzero(adj[p] & core)[0]
        if cores.size:
            labels[p] = labels[cores[np.argmin(d2[p, cores])]]
    return labels


def cluster_peaks(peaks: list[RadarPeak],
                  cfg: DbscanConfig = DbscanConfig()) -> list[PeakCluster]:
    """Group peaks by BEV proximity; peaks left unlabeled are noise.

    Cluster ids are assigned by each cluster's smallest member cell so
    the output does not depend on the order peaks arrive in.
    """
    if not peaks:
        return []
    xy = np.array([bev_xy(p.point) for p in peaks])
    labels = _dbscan_partition(xy, cfg.eps_m, cfg.min_pts)

    groups: dict[int, list[int]] = {}
    for idx, lab in enumerate(labels):
        if lab >= 0:
            groups.setdefault(int(lab), []).append(idx)

    ordered = sorted(groups.values(), key=lambda g: min(peaks[i].cell for i in g))
    clusters = []
    for cid, members in enumerate(ordered):
        clusters.append(PeakCluster(cid, tuple(peaks[i] for i in members),
                                    weighted_centroid([peaks[i] for i in members])))
    return clusters


def weighted_centroid(peaks: list[RadarPeak]) -> RadarPoint:
    """Power-weighted mean of peaks in Cartesian BEV, back in polar form.

    Falls back to uniform weights if all magnitudes are zero.
    """
    xy = np.array([bev_xy(p.point) for p in peaks])
    w = np.array([p.magnitude for p in peaks])
    if w.sum() <= 0:
        w = np.ones_like(w)
    cx, cz = (xy * w[:, None]).sum(axis=0) / w.sum()
    return RadarPoint(float(np.hypot(cx, cz)), float(np.arctan2(cx, cz)))

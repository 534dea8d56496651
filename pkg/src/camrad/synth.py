"""Synthetic camera-radar scenes with exact ground truth.

Scenes place objects on straight BEV trajectories and render, per
frame, a radar magnitude image (Rayleigh background plus one Gaussian
blob per visible object) and camera detections produced by the same
ground-projection the aligner assumes.  Bounding-box heights therefore
equal the projected physical heights exactly, which makes the true
plane the global optimum of the alignment objective.

Rendering is deterministic: the scene seed is split into one RNG stream
per frame index, so frames can be rendered in any order or in parallel
and still come out bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .align import (TRUTH, Annotation, CameraObject, ColumnMask,
                    DEFAULT_CLASS_META)
from .errors import SceneSpecError
from .geometry import CameraModel, GroundPlane, RadarPoint, r2c_cam_point
from .rf_detect import RfImage


@dataclass(frozen=True)
class RfGridSpec:
    """Radar image geometry.  The azimuth grid is uniform in angle."""

    n_range: int = 128
    n_azimuth: int = 128
    range_res: float = 0.23
    range_min: float = 0.0
    azimuth_half_span_deg: float = 90.0

    def azimuth_grid(self) -> np.ndarray:
        half = math.radians(self.azimuth_half_span_deg)
        return np.linspace(-half, half, self.n_azimuth)

    def max_range(self) -> float:
        return self.range_min + (self.n_range - 1) * self.range_res


@dataclass(frozen=True)
class NoiseSpec:
    """Disturbances; zeros give a noise-free scene."""

    background: float = 1.0        # Rayleigh scale of the clutter floor
    blob_snr_db: float = 20.0      # object amplitude over mean clutter
    bbox_jitter_px: float = 1.0    # sigma of iid noise on each bbox edge
    camera_dropout: float = 0.05   # per object-frame miss probability
    radar_dropout: float = 0.1     # per object-frame blob omission


@dataclass(frozen=True)
class ObjectSpec:
    """Straight-line BEV motion; velocities are meters per frame."""

    class_id: str
    x0: float
    z0: float
    vx: float = 0.0
    vz: float = 0.0
    height: float = 1.7
    width: float = 0.6

    def position(self, k: int) -> tuple[float, float]:
        return self.x0 + self.vx * k, self.z0 + self.vz * k


@dataclass(frozen=True)
class SceneSpec:
    plane: GroundPlane
    cam: CameraModel
    grid: RfGridSpec = RfGridSpec()
    noise: NoiseSpec = NoiseSpec()
    objects: tuple[ObjectSpec, ...] = ()
    n_frames: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.n_frames < 1:
            raise SceneSpecError("scene must have at least one frame")


@dataclass
class SceneTruth:
    """Per-frame ground truth emitted next to the rendered data."""

    annotations: list[Annotation] = field(default_factory=list)
    planes: list[GroundPlane] = field(default_factory=list)


def _object_radar_point(obj: ObjectSpec, k: int) -> RadarPoint:
    x, z = obj.position(k)
    r = math.hypot(x, z)
    if r <= 0 or z <= 0:
        raise SceneSpecError(
            f"object {obj.class_id!r} leaves the forward half-plane at frame {k}")
    return RadarPoint(r, math.atan2(x, z))


def validate_scene(spec: SceneSpec) -> None:
    """Reject scenes whose objects leave the radar FoV or camera view."""
    half = math.radians(spec.grid.azimuth_half_span_deg)
    for idx, obj in enumerate(spec.objects):
        if obj.class_id not in DEFAULT_CLASS_META:
            raise SceneSpecError(f"object {idx}: unknown class {obj.class_id!r}")
        for k in range(spec.n_frames):
            try:
                p = _object_radar_point(obj, k)
            except (SceneSpecError, ValueError) as e:
                raise SceneSpecError(f"object {idx} ({obj.class_id}): {e}") from e
            if not (spec.grid.range_min <= p.r <= spec.grid.max_range()):
                raise SceneSpecError(
                    f"object {idx} ({obj.class_id}) leaves the radar range "
                    f"extent at frame {k} (r={p.r:.2f} m)")
            if abs(p.theta) > half:
                raise SceneSpecError(
                    f"object {idx} ({obj.class_id}) leaves the azimuth span "
                    f"at frame {k}")
            # Must also be projectable for the camera stream.
            try:
                r2c_cam_point(p, spec.plane, spec.cam)
            except Exception as e:
                raise SceneSpecError(
                    f"object {idx} ({obj.class_id}) is not camera-visible "
                    f"at frame {k}: {e}") from e


def _render_rf(spec: SceneSpec, k: int, rng: np.random.Generator) -> RfImage:
    grid = spec.grid
    az = grid.azimuth_grid()
    noise = spec.noise
    if noise.background > 0:
        data = rng.rayleigh(noise.background, (grid.n_range, grid.n_azimuth))
        mean_bg = noise.background * math.sqrt(math.pi / 2.0)
    else:
        data = np.zeros((grid.n_range, grid.n_azimuth))
        mean_bg = 1.0
    amp = 10.0 ** (noise.blob_snr_db / 20.0) * mean_bg

    daz = float(az[1] - az[0]) if grid.n_azimuth > 1 else 1.0
    for obj in spec.objects:
        if noise.radar_dropout > 0 and rng.random() < noise.radar_dropout:
            continue
        p = _object_radar_point(obj, k)
        rb = (p.r - grid.range_min) / grid.range_res
        ab = (p.theta - float(az[0])) / daz
        sig_r = max(0.6, 0.25 * obj.width / grid.range_res)
        sig_a = max(0.6, 0.25 * (obj.width / p.r) / daz)
        _add_blob(data, rb, ab, amp, sig_r, sig_a)
    return RfImage(data, grid.range_res, grid.range_min, az, frame_id=k)


def _add_blob(data: np.ndarray, rb: float, ab: float, amp: float,
              sig_r: float, sig_a: float) -> None:
    nr, na = data.shape
    r0 = max(0, int(rb - 4 * sig_r))
    r1 = min(nr, int(rb + 4 * sig_r) + 2)
    a0 = max(0, int(ab - 4 * sig_a))
    a1 = min(na, int(ab + 4 * sig_a) + 2)
    i = np.arange(r0, r1)[:, None]
    j = np.arange(a0, a1)[None, :]
    data[r0:r1, a0:a1] += amp * np.exp(
        -((i - rb) ** 2 / (2 * sig_r ** 2) + (j - ab) ** 2 / (2 * sig_a ** 2)))


def _render_camera(spec: SceneSpec, k: int,
                   rng: np.random.Generator) -> list[CameraObject]:
    out: list[CameraObject] = []
    noise = spec.noise
    for obj in spec.objects:
        dropped = noise.camera_dropout > 0 and rng.random() < noise.camera_dropout
        jit = rng.normal(0.0, noise.bbox_jitter_px, 4) if noise.bbox_jitter_px > 0 \
            else np.zeros(4)
        conf = float(rng.uniform(0.7, 1.0))
        if dropped:
            continue
        p = _object_radar_point(obj, k)
        c = r2c_cam_point(p, spec.plane, spec.cam)
        u = spec.cam.fx * c.xc / c.zc + spec.cam.cx
        v_foot = spec.cam.fy * c.yc / c.zc + spec.cam.cy
        half_w = 0.5 * spec.cam.fx * obj.width / c.zc
        h_px = spec.cam.fy * obj.height / c.zc
        bbox = np.array([u - half_w, v_foot - h_px, u + half_w, v_foot]) + jit
        if bbox[2] - bbox[0] < 2.0:
            bbox[2] = bbox[0] + 2.0
        if bbox[3] - bbox[1] < 2.0:
            bbox[3] = bbox[1] + 2.0
        out.append(CameraObject(obj.class_id, tuple(bbox), conf,
                                mask=_box_mask(tuple(bbox))))
    return out


def _box_mask(bbox: tuple[float, float, float, float]) -> ColumnMask:
    """Mask filling the box interior; its bottom is the ground contact."""
    u0, v0, u1, v1 = bbox
    n_cols = max(1, int(math.ceil(u1) - math.floor(u0)))
    return ColumnMask(math.floor(u0),
                      np.full(n_cols, v0), np.full(n_cols, v1))


def render_frame(spec: SceneSpec, k: int,
                 ) -> tuple[RfImage, list[CameraObject]]:
    """Render one frame from its per-frame RNG stream."""
    root = np.random.SeedSequence(spec.seed)
    child = root.spawn(spec.n_frames)[k]
    rf_rng, cam_rng = (np.random.default_rng(s) for s in child.spawn(2))
    return _render_rf(spec, k, rf_rng), _render_camera(spec, k, cam_rng)


def scene_truth(spec: SceneSpec) -> SceneTruth:
    truth = SceneTruth()
    for k in range(spec.n_frames):
        truth.planes.append(spec.plane)
        for obj in spec.objects:
            truth.annotations.append(
                Annotation(k, obj.class_id, _object_radar_point(obj, k),
                           TRUTH, 1.0))
    return truth


def render_scene(spec: SceneSpec, workers: int = 1,
                 ) -> tuple[list[RfImage], list[list[CameraObject]], SceneTruth]:
    """Render all frames plus ground truth.  workers > 1 fans frames
    out to a process pool; the output is identical either way."""
    validate_scene(spec)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rendered = list(pool.map(render_frame, [spec] * spec.n_frames,
                                     range(spec.n_frames), chunksize=8))
    else:
        rendered = [render_frame(spec, k) for k in range(spec.n_frames)]
    frames = [r[0] for r in rendered]
    cams = [r[1] for r in rendered]
    return frames, cams, scene_truth(spec)


def default_scene(seed: int = 7, n_frames: int = 100) -> SceneSpec:
    """The demo scene: five objects of all classes under mild noise."""
    return SceneSpec(
        plane=GroundPlane(math.radians(4.0), 0.0, 1.65),
        cam=CameraModel(1000.0, 1000.0, 720.0, 540.0, (0.05, 0.0, 0.1)),
        objects=(
            ObjectSpec("car", x0=-3.0, z0=14.0, vx=0.02, vz=0.0,
                       height=1.5, width=1.8),
            ObjectSpec("car", x0=4.0, z0=18.0, vx=0.0, vz=-0.03,
                       height=1.5, width=1.8),
            ObjectSpec("pedestrian", x0=1.5, z0=9.0, vx=0.0, vz=0.02,
                       height=1.75, width=0.55),
            ObjectSpec("pedestrian", x0=-2.0, z0=11.0, vx=0.01, vz=0.0,
                       height=1.7, width=0.55),
            ObjectSpec("cyclist", x0=0.5, z0=16.0, vx=-0.015, vz=0.0,
                       height=1.75, width=0.7),
        ),
        noise=NoiseSpec(background=1.0, blob_snr_db=20.0, bbox_jitter_px=1.0,
                        camera_dropout=0.02, radar_dropout=0.08),
        n_frames=n_frames,
        seed=seed,
    )

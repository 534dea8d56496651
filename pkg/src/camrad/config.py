"""Run configuration and scene specifications, parsed from YAML.

Parsing is strict: unknown keys are rejected by name, and every value
passes through the owning dataclass's validation, so an accepted config
always satisfies the module contracts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .align import AlignConfig, ClassMeta, DEFAULT_CLASS_META
from .errors import ConfigError, SceneSpecError
from .geometry import CameraModel, GroundPlane
from .rf_detect import CfarConfig, DbscanConfig
from .scoring import ScoringConfig
from .synth import NoiseSpec, ObjectSpec, RfGridSpec, SceneSpec


@dataclass(frozen=True)
class PipelineConfig:
    cfar: CfarConfig = CfarConfig()
    dbscan: DbscanConfig = DbscanConfig()
    align: AlignConfig = AlignConfig()
    scoring: ScoringConfig = ScoringConfig()
    classes: Mapping[str, ClassMeta] = field(
        default_factory=lambda: dict(DEFAULT_CLASS_META))


def _require_mapping(node: Any, where: str, err=ConfigError) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise err(f"{where}: expected a mapping")
    return node


def _take(node: dict, where: str, err=ConfigError, **renames: str) -> dict:
    """Map file keys to constructor kwargs, rejecting unknown keys."""
    out = {}
    for key, value in node.items():
        if key not in renames:
            raise err(f"{where}.{key}: unknown key")
        out[renames[key]] = value
    return out


def _build(cls, kwargs: dict, where: str):
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def _parse_classes(node: Any) -> dict[str, ClassMeta]:
    table = {}
    for cid, body in _require_mapping(node, "classes").items():
        kwargs = _take(_require_mapping(body, f"classes.{cid}"),
                       f"classes.{cid}",
                       avg_height_m="avg_height", kappa="kappa")
        table[str(cid)] = _build(ClassMeta, {"class_id": str(cid), **kwargs},
                                 f"classes.{cid}")
    return table


def parse_config(doc: Any) -> PipelineConfig:
    root = _require_mapping(doc, "config")
    known = {"cfar", "dbscan", "align", "scoring", "classes"}
    for key in root:
        if key not in known:
            raise ConfigError(f"{key}: unknown key")

    cfar = _build(CfarConfig, _take(
        _require_mapping(root.get("cfar"), "cfar"), "cfar",
        guard_range="guard_range", guard_azimuth="guard_azimuth",
        train_range="train_range", train_azimuth="train_azimuth", pfa="pfa"),
        "cfar")
    dbscan = _build(DbscanConfig, _take(
        _require_mapping(root.get("dbscan"), "dbscan"), "dbscan",
        eps_m="eps_m", min_pts="min_pts"), "dbscan")
    align = _build(AlignConfig, _take(
        _require_mapping(root.get("align"), "align"), "align",
        alpha="alpha", window="window", gate_margin="gate_margin",
        reject_ratio="reject_ratio", bound_deg="bound_deg",
        simplex_tol="simplex_tol"), "align")
    scoring = _build(ScoringConfig, _take(
        _require_mapping(root.get("scoring"), "scoring"), "scoring",
        primary_threshold="primary_threshold", sweep_start="sweep_start",
        sweep_stop="sweep_stop", sweep_step="sweep_step"), "scoring")
    classes = _parse_classes(root.get("classes")) if "classes" in root \
        else dict(DEFAULT_CLASS_META)
    if not classes:
        raise ConfigError("classes: table must not be empty")
    return PipelineConfig(cfar, dbscan, align, scoring, classes)


def load_config(path: str | Path | None) -> PipelineConfig:
    """Parse a YAML config file; None yields the shipped defaults."""
    if path is None:
        return PipelineConfig()
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_config(doc)


# ---------------------------------------------------------------- scene spec

def parse_scene(doc: Any) -> SceneSpec:
    root = _require_mapping(doc, "scene", SceneSpecError)
    known = {"seed", "n_frames", "plane", "camera", "rf", "noise", "objects"}
    for key in root:
        if key not in known:
            raise SceneSpecError(f"{key}: unknown key")

    plane_kw = _take(_require_mapping(root.get("plane"), "plane",
                                      SceneSpecError),
                     "plane", SceneSpecError,
                     phi_deg="phi_deg", gamma_deg="gamma_deg", h_m="h")
    try:
        plane = GroundPlane(math.radians(plane_kw.get("phi_deg", 4.0)),
                            math.radians(plane_kw.get("gamma_deg", 0.0)),
                            plane_kw.get("h", 1.65))
    except (TypeError, ValueError) as e:
        raise SceneSpecError(f"plane: {e}") from e

    cam_kw = _take(_require_mapping(root.get("camera"), "camera",
                                    SceneSpecError),
                   "camera", SceneSpecError,
                   fx="fx", fy="fy", cx="cx", cy="cy", t_cr="t_cr",
                   image_width="image_width", image_height="image_height")
    cam_defaults = {"fx": 1000.0, "fy": 1000.0, "cx": 720.0, "cy": 540.0}
    cam = _build_scene(CameraModel, {**cam_defaults, **cam_kw}, "camera")

    grid = _build_scene(RfGridSpec, _take(
        _require_mapping(root.get("rf"), "rf", SceneSpecError),
        "rf", SceneSpecError,
        n_range="n_range", n_azimuth="n_azimuth", range_res_m="range_res",
        range_min_m="range_min", azimuth_half_span_deg="azimuth_half_span_deg"),
        "rf")
    noise = _build_scene(NoiseSpec, _take(
        _require_mapping(root.get("noise"), "noise", SceneSpecError),
        "noise", SceneSpecError,
        background="background", blob_snr_db="blob_snr_db",
        bbox_jitter_px="bbox_jitter_px", camera_dropout="camera_dropout",
        radar_dropout="radar_dropout"), "noise")

    objects = []
    obj_nodes = root.get("objects") or []
    if not isinstance(obj_nodes, list):
        raise SceneSpecError("objects: expected a list")
    for idx, node in enumerate(obj_nodes):
        kw = _take(_require_mapping(node, f"objects[{idx}]", SceneSpecError),
                   f"objects[{idx}]", SceneSpecError,
                   **{"class": "class_id", "x0": "x0", "z0": "z0", "vx": "vx",
                      "vz": "vz", "height_m": "height", "width_m": "width"})
        objects.append(_build_scene(ObjectSpec, kw, f"objects[{idx}]"))

    return _build_scene(SceneSpec, dict(
        plane=plane, cam=cam, grid=grid, noise=noise, objects=tuple(objects),
        n_frames=root.get("n_frames", 100), seed=root.get("seed", 0)),
        "scene")


def _build_scene(cls, kwargs: dict, where: str):
    try:
        return cls(**kwargs)
    except SceneSpecError:
        raise
    except (TypeError, ValueError) as e:
        raise SceneSpecError(f"{where}: {e}") from e


def load_scene(path: str | Path) -> SceneSpec:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise SceneSpecError(f"{path}: {e}") from e
    return parse_scene(doc)


def scene_to_yaml(spec: SceneSpec) -> str:
    """Serialize a scene so a rendered dataset carries its own recipe."""
    doc = {
        "seed": spec.seed,
        "n_frames": spec.n_frames,
        "plane": {"phi_deg": math.degrees(spec.plane.phi),
                  "gamma_deg": math.degrees(spec.plane.gamma),
                  "h_m": spec.plane.h},
        "camera": {"fx": spec.cam.fx, "fy": spec.cam.fy, "cx": spec.cam.cx,
                   "cy": spec.cam.cy, "t_cr": list(spec.cam.t_cr),
                   "image_width": spec.cam.image_width,
                   "image_height": spec.cam.image_height},
        "rf": {"n_range": spec.grid.n_range, "n_azimuth": spec.grid.n_azimuth,
               "range_res_m": spec.grid.range_res,
               "range_min_m": spec.grid.range_min,
               "azimuth_half_span_deg": spec.grid.azimuth_half_span_deg},
        "noise": {"background": spec.noise.background,
                  "blob_snr_db": spec.noise.blob_snr_db,
                  "bbox_jitter_px": spec.noise.bbox_jitter_px,
                  "camera_dropout": spec.noise.camera_dropout,
                  "radar_dropout": spec.noise.radar_dropout},
        "objects": [{"class": o.class_id, "x0": o.x0, "z0": o.z0,
                     "vx": o.vx, "vz": o.vz, "height_m": o.height,
                     "width_m": o.width} for o in spec.objects],
    }
    return yaml.safe_dump(doc, sort_keys=False)

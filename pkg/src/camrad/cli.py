"""Command-line interface.

Subcommands:
  project    convert (r, theta) <-> (u, v) tuples through a calibration
  cfar       dump CFAR peaks and clusters from a radar frame directory
  annotate   run the full alignment pipeline over a dataset directory
  score      score annotations against ground truth, render report + figures
  synth      render a synthetic dataset from a scene spec
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import align, io, scoring
from .config import PipelineConfig, load_config, load_scene, scene_to_yaml
from .errors import CamradError, ProjectionDomainError
from .geometry import PixelPoint, RadarPoint, project_c2r, project_r2c
from .rf_detect import cfar_detect, cluster_peaks
from .synth import default_scene, render_scene


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="camrad",
                                description="camera-radar annotation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("project", help="convert coordinate tuples")
    pp.add_argument("--direction", choices=["r2c", "c2r"], required=True)
    pp.add_argument("--calib", type=Path, required=True)
    pp.add_argument("--input", type=Path, default=None,
                    help="tuple-per-line file; default stdin")
    pp.add_argument("--output", type=Path, default=None,
                    help="output file; default stdout")

    pc = sub.add_parser("cfar", help="dump peaks and clusters")
    pc.add_argument("frames", type=Path, help="radar frame directory")
    pc.add_argument("--config", type=Path, default=None)
    pc.add_argument("--output", type=Path, default=None,
                    help="output file; default stdout")

    pa = sub.add_parser("annotate", help="run the annotation pipeline")
    pa.add_argument("dataset", type=Path,
                    help="directory with frames/, detections.txt, calib.txt")
    pa.add_argument("--config", type=Path, default=None)
    pa.add_argument("--output", type=Path, default=None,
                    help="output directory; default <dataset>/out")
    pa.add_argument("--workers", type=int, default=1)
    pa.add_argument("--figures", action="store_true",
                    help="render BEV and plane-history figures")

    ps = sub.add_parser("score", help="score annotations against truth")
    ps.add_argument("--dets", type=Path, required=True)
    ps.add_argument("--gt", type=Path, required=True)
    ps.add_argument("--config", type=Path, default=None)
    ps.add_argument("--output", type=Path, required=True,
                    help="report directory")
    ps.add_argument("--per-class", action="store_true",
                    help="include per-class rows in the text report")
    ps.add_argument("--per-scenario", type=Path, default=None, metavar="FILE",
                    help="scenario map: lines of 'name first_frame last_frame'")
    ps.add_argument("--plot-data", action="store_true",
                    help="emit the threshold sweep as a delimited table")

    py = sub.add_parser("synth", help="render a synthetic dataset")
    py.add_argument("--spec", type=Path, default=None,
                    help="scene spec YAML; omit for the demo scene")
    py.add_argument("--output", type=Path, required=True)
    py.add_argument("--seed", type=int, default=None,
                    help="override the spec seed")
    py.add_argument("--workers", type=int, default=1)
    return p


# ------------------------------------------------------------------ project

def cmd_project(args) -> int:
    cam, g0 = io.read_calibration(args.calib)
    text = (args.input.read_text() if args.input else sys.stdin.read())
    out_lines = []
    failures = 0
    for n, ln in enumerate(text.splitlines(), start=1):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        try:
            a, b = (float(t) for t in ln.split())
            if args.direction == "r2c":
                p = project_r2c(RadarPoint(a, b), g0, cam)
                out_lines.append(f"{_fmt(p.u)} {_fmt(p.v)}")
            else:
                q = project_c2r(PixelPoint(a, b), g0, cam)
                out_lines.append(f"{_fmt(q.r)} {_fmt(q.theta)}")
        except (ValueError, ProjectionDomainError) as e:
            failures += 1
            out_lines.append(f"# error line {n}: {e}")
    body = "\n".join(out_lines) + ("\n" if out_lines else "")
    if args.output:
        args.output.write_text(body)
    else:
        sys.stdout.write(body)
    if failures:
        print(f"camrad project: {failures} line(s) failed", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------------- cfar

def cmd_cfar(args) -> int:
    cfg = load_config(args.config)
    lines = ["rfpeaks v1",
             "# frame range_bin azimuth_bin range_m azimuth_rad magnitude cluster"]
    for hdr in io.list_rf_frames(args.frames):
        img = io.read_rf_frame(hdr)
        peaks = cfar_detect(img, cfg.cfar)
        clusters = cluster_peaks(peaks, cfg.dbscan)
        label = {}
        for cl in clusters:
            for pk in cl.peaks:
                label[pk.cell] = cl.cluster_id
        for pk in peaks:
            lines.append(" ".join([
                str(img.frame_id), str(pk.cell[0]), str(pk.cell[1]),
                _fmt(pk.point.r), _fmt(pk.point.theta), _fmt(pk.magnitude),
                str(label.get(pk.cell, -1))]))
    body = "\n".join(lines) + "\n"
    if args.output:
        args.output.write_text(body)
    else:
        sys.stdout.write(body)
    return 0


# ----------------------------------------------------------------- annotate

def _detect_frame(hdr_path: Path, cfg: PipelineConfig):
    img = io.read_rf_frame(hdr_path)
    clusters = cluster_peaks(cfar_detect(img, cfg.cfar), cfg.dbscan)
    return img.frame_id, clusters, img.fov()


def cmd_annotate(args) -> int:
    dataset = args.dataset
    cfg = load_config(args.config)
    cam, g0 = io.read_calibration(dataset / "calib.txt")
    detections = io.read_detections(dataset / "detections.txt")
    headers = io.list_rf_frames(dataset / "frames")
    if not headers:
        print(f"camrad annotate: no radar frames under {dataset}/frames",
              file=sys.stderr)
        return 2

    if args.workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            detected = list(pool.map(_detect_frame, headers,
                                     [cfg] * len(headers), chunksize=4))
    else:
        detected = [_detect_frame(h, cfg) for h in headers]

    fov = detected[0][2]
    frames = [align.FrameInput(fid, clusters, detections.get(fid, []))
              for fid, clusters, _ in detected]
    result = align.annotate_sequence(frames, g0, cam, cfg.classes, cfg.align,
                                     fov=fov)

    out_dir = args.output or (dataset / "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_annotations(out_dir / "annotations.txt", result.annotations)
    io.write_plane_log(out_dir / "plane_log.txt", result.windows)
    for w in result.windows:
        print(f"window {w.frame_start}-{w.frame_end}: "
              f"phi={math.degrees(w.plane.phi):.3f} deg "
              f"gamma={math.degrees(w.plane.gamma):.3f} deg "
              f"objective={w.objective:.4f} pairs={w.n_pairs}")
    print(f"wrote {len(result.annotations)} annotations "
          f"({result.skipped} candidates outside the projection domain)")
    if args.figures:
        from . import plots
        plots.save_bev_annotations(result.annotations, out_dir / "annotations_bev.png")
        plots.save_plane_history(result.windows, out_dir / "plane_history.png")
    return 0


# -------------------------------------------------------------------- score

def _read_scenarios(path: Path) -> dict[str, tuple[int, int]]:
    out = {}
    for n, ln in enumerate(Path(path).read_text().splitlines(), start=1):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 3:
            raise CamradError(f"{path}:{n}: expected 'name first last'")
        out[parts[0]] = (int(parts[1]), int(parts[2]))
    return out


def _metric_lines(name: str, m: scoring.MetricSet) -> str:
    mae = f"{m.mae_mean:.4f} +- {m.mae_std:.4f}" if m.mae_mean is not None \
        else "n/a"
    return (f"{name:<14} n_det={m.n_det:<6d} n_gt={m.n_gt:<6d} "
            f"precision={m.precision:.4f} recall={m.recall:.4f} "
            f"ap={m.ap:.4f} ar={m.ar:.4f} dqf1={m.dqf1:.4f} mae={mae}")


def _kv_lines(prefix: str, m: scoring.MetricSet) -> list[str]:
    rows = [("n_det", m.n_det), ("n_gt", m.n_gt), ("precision", m.precision),
            ("recall", m.recall), ("ap", m.ap), ("ar", m.ar), ("dqf1", m.dqf1)]
    if m.mae_mean is not None:
        rows += [("mae_mean", m.mae_mean), ("mae_std", m.mae_std)]
    return [f"{prefix}.{k} {v}" for k, v in rows]


def cmd_score(args) -> int:
    cfg = load_config(args.config)
    dets = io.read_point_dets(args.dets)
    gts = io.read_point_dets(args.gt)
    scenarios = _read_scenarios(args.per_scenario) if args.per_scenario else None
    report = scoring.score(dets, gts, cfg.classes, cfg.scoring,
                           scenarios=scenarios)

    out_dir = args.output
    out_dir.mkdir(parents=True, exist_ok=True)

    text = ["camrad score report", "",
            _metric_lines("overall", report.overall)]
    if args.per_class or args.per_scenario:
        text.append("")
    if args.per_class:
        for cid in sorted(report.per_class):
            text.append(_metric_lines(cid, report.per_class[cid]))
        if report.macro is not None:
            text.append(_metric_lines("macro", report.macro))
    if scenarios:
        for name in sorted(report.per_scenario):
            text.append(_metric_lines(f"[{name}]", report.per_scenario[name]))
    (out_dir / "report.txt").write_text("\n".join(text) + "\n")

    kv = _kv_lines("overall", report.overall)
    for cid in sorted(report.per_class):
        kv += _kv_lines(f"class.{cid}", report.per_class[cid])
    if report.macro is not None:
        kv += _kv_lines("macro", report.macro)
    for name in sorted(report.per_scenario):
        kv += _kv_lines(f"scenario.{name}", report.per_scenario[name])
    (out_dir / "report.kv").write_text("\n".join(kv) + "\n")

    if args.plot_data:
        rows = ["sweep v1", "# threshold precision recall"]
        rows += [f"{t:.2f} {_fmt(p)} {_fmt(r)}" for t, p, r in report.sweep]
        (out_dir / "threshold_sweep.txt").write_text("\n".join(rows) + "\n")

    from . import plots
    plots.save_threshold_curves(report, out_dir / "score_curves.png")
    plots.save_class_bars(report, out_dir / "per_class.png")

    print(_metric_lines("overall", report.overall))
    return 0


# -------------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    spec = load_scene(args.spec) if args.spec else default_scene()
    if args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, seed=args.seed)

    frames, cam_objs, truth = render_scene(spec, workers=args.workers)
    out = args.output
    (out / "frames").mkdir(parents=True, exist_ok=True)
    for img in frames:
        io.write_rf_frame(out / "frames", img)
    io.write_detections(out / "detections.txt", enumerate(cam_objs))
    io.write_annotations(out / "gt.txt", truth.annotations)
    # The shipped calibration keeps the survey prior for pitch and roll;
    # only the mounted height is taken from the scene.
    from .geometry import GroundPlane
    g0 = GroundPlane(math.radians(4.0), 0.0, spec.plane.h)
    io.write_calibration(out / "calib.txt", spec.cam, g0)
    (out / "scene.yaml").write_text(scene_to_yaml(spec))
    print(f"rendered {len(frames)} frames, "
          f"{sum(len(c) for c in cam_objs)} camera detections, "
          f"{len(truth.annotations)} ground-truth objects -> {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"project": cmd_project, "cfar": cmd_cfar,
                "annotate": cmd_annotate, "score": cmd_score,
                "synth": cmd_synth}
    try:
        return handlers[args.command](args)
    except CamradError as e:
        print(f"camrad {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

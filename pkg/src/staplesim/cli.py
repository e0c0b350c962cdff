"""Command-line entry point: ``staplesim {tensile,calibrate,simulate,vision,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import harness, rig, sensors
from .media import DomainError, mean_tensile_force
from .stats import InsufficientDataError

log = logging.getLogger("staplesim")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_FAIL, **extra):
        super().__init__(message)
        self.code = code
        self.extra = extra


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _clean(v):
    """NaN and infinity are not JSON; report them as null."""
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _dump_json(obj, path=None):
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _outdir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# subcommands


def cmd_tensile(args, rc):
    out = _outdir(args.out)
    meta = rc.metadata() | {"seed": args.seed}
    protocol = rc.rig if args.trials is None else replace(rc.rig, trials_per_setting=args.trials)
    params = rc.params
    if args.distance_m is None:
        data = rig.run_protocol(params, args.seed, protocol)
        distances = list(protocol.compression_distances)
    else:
        protocol = replace(protocol, compression_distances=(args.distance_m,))
        data = rig.run_protocol(params, args.seed, protocol)
        distances = [args.distance_m]
    files = []
    for d, curves in zip(distances, data.curves):
        for t, curve in enumerate(curves):
            p = out / f"curve_d{d * 100:05.2f}cm_t{t}.csv"
            curve.to_csv(p, metadata=meta | {"distance_m": d, "trial": t})
            files.append(p.name)
    data.to_csv(out / "protocol.csv", metadata=meta)
    table = rig.summarize(data, args.strains)
    table.to_csv(out / "summary.csv", metadata=meta)
    if args.figures:
        from . import plots
        plots.force_strain(data, out / "force_strain.png", meta)
        plots.force_summary(table, out / "force_summary.png", meta)
    summary = {"meta": meta, "files": files + ["protocol.csv", "summary.csv"], "table": [
        {"strain": float(s), "distance_m": float(d), "mean_N": float(table.mean[i, j]), "std_N": float(table.std[i, j])}
        for i, s in enumerate(table.strains) for j, d in enumerate(table.distances)]}
    sys.stdout.write(_dump_json(summary))


def cmd_calibrate(args, rc):
    targets = rig.read_targets(args.targets) if args.targets else list(rig.REFERENCE_TARGETS)
    try:
        fitted = rig.fit_constitutive(targets, base=rc.params)
    except rig.IllPosedError as exc:
        raise CliError(str(exc)) from None
    meta = rc.metadata()
    rows = []
    for t in targets:
        pred = float(mean_tensile_force(t.strain, t.compression, fitted))
        rows.append({"c": t.compression, "strain": t.strain, "target_N": t.mean, "std_N": t.std, "fit_N": pred,
                     "within_std": abs(pred - t.mean) <= t.std})
    if args.out:
        fitted.dump(args.out, metadata=meta | {"source": args.targets or "built-in targets"})
    sys.stdout.write(_dump_json({"meta": meta, "params": fitted.to_dict(), "targets": rows,
                                 "weighted_sse": rig.weighted_sse(targets, fitted.a0, fitted.a1, fitted.b0,
                                                                  fitted.b1, fitted.p)}))


def cmd_simulate(args, rc):
    out = _outdir(args.out)
    meta = rc.metadata() | {"seed": args.seed, "mode": args.mode, "hours": args.hours}
    stats = harness.run_experiment(args.mode, args.trials, args.seed, duration_s=args.hours * 3600.0,
                                   cfg=rc.agent_config(), arena=rc.arena, hcfg=rc.harness, workers=args.workers)
    for lg in stats.logs:
        (out / f"trial_{lg.trial:02d}.jsonl").write_text(lg.jsonl(meta | {"trial": lg.trial}))
    harness.write_summary(stats, out / "summary.csv", meta)
    harness.write_cycles(stats, out / "cycles.csv", meta)
    body = {"meta": meta, "mode": stats.mode, "n_trials": stats.n_trials,
            "success_rate": stats.success_rate, "success_std": stats.success_std,
            "cycle_time_min": stats.cycle_time_min, "cycle_time_std": stats.cycle_time_std,
            "mass_kg": stats.mass_kg, "mass_std": stats.mass_std, "failures": stats.failures,
            "std_defined": stats.std_defined}
    _dump_json(body, out / "stats.json")
    if args.figures:
        from . import plots
        plots.pellets_over_time(stats, out / "pellets_over_time.png", meta)
    sys.stdout.write(_dump_json(body))


def _parse_pose(text):
    try:
        x, y, h = (float(v) for v in text.split(","))
    except ValueError:
        raise CliError(f"pose must be 'x,y,heading_deg', got {text!r}", EXIT_USAGE) from None
    return x, y, math.radians(h)


def cmd_vision(args, rc):
    meta = rc.metadata()
    if args.input:
        try:
            img = sensors.read_pgm(args.input)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read image {args.input}: {exc}") from None
    else:
        from .media import MediaField
        from .world import World
        pose = _parse_pose(args.render)
        empty = MediaField(rc.arena.excavation_zone, rc.harness.cell_size)
        world = World.create(rc.arena, empty)
        img = sensors.render_camera(pose, world, rc.agent.camera)
        if args.save_image:
            sensors.write_pgm(img, args.save_image, meta)
    det = sensors.detect_piles(img, args.dark_threshold, args.bright_value, args.min_dark)
    body = det.to_json()
    if args.figures:
        from . import plots
        plots.camera_frame(img, det, args.figures, meta)
    if args.out:
        _dump_json(body | {"meta": meta}, args.out)
    sys.stdout.write(json.dumps(body, sort_keys=True) + "\n")


def cmd_report(args, rc):
    try:
        a = harness.read_summary(args.a)
        b = harness.read_summary(args.b)
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read summary: {exc}") from None
    try:
        rep = harness.compare_conditions(a, b)
    except InsufficientDataError as exc:
        raise CliError(str(exc)) from None
    body = rep.to_json() | {"a": {"mode": a.mode, "success_rate": a.success_rate, "cycle_time_min": a.cycle_time_min,
                                  "mass_kg": a.mass_kg, "n_trials": a.n_trials},
                            "b": {"mode": b.mode, "success_rate": b.success_rate, "cycle_time_min": b.cycle_time_min,
                                  "mass_kg": b.mass_kg, "n_trials": b.n_trials}}
    meta = rc.metadata()
    if args.out:
        _dump_json(body | {"meta": meta}, args.out)
    if args.figures:
        from . import plots
        plots.condition_comparison(a, b, rep, args.figures, meta)
    sys.stdout.write(_dump_json(body))


# ---------------------------------------------------------------------------
# parser


def _strains(text):
    try:
        return tuple(float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated strains, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="staplesim", description=__doc__)
    p.add_argument("--version", action="version", version=f"staplesim {__version__}")
    p.add_argument("--config", action="append", default=[], metavar="PATH",
                   help="INI file overriding defaults; repeat to layer several")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tensile", help="virtual tensile tests")
    t.add_argument("--distance-m", type=float, help="single compression distance; default runs every setting")
    t.add_argument("--trials", type=int, help="pulls per setting (default from config)")
    t.add_argument("--seed", type=int)
    t.add_argument("--strains", type=_strains, default=(0.1, 0.2, 0.3))
    t.add_argument("--out", default="tensile_out")
    t.add_argument("--figures", action="store_true", help="also write PNG figures into --out")
    t.set_defaults(func=cmd_tensile)

    c = sub.add_parser("calibrate", help="fit the tensile law to target means")
    c.add_argument("--targets", help="CSV with c,strain,mean_N,std_N; default is the built-in set")
    c.add_argument("--out", help="write fitted parameters as INI")
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", help="excavation trials for one preparation mode")
    s.add_argument("--mode", choices=harness.MODES, required=True)
    s.add_argument("--trials", type=int, default=5)
    s.add_argument("--hours", type=float, default=2.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default="sim_out")
    s.add_argument("--figures", action="store_true", help="also write PNG figures into --out")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("vision", help="detect piles in a camera frame")
    src = v.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input", help="PGM image")
    src.add_argument("--render", metavar="X,Y,HEADING_DEG", help="render a frame from this pose in the default world")
    v.add_argument("--save-image", help="with --render, also write the frame as PGM")
    v.add_argument("--dark-threshold", type=int, default=64)
    v.add_argument("--bright-value", type=int, default=255)
    v.add_argument("--min-dark", type=int, default=1)
    v.add_argument("--out", help="write the detection JSON here as well")
    v.add_argument("--figures", metavar="PNG", help="write an annotated frame")
    v.set_defaults(func=cmd_vision)

    r = sub.add_parser("report", help="compare two simulate summaries")
    r.add_argument("a", help="summary.csv of the first condition")
    r.add_argument("b", help="summary.csv of the second condition")
    r.add_argument("--out", help="write the report JSON here as well")
    r.add_argument("--figures", metavar="PNG", help="write a comparison figure")
    r.set_defaults(func=cmd_report)
    return p


def _error(message, code, **extra):
    sys.stderr.write(json.dumps({"error": message, "exit_code": code, **extra}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)   # exits 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rc = cfgmod.load(*args.config)
    except cfgmod.ConfigError as exc:
        return _error(str(exc), EXIT_CONFIG, key=exc.key)
    if getattr(args, "seed", "absent") is None:
        args.seed = rc.seed
    try:
        args.func(args, rc)
    except CliError as exc:
        return _error(str(exc), exc.code, **exc.extra)
    except (DomainError, InsufficientDataError) as exc:
        return _error(str(exc), EXIT_FAIL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

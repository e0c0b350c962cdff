"""End-to-end excavation trials, per-condition statistics and the between-condition comparison."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import agent as ag
from .media import prepare_pushed, prepare_scattered
from .rng import Streams
from .stats import InsufficientDataError, welch_t_test
from .world import Arena, World

MODES = ("scattered", "pushed")


@dataclass(frozen=True)
class HarnessConfig:
    total_mass: float = 1.0
    cell_size: float = 0.05
    pushed_mean_compression: float = 0.15
    pushed_compression_spread: float = 0.08
    dt: float = 0.1
    watchdog_s: float = 900.0
    start: tuple = (1.4, 0.6)


@dataclass
class Cycle:
    start_s: float
    end_s: float
    success: bool
    pellet_mass_kg: float

    @property
    def minutes(self):
        return (self.end_s - self.start_s) / 60.0


@dataclass
class TrialLog:
    prep_mode: str
    seed: int
    trial: int = 0
    events: list = field(default_factory=list)
    cycles: list = field(default_factory=list)
    total_transported_kg: float = 0.0
    successes: int = 0
    failures: int = 0
    deposited_kg: float = 0.0          # world deposit ledger at the end (robot deliveries only)
    initial_mass_kg: float = 0.0
    final_mass_kg: float = 0.0         # field + piles + floor at the end
    stalls: int = 0
    illegal_transitions: int = 0

    @property
    def success_rate(self):
        n = self.successes + self.failures
        return self.successes / n if n else math.nan

    @property
    def mean_cycle_min(self):
        return float(np.mean([c.minutes for c in self.cycles])) if self.cycles else math.nan

    def pellet_times(self):
        """Times (s) at which pellets were delivered, for pellets-over-time curves."""
        return [c.end_s for c in self.cycles if c.success]

    def failure_times(self):
        return [e["t_s"] for e in self.events if e["event"] == "excavation_failure"]

    def jsonl(self, metadata: Optional[dict] = None) -> str:
        lines = []
        if metadata is not None:
            lines.append(json.dumps({"meta": metadata}, sort_keys=True))
        lines.extend(json.dumps(e, sort_keys=True) for e in self.events)
        return "\n".join(lines) + "\n"


def make_world(prep_mode, rng, arena: Arena = Arena(), hcfg: HarnessConfig = HarnessConfig()):
    zone = arena.excavation_zone
    if prep_mode == "scattered":
        media = prepare_scattered(zone, hcfg.total_mass, rng, arena=arena.bounds, cell_size=hcfg.cell_size)
    elif prep_mode == "pushed":
        media = prepare_pushed(arena.bounds, zone, hcfg.total_mass, rng,
                               mean_compression=hcfg.pushed_mean_compression,
                               compression_spread=hcfg.pushed_compression_spread, cell_size=hcfg.cell_size)
    else:
        raise ValueError(f"unknown preparation mode {prep_mode!r}")
    return World.create(arena, media)


def run_trial(prep_mode: str, duration_s: float = 7200.0, seed: int = 0, *, trial: int = 0,
              cfg: ag.AgentConfig = ag.AgentConfig(), arena: Arena = Arena(),
              hcfg: HarnessConfig = HarnessConfig()) -> TrialLog:
    """Simulate one trial; deterministic in ``(prep_mode, seed, trial)`` and the configs."""
    if prep_mode not in MODES:
        raise ValueError(f"unknown preparation mode {prep_mode!r}")
    streams = Streams(seed, MODES.index(prep_mode), trial)
    world = make_world(prep_mode, streams.media, arena, hcfg)
    log = TrialLog(prep_mode, seed, trial)
    log.initial_mass_kg = world.total_mass()
    sx, sy = hcfg.start
    robot = ag.RobotState(sx, sy, float(streams.harness.uniform(-math.pi, math.pi)),
                          stuck_window=ag.deque(maxlen=cfg.sensors.stuck_window))
    dt = hcfg.dt
    cycle_start = 0.0
    outcome = None
    delivered = []
    while robot.t < duration_s - 1e-9:
        h = dt
        if robot.plan:
            h = dt * max(1, math.ceil(robot.plan[0][0] / dt - 1e-9))
        h = min(h, duration_s - robot.t)
        if h <= 1e-12:
            break
        events = ag.step(robot, world, h, streams, cfg)
        for e in events:
            log.events.append(e)
            name = e["event"]
            if name == "excavation_success":
                outcome = True
            elif name == "excavation_failure":
                outcome = False
            elif name == "deposit":
                ok = bool(outcome)
                m = e.get("pellet_mass_kg", 0.0) if ok else 0.0
                log.cycles.append(Cycle(cycle_start, e["t_s"], ok, m))
                if ok:
                    delivered.append(m)
                log.successes += ok
                log.failures += outcome is False
                cycle_start = e["t_s"]
                outcome = None
        if (robot.t - robot.last_excavate_t > hcfg.watchdog_s and world.media.total_mass() > 0
                and robot.fsm is not ag.S.EXCAVATE):
            log.stalls += 1
            robot.last_excavate_t = robot.t
    # an outcome whose cycle did not close before time ran out still counts toward the rate
    if outcome is not None:
        log.successes += outcome
        log.failures += not outcome
    total = 0.0
    for m in delivered:
        total += m
    log.total_transported_kg = total
    log.deposited_kg = world.deposits.delivered
    log.final_mass_kg = world.total_mass() + (robot.carried.mass if robot.carried else 0.0)
    return log


@dataclass
class ConditionStats:
    mode: str
    success_rate: float
    success_std: float
    cycle_time_min: float
    cycle_time_std: float
    mass_kg: float
    mass_std: float
    failures: int
    n_trials: int
    per_trial_success: list = field(default_factory=list)
    per_trial_mass: list = field(default_factory=list)
    per_trial_cycle_min: list = field(default_factory=list)
    cycle_times_min: list = field(default_factory=list)
    logs: list = field(default_factory=list, repr=False)

    @property
    def std_defined(self):
        return self.n_trials >= 2


def _std(x):
    return float(np.std(x, ddof=1)) if len(x) >= 2 else math.nan


def aggregate(mode, logs) -> ConditionStats:
    logs = sorted(logs, key=lambda l: (l.seed, l.trial))
    succ = [l.success_rate for l in logs]
    mass = [l.total_transported_kg for l in logs]
    cyc = [c.minutes for l in logs for c in l.cycles]
    return ConditionStats(mode, float(np.nanmean(succ)), _std(succ),
                          float(np.mean(cyc)) if cyc else math.nan, _std(cyc),
                          float(np.mean(mass)), _std(mass), sum(l.failures for l in logs), len(logs),
                          succ, mass, [l.mean_cycle_min for l in logs], cyc, logs)


def run_experiment(prep_mode: str, n_trials: int = 5, master_seed: int = 0, *, duration_s: float = 7200.0,
                   cfg: ag.AgentConfig = ag.AgentConfig(), arena: Arena = Arena(),
                   hcfg: HarnessConfig = HarnessConfig(), workers: int = 1) -> ConditionStats:
    """``n_trials`` independent trials; with one trial the spreads are NaN rather than zero."""
    jobs = [(prep_mode, duration_s, master_seed, t) for t in range(n_trials)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            logs = list(ex.map(_run_job, jobs, [cfg] * len(jobs), [arena] * len(jobs), [hcfg] * len(jobs)))
    else:
        logs = [_run_job(j, cfg, arena, hcfg) for j in jobs]
    return aggregate(prep_mode, logs)


def _run_job(job, cfg, arena, hcfg):
    mode, dur, seed, t = job
    return run_trial(mode, dur, seed, trial=t, cfg=cfg, arena=arena, hcfg=hcfg)


@dataclass(frozen=True)
class ComparisonReport:
    p_value: float
    mass_ratio: float
    success_delta: float
    cycle_p_value: float = math.nan

    def to_json(self):
        return {"p_value": self.p_value, "mass_ratio": self.mass_ratio,
                "success_delta": self.success_delta, "cycle_p_value": self.cycle_p_value}


def compare_conditions(a: ConditionStats, b: ConditionStats) -> ComparisonReport:
    """Welch test on per-trial success rates; mass ratio is mean(a) / mean(b)."""
    if len(a.per_trial_success) < 2 or len(b.per_trial_success) < 2:
        raise InsufficientDataError("need at least two trials per condition")
    p = welch_t_test(a.per_trial_success, b.per_trial_success)
    mb = float(np.mean(b.per_trial_mass))
    ratio = float(np.mean(a.per_trial_mass)) / mb if mb > 0 else math.inf
    cyc_p = math.nan
    if len(a.cycle_times_min) >= 2 and len(b.cycle_times_min) >= 2:
        cyc_p = welch_t_test(a.cycle_times_min, b.cycle_times_min)
    return ComparisonReport(p, ratio, float(np.mean(a.per_trial_success) - np.mean(b.per_trial_success)), cyc_p)


# ---------------------------------------------------------------------------
# files

SUMMARY_COLUMNS = ("mode", "trial", "success_rate", "mean_cycle_min", "mass_kg")


def write_summary(stats: ConditionStats, path, metadata: Optional[dict] = None):
    with open(path, "w", newline="") as fh:
        for k, v in (metadata or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for log in stats.logs:
            w.writerow([log.prep_mode, log.trial, f"{log.success_rate:.6f}", f"{log.mean_cycle_min:.6f}",
                        f"{log.total_transported_kg:.9f}"])


def write_cycles(stats: ConditionStats, path, metadata: Optional[dict] = None):
    with open(path, "w", newline="") as fh:
        for k, v in (metadata or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(["mode", "trial", "start_s", "end_s", "success", "pellet_mass_kg"])
        for log in stats.logs:
            for c in log.cycles:
                w.writerow([log.prep_mode, log.trial, f"{c.start_s:.3f}", f"{c.end_s:.3f}", int(c.success),
                            f"{c.pellet_mass_kg:.9f}"])


def read_summary(path) -> ConditionStats:
    """Rebuild per-trial statistics from a ``summary.csv`` (cycle-level data come from a sibling cycles.csv)."""
    path = Path(path)
    rows = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    data = list(csv.DictReader(rows))
    if not data:
        raise ValueError(f"{path} has no trial rows")
    modes = {r["mode"] for r in data}
    succ = [float(r["success_rate"]) for r in data]
    mass = [float(r["mass_kg"]) for r in data]
    cyc_means = [float(r["mean_cycle_min"]) for r in data]
    cycles = []
    cpath = path.with_name("cycles.csv")
    if cpath.exists():
        crow = [ln for ln in cpath.read_text().splitlines() if ln and not ln.startswith("#")]
        cycles = [(float(r["end_s"]) - float(r["start_s"])) / 60.0 for r in csv.DictReader(crow)]
    return ConditionStats("+".join(sorted(modes)), float(np.nanmean(succ)), _std(succ),
                          float(np.mean(cycles)) if cycles else float(np.nanmean(cyc_means)),
                          _std(cycles) if cycles else math.nan, float(np.mean(mass)), _std(mass),
                          0, len(data), succ, mass, cyc_means, cycles)

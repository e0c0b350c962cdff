"""Virtual tensile rig for staple bulks and the calibration fitter for the tensile law."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar, nnls

from .media import (ConstitutiveParams, DomainError, ForceStrainCurve, sample_force_path)
from .rng import substream


class IllPosedError(ValueError):
    """Calibration targets cannot pin the tensile law."""


@dataclass(frozen=True)
class RigProtocol:
    box: tuple = (0.26, 0.101, 0.117)   # m
    sample_mass: float = 1.0            # kg
    final_length: float = 0.189         # m, sample length after compression
    compression_distances: tuple = (0.0, 0.0125, 0.025, 0.05)
    pull_distance: float = 0.064
    trials_per_setting: int = 3
    grid_points: int = 200

    @property
    def max_strain(self):
        return self.pull_distance / self.final_length

    def compression_of(self, distance):
        return distance / self.final_length

    def strain_grid(self):
        return np.linspace(0.0, self.max_strain, self.grid_points)


@dataclass(frozen=True)
class CalibrationTarget:
    compression: float
    strain: float
    mean: float
    std: float
    source: str = ""

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("target std must be positive")


CalibrationTargets = Sequence[CalibrationTarget]

REFERENCE_TARGETS = (
    CalibrationTarget(0.26, 0.30, 34.4, 7.0, "26% pre-compressed bulk, 30% strain, mean of 3 pulls"),
    CalibrationTarget(0.0, 0.30, 16.5, 5.5, "uncompressed bulk, 30% strain, mean of 3 pulls"),
    CalibrationTarget(0.26, 0.10, 9.3, 2.7, "26% pre-compressed bulk, 10% strain, mean of 3 pulls"),
    CalibrationTarget(0.0, 0.10, 5.4, 1.2, "uncompressed bulk, 10% strain, mean of 3 pulls"),
)


def read_targets(path) -> list:
    """Read ``c,strain,mean_N,std_N`` rows (``#`` comment lines skipped)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        out.append(CalibrationTarget(float(row["c"]), float(row["strain"]), float(row["mean_N"]),
                                     float(row["std_N"]), row.get("source", "") or f"{Path(path).name}"))
    return out


def write_targets(targets, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "strain", "mean_N", "std_N", "source"])
        for t in targets:
            w.writerow([t.compression, t.strain, t.mean, t.std, t.source])


# ---------------------------------------------------------------------------
# trials


def _trial_rng(seed, distance, trial):
    return substream(seed, "rig", int(round(distance * 1e5)), trial)


def run_tensile_trial(compression_distance: float, params: ConstitutiveParams, seed: int,
                      *, trial: int = 0, protocol: RigProtocol = RigProtocol()) -> ForceStrainCurve:
    """Compress by ``compression_distance`` (m) then pull over the protocol strain grid."""
    if compression_distance < 0 or compression_distance > 0.06:
        raise DomainError(f"compression distance {compression_distance} m outside [0, 0.06]")
    c = protocol.compression_of(compression_distance)
    strains = protocol.strain_grid()
    forces, events = sample_force_path(strains, c, params, _trial_rng(seed, compression_distance, trial))
    return ForceStrainCurve(strains, forces, events, compression=c)


@dataclass
class ProtocolDataset:
    distances: np.ndarray
    compressions: np.ndarray
    strain: np.ndarray
    mean: np.ndarray      # (settings, grid)
    std: np.ndarray       # (settings, grid), sample std over trials
    curves: list = field(default_factory=list)   # per setting, list of trial curves

    def rows(self):
        for k, d in enumerate(self.distances):
            for s, m, sd in zip(self.strain, self.mean[k], self.std[k]):
                yield (float(d), float(self.compressions[k]), float(s), float(m), float(sd))

    def to_csv(self, path_or_buf, metadata: Optional[dict] = None):
        own = isinstance(path_or_buf, (str, Path))
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            for k, v in (metadata or {}).items():
                fh.write(f"# {k}={v}\n")
            w = csv.writer(fh)
            w.writerow(["distance_m", "c", "strain", "mean_N", "std_N"])
            for r in self.rows():
                w.writerow([f"{x:.6f}" for x in r])
        finally:
            if own:
                fh.close()


def run_protocol(params: ConstitutiveParams, master_seed: int,
                 protocol: RigProtocol = RigProtocol()) -> ProtocolDataset:
    """All compression settings times ``trials_per_setting`` pulls, aggregated per strain."""
    means, stds, curves = [], [], []
    for d in protocol.compression_distances:
        trials = [run_tensile_trial(d, params, master_seed, trial=t, protocol=protocol)
                  for t in range(protocol.trials_per_setting)]
        f = np.vstack([c.force for c in trials])
        means.append(f.mean(axis=0))
        # spread about the first trial so identical trials give exactly zero
        stds.append((f - f[0]).std(axis=0, ddof=1) if len(trials) > 1 else np.full(f.shape[1], np.nan))
        curves.append(trials)
    dist = np.asarray(protocol.compression_distances, dtype=float)
    return ProtocolDataset(dist, dist / protocol.final_length, protocol.strain_grid(),
                           np.vstack(means), np.vstack(stds), curves)


@dataclass
class SummaryTable:
    strains: np.ndarray      # requested strains
    sampled: np.ndarray      # grid strains actually used
    distances: np.ndarray
    mean: np.ndarray         # (strains, distances)
    std: np.ndarray

    @property
    def shape(self):
        return self.mean.shape

    def to_csv(self, path_or_buf, metadata=None):
        own = isinstance(path_or_buf, (str, Path))
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            for k, v in (metadata or {}).items():
                fh.write(f"# {k}={v}\n")
            w = csv.writer(fh)
            w.writerow(["strain", "distance_m", "mean_N", "std_N"])
            for i, s in enumerate(self.strains):
                for j, d in enumerate(self.distances):
                    w.writerow([f"{s:.4f}", f"{d:.4f}", f"{self.mean[i, j]:.4f}", f"{self.std[i, j]:.4f}"])
        finally:
            if own:
                fh.close()


def summarize(dataset: ProtocolDataset, strains=(0.1, 0.2, 0.3)) -> SummaryTable:
    """Force-vs-compression table at the requested strains (nearest grid sample)."""
    grid = dataset.strain
    half = 0.5 * float(np.min(np.diff(grid))) if grid.size > 1 else 0.0
    rows = []
    for s in strains:
        k = int(np.argmin(np.abs(grid - s)))
        if abs(grid[k] - s) > half + 1e-12:
            warnings.warn(f"strain {s} is off the sampled grid; using nearest sample {grid[k]:.4f}")
        rows.append(k)
    rows = np.asarray(rows)
    return SummaryTable(np.asarray(strains, dtype=float), grid[rows], dataset.distances,
                        dataset.mean[:, rows].T, dataset.std[:, rows].T)


# ---------------------------------------------------------------------------
# calibration


def _check_targets(targets):
    if len(targets) < 4:
        raise IllPosedError(f"need at least 4 targets, got {len(targets)}")
    if len({t.compression for t in targets}) < 2 or len({t.strain for t in targets}) < 2:
        raise IllPosedError("targets must span at least two compressions and two strains")


def _weighted_system(targets, p):
    eps = np.array([t.strain for t in targets])
    c = np.array([t.compression for t in targets])
    w = 1.0 / np.array([t.std for t in targets])
    y = np.array([t.mean for t in targets]) * w
    ep = eps ** p
    A = np.column_stack([eps, c * eps, ep, c * ep]) * w[:, None]
    return A, y


def profile_objective(targets, p):
    """Best weighted sum of squares at fixed exponent ``p``; returns ``(objective, coef)``.

    The remaining coefficients enter linearly and are constrained non-negative,
    which keeps the law non-negative and non-decreasing in compression.
    """
    A, y = _weighted_system(targets, p)
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    coef, rnorm = nnls(A / scale, y)
    return rnorm ** 2, coef / scale


def weighted_sse(targets, a0, a1, b0, b1, p):
    eps = np.array([t.strain for t in targets])
    c = np.array([t.compression for t in targets])
    r = ((a0 + a1 * c) * eps + (b0 + b1 * c) * eps ** p - np.array([t.mean for t in targets])) \
        / np.array([t.std for t in targets])
    return float(np.sum(r ** 2))


def fit_constitutive(targets: CalibrationTargets, *, p_range=(1.2, 6.0), p_step=0.05, p_prior=3.0,
                     base: ConstitutiveParams = ConstitutiveParams()) -> ConstitutiveParams:
    """Weighted least-squares fit of the tensile law.

    Scans the exponent on a uniform grid, solving the linear coefficients
    exactly at each point, then polishes the best exponent with a bounded
    scalar search.  When several exponents fit equally well (e.g. four
    targets and five unknowns) the one closest to ``p_prior`` wins.  Noise
    settings are copied from ``base``.
    """
    targets = list(targets)
    _check_targets(targets)
    n = int(round((p_range[1] - p_range[0]) / p_step)) + 1
    grid = np.linspace(p_range[0], p_range[1], n)
    if not np.any(np.isclose(grid, p_prior)) and p_range[0] <= p_prior <= p_range[1]:
        grid = np.sort(np.append(grid, p_prior))
    objs = np.array([profile_objective(targets, p)[0] for p in grid])
    best = objs.min()
    tol = 1e-10 * (1.0 + best) * len(targets)
    tied = np.flatnonzero(objs <= best + tol)
    k = int(tied[np.argmin(np.abs(grid[tied] - p_prior))])
    p = float(grid[k])
    if len(tied) == 1:
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        res = minimize_scalar(lambda q: profile_objective(targets, q)[0], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-10})
        if res.fun < objs[k]:
            p = float(res.x)
    _, (a0, a1, b0, b1) = profile_objective(targets, p)
    return ConstitutiveParams(float(a0), float(a1), float(b0), float(b1), p,
                              base.yield_rate, base.yield_drop, base.recovery_strain)


def synthetic_targets(params: ConstitutiveParams, compressions=(0.0, 0.1, 0.2, 0.3),
                      strains=(0.05, 0.1, 0.15, 0.2, 0.25, 0.3), rel_std=0.1) -> list:
    """Noise-free targets generated from known parameters (std set relative to the mean)."""
    out = []
    for c in compressions:
        for e in strains:
            m = (params.a0 + params.a1 * c) * e + (params.b0 + params.b1 * c) * e ** params.p
            out.append(CalibrationTarget(c, e, m, max(rel_std * m, 1e-3), "synthetic"))
    return out

"""
Entangled U-particle media: the compression-dependent tensile law, its
stick-slip sampling, the spatial media field and the tear / separate /
recompact mechanics used during excavation.

The tensile law is

    F(eps; c) = (a0 + a1*c) * eps + (b0 + b1*c) * eps**p

where ``eps`` is tensile strain and ``c`` the compression history (largest
compressive strain the sample has seen).  Sampled forces multiply the mean
by a stick-slip factor built from Poisson yield drops that recover
exponentially with further strain; the factor is normalised to have unit
expectation so sampled forces average back to the mean law.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import GeometryError, Rect

STEEL_DENSITY = 7850.0  # kg/m^3, solid density of staple wire
STRAIN_MAX = 0.5
COMPRESSION_MAX = 0.5

SCATTERED_PHI = (0.117, 0.002)
PUSHED_PHI = (0.072, 0.005)

ARENA_RECT = Rect(0.0, 0.0, 1.8, 1.2)


class DomainError(ValueError):
    """Strain or compression outside the range the tensile law is defined on."""


@dataclass(frozen=True)
class StapleSpec:
    long_axis_length: float = 0.012
    leg_length: float = 0.006
    per_particle_mass: float = 34e-6

    def __post_init__(self):
        if min(self.long_axis_length, self.leg_length, self.per_particle_mass) <= 0:
            raise ValueError("staple dimensions and mass must be positive")

    def particle_count(self, total_mass):
        return int(round(total_mass / self.per_particle_mass))


# ---------------------------------------------------------------------------
# tensile law


@dataclass(frozen=True)
class ConstitutiveParams:
    """Coefficients of the tensile law plus the stick-slip noise settings.

    Defaults are the least-squares fit to the four quoted tensile means at
    ``p = 3`` (see :func:`staplesim.rig.fit_constitutive`).
    """

    a0: float = 53.875
    a1: float = 140.0641025641026
    b0: float = 12.5
    b1: float = 993.5897435897433
    p: float = 3.0
    yield_rate: float = 25.0       # events per unit strain
    yield_drop: float = 0.15       # fractional force drop per event
    recovery_strain: float = 0.02  # strain scale of exponential recovery

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"stiffening exponent must exceed 1, got {self.p}")
        if not 0.0 < self.yield_drop < 1.0:
            raise ValueError("yield_drop must lie in (0, 1)")
        if self.yield_rate < 0 or self.recovery_strain <= 0:
            raise ValueError("yield_rate must be >= 0 and recovery_strain > 0")
        eps = np.linspace(0.0, 0.34, 35)[:, None]
        c = np.linspace(0.0, 0.3, 31)[None, :]
        if np.any(_law(eps, c, self) < -1e-9):
            raise ValueError(f"parameters give negative force inside the protocol box: {self}")

    def to_dict(self):
        return asdict(self)

    def dumps(self, metadata: Optional[dict] = None) -> str:
        cp = configparser.ConfigParser()
        cp["constitutive"] = {k: repr(float(v)) for k, v in self.to_dict().items()}
        buf = io.StringIO()
        for k, v in (metadata or {}).items():
            buf.write(f"# {k} = {v}\n")
        cp.write(buf)
        return buf.getvalue()

    def dump(self, path, metadata=None):
        Path(path).write_text(self.dumps(metadata))

    @classmethod
    def loads(cls, text: str) -> "ConstitutiveParams":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        if "constitutive" not in cp:
            raise KeyError("missing [constitutive] section")
        known = {f.name for f in fields(cls)}
        sect = cp["constitutive"]
        unknown = set(sect) - known
        if unknown:
            raise KeyError(f"unknown constitutive keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in sect.items()})

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())


def _law(eps, c, params):
    return (params.a0 + params.a1 * c) * eps + (params.b0 + params.b1 * c) * eps ** params.p


def _check_domain(eps, c):
    eps = np.asarray(eps, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(~np.isfinite(eps)) or np.any(eps < 0) or np.any(eps > STRAIN_MAX):
        raise DomainError(f"strain must lie in [0, {STRAIN_MAX}]")
    if np.any(~np.isfinite(c)) or np.any(c < 0) or np.any(c > COMPRESSION_MAX):
        raise DomainError(f"compression history must lie in [0, {COMPRESSION_MAX}]")
    return eps, c


def mean_tensile_force(strain, compression, params: ConstitutiveParams = ConstitutiveParams()):
    """Deterministic mean tensile force (N); broadcasts over array inputs."""
    eps, c = _check_domain(strain, compression)
    out = _law(eps, c, params)
    return float(out) if out.ndim == 0 else out


def yield_modulation(strains, events, params: ConstitutiveParams):
    """Unit-mean stick-slip factor at ``strains`` given yield ``events``.

    Each event at strain ``s`` multiplies the force by
    ``1 - drop * exp(-(eps - s) / recovery)`` for ``eps >= s``.  For Poisson
    events the expectation of that product is
    ``exp(-rate * drop * recovery * (1 - exp(-eps / recovery)))`` which is
    divided out.
    """
    strains = np.asarray(strains, dtype=float)
    events = np.asarray(events, dtype=float)
    kappa = params.recovery_strain
    norm = np.exp(params.yield_rate * params.yield_drop * kappa * (1.0 - np.exp(-strains / kappa)))
    if events.size == 0:
        return norm
    lag = strains[..., None] - events
    factors = np.where(lag >= 0.0, 1.0 - params.yield_drop * np.exp(-np.clip(lag, 0.0, None) / kappa), 1.0)
    return np.prod(factors, axis=-1) * norm


def draw_yield_events(strain_span, params: ConstitutiveParams, rng: np.random.Generator):
    """Poisson yield-event strains on ``[0, strain_span]``, sorted."""
    n = rng.poisson(params.yield_rate * strain_span) if params.yield_rate > 0 else 0
    return np.sort(rng.uniform(0.0, strain_span, size=n))


def sample_force_path(strains, compression, params: ConstitutiveParams, rng: np.random.Generator):
    """One stick-slip realisation along a strain path.

    Returns ``(forces, events)`` where ``events`` are the yield strains.
    """
    strains = np.asarray(strains, dtype=float)
    mean = mean_tensile_force(strains, compression, params)
    span = float(strains.max()) if strains.size else 0.0
    events = draw_yield_events(span, params, rng)
    return np.asarray(mean) * yield_modulation(strains, events, params), events


def sample_tensile_force(strain, compression, params: ConstitutiveParams, rng: np.random.Generator) -> float:
    """Single stick-slip sample of the tensile force at one strain."""
    mean = mean_tensile_force(strain, compression, params)
    if strain == 0:
        return 0.0
    events = draw_yield_events(float(strain), params, rng)
    return float(mean * yield_modulation(float(strain), events, params))


@dataclass
class ForceStrainCurve:
    strain: np.ndarray
    force: np.ndarray
    yield_events: np.ndarray = field(default_factory=lambda: np.empty(0))
    compression: float = 0.0

    def __post_init__(self):
        self.strain = np.asarray(self.strain, dtype=float)
        self.force = np.asarray(self.force, dtype=float)
        self.yield_events = np.asarray(self.yield_events, dtype=float)
        if self.strain.shape != self.force.shape:
            raise ValueError("strain and force must have the same shape")
        if np.any(np.diff(self.strain) <= 0):
            raise ValueError("strains must be strictly increasing")
        if np.any(self.force < 0):
            raise ValueError("forces must be non-negative")

    def event_flags(self):
        """1 where a yield event fell in ``(previous sample, this sample]``."""
        idx = np.searchsorted(self.strain, self.yield_events, side="left")
        flags = np.zeros(self.strain.size, dtype=int)
        flags[idx[idx < self.strain.size]] = 1
        return flags

    def to_csv(self, path_or_buf, metadata: Optional[dict] = None):
        own = isinstance(path_or_buf, (str, Path))
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            for k, v in (metadata or {}).items():
                fh.write(f"# {k}={v}\n")
            w = csv.writer(fh)
            w.writerow(["strain", "force_N", "yield_event"])
            for s, f, e in zip(self.strain, self.force, self.event_flags()):
                w.writerow([f"{s:.6f}", f"{f:.6f}", int(e)])
        finally:
            if own:
                fh.close()

    @classmethod
    def from_csv(cls, path):
        rows = [r for r in Path(path).read_text().splitlines() if r and not r.startswith("#")]
        data = list(csv.DictReader(rows))
        strain = np.array([float(r["strain"]) for r in data])
        force = np.array([float(r["force_N"]) for r in data])
        flagged = np.array([int(r["yield_event"]) for r in data], dtype=bool)
        return cls(strain, force, strain[flagged])


# ---------------------------------------------------------------------------
# spatial field


@dataclass(frozen=True)
class MediaCell:
    mass: float
    volume_fraction: float
    compression_history: float
    alignment: float


@dataclass
class Engagement:
    """Jaw engagement with the bulk at one cell, accumulated over tear steps."""

    cell: tuple
    bond: float                 # N still tying the gripped material to the bulk
    fill: float                 # effective jaw fill fraction
    tearability: float = 1.0    # local multiplier on strain advance per tear
    strain: float = 0.0         # separation strain reached so far
    steps: int = 0
    squeezes: int = 0


@dataclass(frozen=True)
class TearModel:
    """Phenomenological tearing constants; not measured, tuned to the excavation statistics."""

    bond_scale: float = 0.40         # initial bond as a multiple of F(ref_strain; c)
    bond_spread: float = 0.42        # log-normal sigma of the initial bond
    ref_strain: float = 0.3
    vertical_strain: float = 0.030   # separation strain added per limb tear
    horizontal_strain: float = 0.022  # per wheg tear
    vertical_reduction: float = 1.6  # N of bond removed per tear at zero resistance
    horizontal_reduction: float = 1.2
    slip_factor: float = 0.5         # reduction multiplier when the jaws slip
    tearability_spread: float = 0.45
    fill_range: tuple = (0.5, 1.0)
    engage_compression: float = 0.0  # max compressive strain imparted by jaw insertion
    neighborhood: int = 1            # cells drawn from around the engaged cell
    compression_hardening: float = 0.5  # tear strain per step shrinks as 1 / (1 + k c)


@dataclass(frozen=True)
class TearOutcome:
    bond_reduction: float
    slipped: bool
    empty: bool = False


@dataclass(frozen=True)
class Pellet:
    mass: float
    volume: float
    cohesion: float
    residual_bond: float = 0.0
    source: Optional[tuple] = None

    def __post_init__(self):
        if self.mass < 0 or self.volume < 0:
            raise ValueError("pellet mass and volume must be non-negative")
        if not 0.0 <= self.cohesion <= 1.0:
            raise ValueError("cohesion must lie in [0, 1]")
        if self.mass > 0:
            phi = self.mass / (self.volume * STEEL_DENSITY)
            if not 0.0 < phi <= 1.0 + 1e-9:
                raise ValueError(f"pellet mass/volume imply volume fraction {phi}")

    @property
    def empty(self):
        return self.mass == 0


class MediaField:
    """Rectangular grid of media cells stored as parallel arrays (row = y, column = x)."""

    def __init__(self, region: Rect, cell_size: float = 0.05):
        self.region = region
        self.cell_size = cell_size
        self.nx = max(1, int(round(region.width / cell_size)))
        self.ny = max(1, int(round(region.height / cell_size)))
        shape = (self.ny, self.nx)
        self.mass = np.zeros(shape)
        self.phi = np.zeros(shape)
        self.compression = np.zeros(shape)
        self.alignment = np.zeros(shape)
        self.engagements: dict = {}

    def total_mass(self):
        return math.fsum(self.mass.ravel())

    def cell_index(self, location):
        x, y = location
        if not self.region.contains_point(x, y):
            return None
        i = min(int((y - self.region.y0) / self.cell_size), self.ny - 1)
        j = min(int((x - self.region.x0) / self.cell_size), self.nx - 1)
        return (i, j)

    def cell_center(self, idx):
        i, j = idx
        return (self.region.x0 + (j + 0.5) * self.cell_size, self.region.y0 + (i + 0.5) * self.cell_size)

    def cell(self, idx) -> MediaCell:
        return MediaCell(float(self.mass[idx]), float(self.phi[idx]),
                         float(self.compression[idx]), float(self.alignment[idx]))

    def compress(self, idx, strain):
        """Record a compressive strain; history keeps only the maximum."""
        self.compression[idx] = max(self.compression[idx], strain)

    def neighborhood(self, idx, radius=1):
        """Cells within ``radius`` of ``idx``, nearest first (ties in row-major order)."""
        i0, j0 = idx
        cells = [(i, j) for i in range(max(0, i0 - radius), min(self.ny, i0 + radius + 1))
                 for j in range(max(0, j0 - radius), min(self.nx, j0 + radius + 1))]
        return sorted(cells, key=lambda ij: ((ij[0] - i0) ** 2 + (ij[1] - j0) ** 2, ij))

    def local_mass(self, idx, radius=1):
        return math.fsum(self.mass[c] for c in self.neighborhood(idx, radius))

    def local_phi(self, idx, radius=1):
        cells = self.neighborhood(idx, radius)
        m = np.array([self.mass[c] for c in cells])
        if m.sum() == 0:
            return 0.0
        return float(np.dot(m, [self.phi[c] for c in cells]) / m.sum())

    def add_mass(self, idx, mass, phi):
        """Return material to a cell, mixing volume fraction by mass."""
        m0 = self.mass[idx]
        total = m0 + mass
        if total > 0:
            self.phi[idx] = (m0 * self.phi[idx] + mass * phi) / total
        self.mass[idx] = total


def _fill_field(f: MediaField, total_mass, phi):
    if total_mass <= 0:
        return f
    f.phi[:] = phi
    f.mass[:] = total_mass * phi / phi.sum()
    return f


def prepare_scattered(region: Rect, total_mass: float, rng: np.random.Generator,
                      *, arena: Rect = ARENA_RECT, cell_size: float = 0.05) -> MediaField:
    """Free-fall deposition: no compression history, well aligned, denser packing."""
    if not arena.contains(region):
        raise GeometryError(f"region {region} lies outside arena {arena}")
    if total_mass < 0:
        raise ValueError("total_mass must be non-negative")
    f = MediaField(region, cell_size)
    if total_mass == 0:
        return f
    mu, sd = SCATTERED_PHI
    phi = np.clip(rng.normal(mu, sd, size=f.mass.shape), 1e-6, 1.0)
    f.alignment[:] = np.clip(rng.normal(0.8, 0.05, size=f.mass.shape), 0.0, 1.0)
    return _fill_field(f, total_mass, phi)


def prepare_pushed(arena_region: Rect, target_region: Rect, total_mass: float, rng: np.random.Generator,
                   *, mean_compression: float = 0.15, compression_spread: float = 0.08,
                   cell_size: float = 0.05) -> MediaField:
    """Scatter over the whole arena then push into ``target_region``.

    Per-cell compression history is gamma distributed with the given mean and
    spread, capped at 0.3; a zero mean gives an uncompressed field.
    """
    if not arena_region.contains(target_region):
        raise GeometryError(f"target {target_region} lies outside {arena_region}")
    if total_mass < 0:
        raise ValueError("total_mass must be non-negative")
    f = MediaField(target_region, cell_size)
    if total_mass == 0:
        return f
    mu, sd = PUSHED_PHI
    phi = np.clip(rng.normal(mu, sd, size=f.mass.shape), 1e-6, 1.0)
    f.alignment[:] = np.clip(rng.normal(0.3, 0.1, size=f.mass.shape), 0.0, 1.0)
    if mean_compression > 0:
        shape = (mean_compression / compression_spread) ** 2
        scale = compression_spread ** 2 / mean_compression
        f.compression[:] = np.minimum(rng.gamma(shape, scale, size=f.mass.shape), 0.3)
    return _fill_field(f, total_mass, phi)


def volume_fraction(field: MediaField, region: Optional[Rect] = None) -> float:
    """Mass-weighted mean volume fraction over cells whose centres lie in ``region``."""
    if region is None:
        mask = np.ones(field.mass.shape, dtype=bool)
    else:
        xs = field.region.x0 + (np.arange(field.nx) + 0.5) * field.cell_size
        ys = field.region.y0 + (np.arange(field.ny) + 0.5) * field.cell_size
        mask = (((ys >= region.y0) & (ys <= region.y1))[:, None]
                & ((xs >= region.x0) & (xs <= region.x1))[None, :])
    m = field.mass[mask]
    if m.sum() <= 0:
        return 0.0
    return float(np.dot(m, field.phi[mask]) / m.sum())


# ---------------------------------------------------------------------------
# tearing and separation


def engage(field: MediaField, location, rng: np.random.Generator, *, jaw_volume: float = 12e-6,
           params: ConstitutiveParams = ConstitutiveParams(), model: TearModel = TearModel()):
    """Close the jaws on the media at ``location``; returns the Engagement or None if empty."""
    idx = field.cell_index(location)
    if idx is None:
        return None
    available = field.local_mass(idx, model.neighborhood)
    if available <= 0:
        return None
    if model.engage_compression > 0:
        for c in field.neighborhood(idx, model.neighborhood):
            field.compress(c, rng.uniform(0.0, model.engage_compression))
    c = float(field.compression[idx])
    fill = rng.uniform(*model.fill_range)
    bond = (model.bond_scale * mean_tensile_force(model.ref_strain, c, params)
            * rng.lognormal(0.0, model.bond_spread))
    tearability = rng.lognormal(0.0, model.tearability_spread)
    # the jaws close to the same opening whatever lies beyond them; scarcity only limits the pellet mass
    eng = Engagement(idx, bond, fill, tearability)
    field.engagements[idx] = eng
    return eng


def tear_step(field: MediaField, location, mode: str, grip_force: float, rng: np.random.Generator,
              *, params: ConstitutiveParams = ConstitutiveParams(), model: TearModel = TearModel()) -> TearOutcome:
    """One vertical (limb) or horizontal (wheg) tear on the engaged material."""
    if mode not in ("vertical", "horizontal"):
        raise ValueError(f"unknown tear mode {mode!r}")
    idx = field.cell_index(location)
    if idx is None or field.local_mass(idx, model.neighborhood) <= 0:
        return TearOutcome(0.0, False, empty=True)
    eng = field.engagements.get(idx) or engage(field, location, rng, params=params, model=model)
    if grip_force <= 0:
        return TearOutcome(0.0, False)
    step = model.vertical_strain if mode == "vertical" else model.horizontal_strain
    base = model.vertical_reduction if mode == "vertical" else model.horizontal_reduction
    c = float(field.compression[idx])
    eng.strain += step * eng.tearability / (1.0 + model.compression_hardening * c)
    eng.steps += 1
    resist = sample_tensile_force(min(eng.strain, STRAIN_MAX), c, params, rng)
    slipped = resist > grip_force
    reduction = base * grip_force / (grip_force + resist)
    if slipped:
        reduction *= model.slip_factor
    reduction = min(reduction, eng.bond)
    eng.bond -= reduction
    return TearOutcome(reduction, slipped)


INITIAL_COHESION = 0.2
SQUEEZE_EFFICIENCY = 0.55


def recompact(pellet: Pellet, n_squeezes: int, efficiency: float = SQUEEZE_EFFICIENCY) -> Pellet:
    """Squeeze the pellet in the jaws; cohesion approaches 1 geometrically."""
    if n_squeezes < 0:
        raise ValueError("n_squeezes must be >= 0")
    if n_squeezes == 0:
        return pellet
    cohesion = 1.0 - (1.0 - pellet.cohesion) * (1.0 - efficiency) ** n_squeezes
    return replace(pellet, cohesion=min(1.0, cohesion))


def separate(field: MediaField, location, jaw_volume: float = 12e-6,
             *, model: TearModel = TearModel()) -> Pellet:
    """Pull the engaged material free, removing exactly the pellet mass from ``field``.

    Whatever bond is left at this moment travels with the pellet as
    ``residual_bond``; a positive value is material that is stretched but
    still attached.
    """
    idx = field.cell_index(location)
    if idx is None or field.local_mass(idx, model.neighborhood) <= 0:
        if idx is not None:
            field.engagements.pop(idx, None)
        return Pellet(0.0, 0.0, INITIAL_COHESION, 0.0, idx)
    eng = field.engagements.pop(idx, None)
    if eng is None:
        raise ValueError(f"no tear history at {location}")
    phi_local = field.local_phi(idx, model.neighborhood)
    remaining = phi_local * eng.fill * jaw_volume * STEEL_DENSITY
    taken = []
    for c in field.neighborhood(idx, model.neighborhood):
        if remaining <= 0:
            break
        m = field.mass[c]
        if m <= 0:
            continue
        t = m if m <= remaining else remaining
        field.mass[c] = 0.0 if t == m else m - t
        if field.mass[c] == 0.0:
            field.phi[c] = 0.0
        remaining -= t
        taken.append(t)
    mass = math.fsum(taken)
    pellet = Pellet(mass, mass / (phi_local * STEEL_DENSITY), INITIAL_COHESION, max(eng.bond, 0.0), idx)
    return recompact(pellet, eng.squeezes)


def jaw_angle_after_backoff(eng: Engagement, full_strain: float = 0.25, max_angle: float = 90.0):
    """Jaw opening (deg) left by material still held once the robot backs away."""
    return max_angle * eng.fill * min(1.0, eng.strain / full_strain)

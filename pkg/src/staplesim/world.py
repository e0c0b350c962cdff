"""Arena geometry, the coloured light field, and deposit-pile bookkeeping."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

from .geometry import Rect, wrap_angle
from .media import STEEL_DENSITY, MediaField


class BoundaryClampWarning(UserWarning):
    """A query position outside the arena was clamped onto its boundary."""


@dataclass(frozen=True)
class Arena:
    length: float = 1.8
    width: float = 1.2
    excavation_depth: float = 0.3      # excavation zone spans the full width at x = 0
    deposit_depth: float = 0.4         # strip in front of the deposit wall at x = length
    blue_emitter: tuple = (0.0, 0.6)
    red_emitter: tuple = (1.8, 0.6)
    emitter_falloff: float = 0.5       # m, distance at which intensity halves
    lobe_exponent: float = 4.0
    merge_radius: float = 0.1
    repose_angle_deg: float = 35.0
    pile_volume_fraction: float = 0.1
    seed_pile_mass: float = 0.1
    seed_pile_offset: float = 0.08     # seed pile centre distance from the deposit wall

    @property
    def bounds(self):
        return Rect(0.0, 0.0, self.length, self.width)

    @property
    def excavation_zone(self):
        return Rect(0.0, 0.0, self.excavation_depth, self.width)

    @property
    def deposit_zone(self):
        return Rect(self.length - self.deposit_depth, 0.0, self.length, self.width)

    def emitter(self, channel):
        if channel == "blue":
            return self.blue_emitter
        if channel == "red":
            return self.red_emitter
        raise ValueError(f"unknown light channel {channel!r}")


def light_intensity(arena: Arena, position, heading: float, channel: str) -> float:
    """Directional light reading in [0, 1].

    A raised-cosine lobe about the bearing to the emitter times a Lorentzian
    distance falloff; unimodal in heading at every position.
    """
    x, y = position
    x, y, clamped = arena.bounds.clamp(x, y)
    if clamped:
        warnings.warn(f"position {position} outside arena, clamped to ({x}, {y})", BoundaryClampWarning)
    ex, ey = arena.emitter(channel)
    dx, dy = ex - x, ey - y
    d2 = dx * dx + dy * dy
    delta = wrap_angle(math.atan2(dy, dx) - heading) if d2 > 0 else 0.0
    lobe = (0.5 * (1.0 + math.cos(delta))) ** arena.lobe_exponent
    s2 = arena.emitter_falloff ** 2
    return lobe * s2 / (s2 + d2)


@dataclass
class Pile:
    x: float
    y: float
    mass: float


@dataclass
class DepositMap:
    """Piles of deposited material; ``delivered`` counts only robot deposits."""

    piles: list = field(default_factory=list)
    delivered: float = 0.0
    seed_mass: float = 0.0
    merge_radius: float = 0.1
    repose_angle_deg: float = 35.0
    pile_volume_fraction: float = 0.1

    @classmethod
    def for_arena(cls, arena: Arena, with_seed=True):
        m = cls(merge_radius=arena.merge_radius, repose_angle_deg=arena.repose_angle_deg,
                pile_volume_fraction=arena.pile_volume_fraction)
        if with_seed and arena.seed_pile_mass > 0:
            m.piles.append(Pile(arena.length - arena.seed_pile_offset, arena.width / 2, arena.seed_pile_mass))
            m.seed_mass = arena.seed_pile_mass
        return m

    def total_mass(self):
        return math.fsum(p.mass for p in self.piles)

    def cone(self, pile):
        """Return ``(height, base_radius)`` of a cone at the repose angle holding the pile's mass."""
        if pile.mass <= 0:
            return 0.0, 0.0
        tan_a = math.tan(math.radians(self.repose_angle_deg))
        vol = pile.mass / (self.pile_volume_fraction * STEEL_DENSITY)
        h = (3.0 * vol * tan_a ** 2 / math.pi) ** (1.0 / 3.0)
        return h, h / tan_a

    def nearest(self, position, radius=None):
        x, y = position
        best, best_d = None, math.inf
        for p in self.piles:
            d = math.hypot(p.x - x, p.y - y)
            if d < best_d:
                best, best_d = p, d
        if radius is not None and best_d > radius:
            return None
        return best


def add_deposit(dmap: DepositMap, position, pellet) -> DepositMap:
    """Drop a pellet at ``position``; merges into the nearest pile within the merge radius."""
    if not pellet.mass > 0:
        raise ValueError("deposited pellet must have positive mass")
    target = dmap.nearest(position, dmap.merge_radius)
    if target is None:
        dmap.piles.append(Pile(float(position[0]), float(position[1]), pellet.mass))
    else:
        target.mass += pellet.mass
    dmap.delivered += pellet.mass
    return dmap


def pile_height_at(dmap: DepositMap, position) -> float:
    """Surface height of the tallest cone covering ``position`` (0 if none)."""
    x, y = position
    best = 0.0
    for p in dmap.piles:
        h, r = dmap.cone(p)
        if r <= 0:
            continue
        s = math.hypot(p.x - x, p.y - y)
        if s < r:
            best = max(best, h * (1.0 - s / r))
    return best


@dataclass
class World:
    """Everything the robot can sense or disturb."""

    arena: Arena
    media: MediaField
    deposits: DepositMap
    floor_mass: float = 0.0      # particles shed in transit

    @classmethod
    def create(cls, arena: Arena, media: MediaField, with_seed=True):
        return cls(arena, media, DepositMap.for_arena(arena, with_seed))

    def total_mass(self):
        return math.fsum([self.media.total_mass(), self.deposits.total_mass(), self.floor_mass])

"""Sensor models feeding the controller, plus the synthetic camera and pile detector."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import wrap_angle
from .world import World, light_intensity, pile_height_at

IMAGE_SHAPE = (240, 320)   # rows, columns


@dataclass(frozen=True)
class SensorConfig:
    rgb_sigma: float = 0.0
    range_limit: float = 0.2
    obstacle_height: float = 0.02     # piles lower than this are invisible to the rangefinder
    antenna_reach: float = 0.10
    stuck_ratio: float = 2.0          # commanded/achieved displacement ratio that flags pitching blocked
    stuck_window: int = 10


def rgb_read(pose, world: World, rng: Optional[np.random.Generator], sigma: float = 0.0):
    """Colour sensor reading ``(r, g, b)``; additive Gaussian noise, not clipped."""
    x, y, heading = pose
    r = light_intensity(world.arena, (x, y), heading, "red")
    b = light_intensity(world.arena, (x, y), heading, "blue")
    g = 0.0
    if sigma > 0:
        nr, ng, nb = rng.normal(0.0, sigma, size=3)
        r, g, b = r + nr, g + ng, b + nb
    return r, g, b


def _ray_circle(x, y, ux, uy, cx, cy, rad):
    fx, fy = x - cx, y - cy
    if fx * fx + fy * fy <= rad * rad:
        return 0.0
    b = fx * ux + fy * uy
    c = fx * fx + fy * fy - rad * rad
    disc = b * b - c
    if disc < 0:
        return math.inf
    t = -b - math.sqrt(disc)
    return t if t >= 0 else math.inf


def rangefinder(pose, world: World, limit: float = 0.2, obstacle_height: float = 0.02) -> float:
    """Distance ahead to the nearest wall or sufficiently tall pile, capped at ``limit``."""
    x, y, heading = pose
    ux, uy = math.cos(heading), math.sin(heading)
    a = world.arena
    best = limit
    if ux > 1e-12:
        best = min(best, (a.length - x) / ux)
    elif ux < -1e-12:
        best = min(best, -x / ux)
    if uy > 1e-12:
        best = min(best, (a.width - y) / uy)
    elif uy < -1e-12:
        best = min(best, -y / uy)
    dm = world.deposits
    for p in dm.piles:
        h, r = dm.cone(p)
        if h <= obstacle_height:
            continue
        # the part of the cone taller than the threshold
        rad = r * (1.0 - obstacle_height / h)
        best = min(best, _ray_circle(x, y, ux, uy, p.x, p.y, rad))
    return max(0.0, min(best, limit))


def imu_pitch_blocked(history, ratio: float = 2.0) -> bool:
    """True when commanded displacement exceeds ``ratio`` times the achieved displacement.

    ``history`` holds ``(commanded, achieved)`` pairs for the recent window.
    The comparison is strict, so a ratio exactly at the threshold is not blocked.
    """
    commanded = sum(abs(c) for c, _ in history)
    achieved = sum(abs(a) for _, a in history)
    if commanded <= 0:
        return False
    return commanded > ratio * achieved


def antenna_probe(pose, world: World, reach: float = 0.10) -> float:
    x, y, heading = pose
    return pile_height_at(world.deposits, (x + reach * math.cos(heading), y + reach * math.sin(heading)))


# ---------------------------------------------------------------------------
# camera


@dataclass(frozen=True)
class CameraModel:
    width: int = 320
    height: int = 240
    hfov_deg: float = 60.0
    mount_height: float = 0.10
    strip_heights: tuple = ((0.14, 0.16), (0.02, 0.04))   # LED rows on the deposit wall (m)
    min_range: float = 0.10
    max_range: float = 1.6
    background: int = 110
    shadow: int = 20
    bright: int = 255

    @property
    def focal(self):
        return (self.width / 2.0) / math.tan(math.radians(self.hfov_deg) / 2.0)

    @property
    def cx(self):
        return (self.width - 1) / 2.0

    @property
    def cy(self):
        return (self.height - 1) / 2.0

    def column_of(self, bearing):
        """Image column of a bearing relative to the optical axis (positive = left)."""
        return self.cx - self.focal * math.tan(bearing)

    def bearing_of(self, column):
        return math.atan2(self.cx - column, self.focal)


def _row(cam, z, depth):
    return cam.cy - cam.focal * (z - cam.mount_height) / depth


def render_camera(pose, world: World, cam: CameraModel = CameraModel()) -> np.ndarray:
    """Monochrome 320x240 frame of the deposit wall.

    Each column that sees the deposit wall shows the two LED rows at full
    intensity; piles in view darken a column span between the rows whose
    width scales with base radius over distance.
    """
    x, y, heading = pose
    img = np.full((cam.height, cam.width), cam.background, dtype=np.uint8)
    a = world.arena
    cols = np.arange(cam.width)
    rel = np.arctan2(cam.cx - cols, cam.focal)
    theta = heading + rel
    ct = np.cos(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(ct > 1e-9, (a.length - x) / ct, np.inf)
    yhit = y + dist * np.sin(theta)
    sees_wall = np.isfinite(dist) & (yhit >= 0) & (yhit <= a.width) & (dist <= cam.max_range * 2)
    depth = dist * np.cos(rel)

    (top_lo, top_hi), (bot_lo, bot_hi) = cam.strip_heights
    band = {}
    for j in np.flatnonzero(sees_wall):
        d = depth[j]
        rows = []
        for lo, hi in ((top_lo, top_hi), (bot_lo, bot_hi)):
            r0 = int(math.floor(_row(cam, hi, d)))
            r1 = int(math.ceil(_row(cam, lo, d)))
            r0, r1 = max(r0, 0), min(r1, cam.height - 1)
            if r1 < r0:
                r1 = r0
            img[r0:r1 + 1, j] = cam.bright
            rows.append((r0, r1))
        band[j] = (rows[0][1] + 2, rows[1][0] - 2)   # keep one background row next to each strip

    dm = world.deposits
    for p in dm.piles:
        h, r = dm.cone(p)
        dx, dy = p.x - x, p.y - y
        bearing = wrap_angle(math.atan2(dy, dx) - heading)
        d = math.hypot(dx, dy) * math.cos(bearing)
        if h <= 0 or d < cam.min_range or d > cam.max_range or abs(bearing) >= math.radians(cam.hfov_deg) / 2:
            continue
        c0 = cam.column_of(bearing)
        half = cam.focal * r / d
        j0, j1 = int(math.ceil(c0 - half)), int(math.floor(c0 + half))
        for j in range(max(j0, 0), min(j1, cam.width - 1) + 1):
            if j not in band:
                continue
            lo, hi = band[j]
            if hi < lo:
                continue
            span = hi - lo + 1
            rows_dark = max(1, int(round(span * min(1.0, h / (top_lo - bot_hi)))))
            img[hi - rows_dark + 1:hi + 1, j] = cam.shadow
    return img


@dataclass(frozen=True)
class PileDetection:
    column_groups: list
    chosen: Optional[tuple]

    def to_json(self):
        return {"groups": [list(g) for g in self.column_groups],
                "chosen": list(self.chosen) if self.chosen is not None else None}


def qualifying_columns(img, dark_thresh=64, bright_val=255, min_dark_pixels=1):
    """Boolean mask of columns with enough dark pixels and at least two separate bright runs."""
    img = np.asarray(img)
    dark = (img < dark_thresh).sum(axis=0)
    bright = img == bright_val
    starts = bright[0].astype(int) + (bright[1:] & ~bright[:-1]).sum(axis=0)
    return (dark >= min_dark_pixels) & (starts >= 2)


def detect_piles(img, dark_thresh: int = 64, bright_val: int = 255, min_dark_pixels: int = 1) -> PileDetection:
    """Group qualifying columns into contiguous spans; the widest wins, leftmost on ties."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("expected a 2-D grayscale image")
    q = qualifying_columns(img, dark_thresh, bright_val, min_dark_pixels)
    padded = np.concatenate([[False], q, [False]]).astype(np.int8)
    edges = np.diff(padded)
    lo = np.flatnonzero(edges == 1)
    hi = np.flatnonzero(edges == -1) - 1
    groups = [(int(a), int(b)) for a, b in zip(lo, hi)]
    chosen = None
    if groups:
        widths = hi - lo
        chosen = groups[int(np.argmax(widths))]   # argmax returns the first maximum
    return PileDetection(groups, chosen)


def read_pgm(path) -> np.ndarray:
    from PIL import Image
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_pgm(img, path, metadata: Optional[dict] = None):
    """Binary PGM; ``metadata`` goes into header comments, which readers skip."""
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("expected a 2-D grayscale image")
    head = "P5\n" + "".join(f"# {k}={v}\n" for k, v in (metadata or {}).items())
    head += f"{img.shape[1]} {img.shape[0]}\n255\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(img.tobytes())

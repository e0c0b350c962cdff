"""
The excavating robot: planar pose, maneuver primitives, jaw model, the
excavation procedure and the state machine that strings excavation,
transport and deposition into cycles.

Motion is a unicycle driven by teleported primitives (a displacement taken
over a duration).  Behaviours with a known duration (turns, tearing loops,
antenna sweeps) are queued as timed actions on the robot and complete when
their time has elapsed; free driving states act every ``dt``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import media as md
from .geometry import wrap_angle
from .media import ConstitutiveParams, Pellet, TearModel
from .rng import pick
from .sensors import (CameraModel, SensorConfig, antenna_probe, detect_piles, imu_pitch_blocked,
                      rangefinder, render_camera, rgb_read)
from .world import World, add_deposit


class FsmState(str, Enum):
    TURN_TO_EXCAVATE = "TurnToExcavate"
    APPROACH_EXCAVATE = "ApproachExcavate"
    EXCAVATE = "Excavate"
    JAW_CHECK = "JawCheck"
    TURN_TO_DEPOSIT = "TurnToDeposit"
    TRANSPORT = "Transport"
    ANTENNA_SEARCH = "AntennaSearch"
    DEPOSIT = "Deposit"
    REVERSE = "Reverse"


S = FsmState

LEGAL_EDGES = frozenset({
    (S.TURN_TO_EXCAVATE, S.APPROACH_EXCAVATE),
    (S.APPROACH_EXCAVATE, S.EXCAVATE),
    (S.APPROACH_EXCAVATE, S.REVERSE),
    (S.EXCAVATE, S.JAW_CHECK),
    (S.EXCAVATE, S.REVERSE),
    (S.JAW_CHECK, S.EXCAVATE),
    (S.JAW_CHECK, S.TURN_TO_DEPOSIT),
    (S.JAW_CHECK, S.REVERSE),
    (S.TURN_TO_DEPOSIT, S.TRANSPORT),
    (S.TRANSPORT, S.ANTENNA_SEARCH),
    (S.TRANSPORT, S.REVERSE),
    (S.ANTENNA_SEARCH, S.DEPOSIT),
    (S.DEPOSIT, S.TURN_TO_EXCAVATE),
    (S.REVERSE, S.TURN_TO_EXCAVATE),
    (S.REVERSE, S.TURN_TO_DEPOSIT),
})

CARRY_STATES = frozenset({S.TURN_TO_DEPOSIT, S.TRANSPORT, S.ANTENNA_SEARCH, S.DEPOSIT, S.REVERSE})


class IllegalTransition(RuntimeError):
    pass


@dataclass(frozen=True)
class Primitive:
    displacement: float     # m, or rad for turns
    duration: float         # s
    carry_safe: bool = True

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("primitive duration must be positive")


@dataclass(frozen=True)
class ManeuverSpec:
    wheg_drive: Primitive = Primitive(0.05, 1.25, True)
    crutch: Primitive = Primitive(0.08, 2.5, False)
    sweep: Primitive = Primitive(0.04, 1.9, True)
    turn_left: Primitive = Primitive(math.radians(15.0), 0.5, True)
    turn_right: Primitive = Primitive(-math.radians(15.0), 0.5, True)
    reverse: Primitive = Primitive(-0.10, 2.0, True)

    @property
    def turn_rate(self):
        """rad/s"""
        return abs(self.turn_left.displacement) / self.turn_left.duration


@dataclass(frozen=True)
class JawModel:
    capacity: float = 12e-6          # m^3
    close_threshold: float = 30.0    # deg
    grip_force: float = 10.0         # N

    def __post_init__(self):
        if not self.capacity > 0 or not 0.0 < self.close_threshold < 90.0:
            raise ValueError("invalid jaw model")

    @property
    def success_volume(self):
        return self.capacity / 4.0


@dataclass(frozen=True)
class AgentConfig:
    maneuvers: ManeuverSpec = ManeuverSpec()
    jaw: JawModel = JawModel()
    tear: TearModel = TearModel()
    params: ConstitutiveParams = ConstitutiveParams()
    sensors: SensorConfig = SensorConfig()
    camera: CameraModel = CameraModel()
    # turning
    turn_step_deg: float = 2.0
    turn_tolerance_deg: float = 5.0
    heading_jitter_deg: float = 1.5     # per-primitive heading noise from slip on the floor
    # excavation timings (s)
    sensing_time: float = 14.0
    vertical_tear_time: float = 9.0
    horizontal_tear_time: float = 6.5
    squeeze_time: float = 2.5
    jaw_check_time: float = 5.0
    separation_time: float = 4.0
    final_squeezes: int = 2
    max_excavation_loops: int = 20
    jaw_full_strain: float = 0.25
    contact_mass: float = 2e-3          # kg in the nose cell that counts as touching the mound
    # transport and deposit
    sweep_every: int = 5                # every n-th transport primitive is a carry-safe sweep
    obstacle_stop: float = 0.03         # m, rangefinder distance that triggers reversing
    deposit_stop: float = 0.08
    deposit_height: float = 0.02        # m, antenna height that counts as a pile
    antenna_sweep_deg: float = 25.0
    antenna_time: float = 6.0
    photo_time: float = 2.0
    deposit_time: float = 4.0
    shed_scale: float = 1.0
    reposition_turn_deg: tuple = (45.0, 120.0)
    reposition_drive: float = 0.15


@dataclass
class RobotState:
    x: float
    y: float
    heading: float
    jaw_angle: float = 0.0
    carried: Optional[Pellet] = None
    fsm: FsmState = S.TURN_TO_EXCAVATE
    stuck_window: deque = field(default_factory=lambda: deque(maxlen=10))
    t: float = 0.0
    plan: deque = field(default_factory=deque)
    engagement: Optional[md.Engagement] = None
    engaged_at: Optional[tuple] = None
    loops: int = 0
    resume: FsmState = S.TURN_TO_EXCAVATE
    photo_taken: bool = False
    post_excavation_turn: bool = False
    primitive_count: int = 0
    prim: Optional[Primitive] = None
    prim_left: float = 0.0
    deposit_target: Optional[tuple] = None
    last_excavate_t: float = 0.0

    @property
    def pose(self):
        return (self.x, self.y, self.heading)


# ---------------------------------------------------------------------------
# primitive behaviours


def jaw_check(robot: RobotState, jaw: JawModel = JawModel()) -> bool:
    """Material in the jaws: the angle must strictly exceed the close threshold."""
    return robot.jaw_angle > jaw.close_threshold


def _find_crossing(vals, k0, k1, level):
    """Fractional index in ``[k0, k1]`` where ``vals`` crosses ``level`` (linear interpolation)."""
    a, b = vals[k0], vals[k1]
    if b == a:
        return float(k1)
    return k0 + (level - a) / (b - a) * (k1 - k0)


def turn_until_color_max(heading: float, read: Callable[[float], float], *, step_deg: float = 2.0,
                         sigma: float = 0.0, turn_rate: float = math.radians(30.0),
                         window: Optional[int] = None):
    """Rotate in place until the colour reading rises then falls; return ``(heading, elapsed_s)``.

    Readings are smoothed with a centred moving average.  A peak is accepted
    once the smoothed signal has risen by more than six noise standard
    errors and then fallen back through the half-way level between the
    pre-peak minimum and the peak; the estimate is the centroid of the raw
    readings above that level, weighted by their excess over it.  After one
    full rotation without such a peak the best smoothed heading seen is
    used; a rise still awaiting its fall may extend the turn by half a
    rotation.  All thresholds scale with the observed signal (they are zero when
    ``sigma`` is zero), so the result is unchanged by a positive affine
    rescaling of a noise-free signal.
    """
    step = math.radians(step_deg)
    n_full = int(round(2.0 * math.pi / step))
    if window is None:
        window = 1 if sigma == 0 else 9
    half = window // 2
    rise = 6.0 * sigma / math.sqrt(window)
    raw = []
    sm = []          # smoothed value for sample index (len(raw) - 1 - half)
    lo_val, lo_k = math.inf, -1
    best_val, best_k = -math.inf, 0
    pre_lo = math.inf
    k = 0
    found = None
    while True:
        raw.append(read(heading + k * step))
        if len(raw) >= window:
            j = len(raw) - 1 - half
            v = sum(raw[-window:]) / window
            sm.append(v)
            if v > best_val:
                best_val, best_k = v, j
                pre_lo = lo_val
            if v < lo_val:
                lo_val, lo_k = v, j
            if best_val - pre_lo > rise and best_k < j:
                level = pre_lo + 0.5 * (best_val - pre_lo)
                if v < level:
                    si = len(sm) - 1
                    down = _find_crossing(sm, si - 1, si, level) + half
                    u = best_k - half
                    while u > 0 and sm[u - 1] >= level:
                        u -= 1
                    up = _find_crossing(sm, u - 1, u, level) + half if u > 0 else float(best_k)
                    ks = range(int(math.ceil(up)), int(math.floor(down)) + 1)
                    wts = [max(raw[i] - level, 0.0) for i in ks]
                    tot = sum(wts)
                    found = sum(i * wt for i, wt in zip(ks, wts)) / tot if tot > 0 else 0.5 * (up + down)
                    break
        rising = best_val - pre_lo > rise
        if k >= n_full + half and not (rising and k < n_full + n_full // 2):
            break
        k += 1
    rotated = k * step
    target = found if found is not None else float(best_k)
    back = abs(k - target) * step
    return wrap_angle(heading + target * step), (rotated + back) / turn_rate


def color_reader(robot_xy, world: World, channel: str, rng, sigma: float):
    idx = 2 if channel == "blue" else 0
    rng = pick(rng, "sensors") if rng is not None else None
    x, y = robot_xy
    return lambda h: rgb_read((x, y, h), world, rng, sigma)[idx]


@dataclass(frozen=True)
class ExcavationOutcome:
    pellet: Optional[Pellet]
    cycles: int
    duration: float
    status: str                 # "separated", "aborted" or "no_material"
    jaw_angles: tuple = ()


def excavation_loop(world: World, location, rng, cfg: AgentConfig, *, first: bool):
    """One tearing loop at ``location``: vertical tear, horizontal tear, one squeeze.

    The first loop is preceded by material sensing and a horizontal
    separation pass.  Returns ``(engagement, duration)``; engagement is None
    when there is nothing to grip.
    """
    field_ = world.media
    rng = pick(rng, "media")
    g = cfg.jaw.grip_force
    duration = 0.0
    if first:
        if md.engage(field_, location, rng, jaw_volume=cfg.jaw.capacity, params=cfg.params, model=cfg.tear) is None:
            return None, cfg.sensing_time
        md.tear_step(field_, location, "horizontal", g, rng, params=cfg.params, model=cfg.tear)
        duration += cfg.sensing_time
    idx = field_.cell_index(location)
    eng = field_.engagements.get(idx)
    if eng is None:
        return None, duration
    md.tear_step(field_, location, "vertical", g, rng, params=cfg.params, model=cfg.tear)
    md.tear_step(field_, location, "horizontal", g, rng, params=cfg.params, model=cfg.tear)
    eng.squeezes += 1
    duration += cfg.vertical_tear_time + cfg.horizontal_tear_time + cfg.squeeze_time
    return eng, duration


def finish_separation(world: World, location, cfg: AgentConfig) -> Pellet:
    pellet = md.separate(world.media, location, cfg.jaw.capacity, model=cfg.tear)
    return md.recompact(pellet, cfg.final_squeezes)


def excavation_procedure(robot: RobotState, world: World, rng, cfg: AgentConfig = AgentConfig()) -> ExcavationOutcome:
    """Run tearing loops at the jaw location until the jaw check passes or the loop cap is hit."""
    loc = (robot.x, robot.y)
    total = 0.0
    angles = []
    for n in range(1, cfg.max_excavation_loops + 1):
        eng, dur = excavation_loop(world, loc, rng, cfg, first=(n == 1))
        total += dur
        if eng is None:
            return ExcavationOutcome(None, n - 1, total, "no_material")
        robot.jaw_angle = md.jaw_angle_after_backoff(eng, cfg.jaw_full_strain)
        angles.append(robot.jaw_angle)
        total += cfg.jaw_check_time
        if jaw_check(robot, cfg.jaw):
            pellet = finish_separation(world, loc, cfg)
            return ExcavationOutcome(pellet, n, total + cfg.separation_time, "separated", tuple(angles))
    world.media.engagements.pop(world.media.cell_index(loc), None)
    robot.jaw_angle = 0.0
    return ExcavationOutcome(None, cfg.max_excavation_loops, total, "aborted", tuple(angles))


def post_turn_retention(pellet: Pellet, jaw: JawModel) -> bool:
    """Whether the pellet survives the turn away from the mound.

    Material still bonded to the bulk more strongly than the jaws can grip
    slips out; a weaker bond is torn through by the turn.
    """
    return pellet.residual_bond <= jaw.grip_force and pellet.volume >= jaw.success_volume


# ---------------------------------------------------------------------------
# state machine


def _event(robot, events, name, state_to=None, **extra):
    rec = {"t_s": round(robot.t, 6), "state_from": robot.fsm.value,
           "state_to": (state_to or robot.fsm).value, "event": name}
    rec.update(extra)
    events.append(rec)


def _goto(robot, state, events, name="transition", **extra):
    if (robot.fsm, state) not in LEGAL_EDGES:
        raise IllegalTransition(f"{robot.fsm.value} -> {state.value}")
    _event(robot, events, name, state, **extra)
    robot.fsm = state
    if state is S.EXCAVATE:
        robot.last_excavate_t = robot.t


def _move(robot, world, distance, rng, cfg, jitter=True):
    """Translate along the heading, clamped to the arena; records commanded vs achieved."""
    if jitter and cfg.heading_jitter_deg > 0:
        robot.heading = wrap_angle(robot.heading + pick(rng, "fsm").normal(0.0, math.radians(cfg.heading_jitter_deg))
                                   * math.sqrt(abs(distance) / cfg.maneuvers.wheg_drive.displacement))
    nx = robot.x + distance * math.cos(robot.heading)
    ny = robot.y + distance * math.sin(robot.heading)
    nx, ny, _ = world.arena.bounds.clamp(nx, ny)
    achieved = math.hypot(nx - robot.x, ny - robot.y)
    robot.x, robot.y = nx, ny
    robot.stuck_window.append((abs(distance), achieved))
    return achieved


def _schedule_crutch(robot, events, cfg):
    prim = cfg.maneuvers.crutch

    def done(robot, world, rng):
        _move(robot, world, prim.displacement, rng, cfg, jitter=False)
        robot.stuck_window.clear()
        return []

    _event(robot, events, "crutch")
    robot.plan.append((prim.duration, done))


def _drive(robot, world, dt, rng, cfg, events, choose):
    """Advance the current locomotion primitive by ``dt``; ``choose(n)`` picks the n-th primitive."""
    if robot.prim_left <= 1e-9:
        robot.primitive_count += 1
        robot.prim = choose(robot.primitive_count)
        robot.prim_left = robot.prim.duration
    prim = robot.prim
    _move(robot, world, prim.displacement * dt / prim.duration, rng, cfg)
    robot.prim_left -= dt
    if imu_pitch_blocked(robot.stuck_window, cfg.sensors.stuck_ratio):
        _schedule_crutch(robot, events, cfg)


def _handle_turn(robot, world, dt, rng, cfg, events, channel, next_state):
    read = color_reader((robot.x, robot.y), world, channel, rng, cfg.sensors.rgb_sigma)
    heading, elapsed = turn_until_color_max(robot.heading, read, step_deg=cfg.turn_step_deg,
                                            sigma=cfg.sensors.rgb_sigma, turn_rate=cfg.maneuvers.turn_rate)

    def done(robot, world, rng):
        ev = []
        robot.heading = heading
        if robot.fsm is S.TURN_TO_DEPOSIT and robot.post_excavation_turn:
            robot.post_excavation_turn = False
            _resolve_post_turn(robot, world, cfg, ev)
        _goto(robot, next_state, ev)
        robot.prim_left = 0.0
        if next_state is S.TRANSPORT:
            robot.photo_taken = False
            robot.primitive_count = 0
        return ev

    robot.plan.append((max(elapsed, dt), done))


def _resolve_post_turn(robot, world, cfg, ev):
    p = robot.carried
    if p is None:
        return
    if post_turn_retention(p, cfg.jaw):
        robot.carried = md.replace(p, residual_bond=0.0)
        _event(robot, ev, "excavation_success", pellet_mass_kg=p.mass)
    else:
        # still attached: the material springs back into the mound
        phi = p.mass / (p.volume * md.STEEL_DENSITY) if p.volume > 0 else 0.0
        world.media.add_mass(p.source, p.mass, phi)
        robot.carried = None
        cause = "residual_bond" if p.residual_bond > cfg.jaw.grip_force else "undersized"
        _event(robot, ev, "excavation_failure", pellet_mass_kg=p.mass, residual_bond_N=p.residual_bond, cause=cause)


def _handle_approach(robot, world, dt, rng, cfg, events):
    f = world.media
    idx = f.cell_index((robot.x, robot.y))
    if idx is not None and f.mass[idx] >= cfg.contact_mass:
        robot.loops = 0
        robot.engaged_at = (robot.x, robot.y)
        _goto(robot, S.EXCAVATE, events, "contact")
        return
    if rangefinder(robot.pose, world, cfg.sensors.range_limit, cfg.sensors.obstacle_height) < cfg.obstacle_stop:
        robot.resume = S.TURN_TO_EXCAVATE
        _goto(robot, S.REVERSE, events, "obstacle")
        return
    _drive(robot, world, dt, rng, cfg, events, lambda n: cfg.maneuvers.wheg_drive)


def _handle_excavate(robot, world, dt, rng, cfg, events):
    first = robot.loops == 0
    eng, dur = excavation_loop(world, robot.engaged_at, rng, cfg, first=first)
    if eng is None:
        def empty(robot, world, rng):
            ev = []
            robot.resume = S.TURN_TO_EXCAVATE
            _goto(robot, S.REVERSE, ev, "no_material")
            return ev
        robot.plan.append((max(dur, dt), empty))
        return
    robot.loops += 1
    robot.engagement = eng

    def looped(robot, world, rng):
        ev = []
        robot.jaw_angle = md.jaw_angle_after_backoff(eng, cfg.jaw_full_strain)
        _goto(robot, S.JAW_CHECK, ev, "tear_loop", loop=robot.loops)
        return ev

    robot.plan.append((dur, looped))


def _handle_jaw_check(robot, world, dt, rng, cfg, events):
    def checked(robot, world, rng):
        ev = []
        if jaw_check(robot, cfg.jaw):
            pellet = finish_separation(world, robot.engaged_at, cfg)
            robot.engagement = None
            robot.jaw_angle = 0.0
            if pellet.empty:
                robot.resume = S.TURN_TO_EXCAVATE
                _goto(robot, S.REVERSE, ev, "no_material")
                return ev
            robot.carried = pellet
            robot.post_excavation_turn = True
            _goto(robot, S.TURN_TO_DEPOSIT, ev, "separated", pellet_mass_kg=pellet.mass,
                  residual_bond_N=pellet.residual_bond)
        elif robot.loops >= cfg.max_excavation_loops:
            world.media.engagements.pop(world.media.cell_index(robot.engaged_at), None)
            robot.engagement = None
            robot.jaw_angle = 0.0
            robot.resume = S.TURN_TO_EXCAVATE
            _goto(robot, S.REVERSE, ev, "excavation_abort")
        else:
            _goto(robot, S.EXCAVATE, ev, "jaws_closed")
        return ev

    extra = cfg.separation_time if jaw_check(robot, cfg.jaw) else 0.0
    robot.plan.append((cfg.jaw_check_time + extra, checked))


def _take_photo(robot, world, cfg, events):
    img = render_camera(robot.pose, world, cfg.camera)
    det = detect_piles(img, min_dark_pixels=1)
    robot.photo_taken = True
    if det.chosen is None:
        _event(robot, events, "no_pile_seen")
        return 0.0
    col = 0.5 * (det.chosen[0] + det.chosen[1])
    bearing = cfg.camera.bearing_of(col)
    robot.heading = wrap_angle(robot.heading + bearing)
    _event(robot, events, "pile_sighted", bearing_deg=round(math.degrees(bearing), 3))
    return abs(bearing) / cfg.maneuvers.turn_rate


def _handle_transport(robot, world, dt, rng, cfg, events):
    a = world.arena
    if not robot.photo_taken and a.length - robot.x <= cfg.camera.max_range:
        turn_time = _take_photo(robot, world, cfg, events)
        robot.plan.append((cfg.photo_time + turn_time, lambda r, w, g: []))
        return
    in_zone = a.deposit_zone.contains_point(robot.x, robot.y)
    rng_dist = rangefinder(robot.pose, world, cfg.sensors.range_limit, cfg.sensors.obstacle_height)
    if in_zone and (rng_dist < cfg.deposit_stop
                    or antenna_probe(robot.pose, world, cfg.sensors.antenna_reach) > cfg.deposit_height):
        _goto(robot, S.ANTENNA_SEARCH, events, "deposit_site")
        return
    if not in_zone and rng_dist < cfg.obstacle_stop:
        robot.resume = S.TURN_TO_DEPOSIT
        _goto(robot, S.REVERSE, events, "obstacle")
        return
    m = cfg.maneuvers
    _drive(robot, world, dt, rng, cfg, events,
           lambda n: m.sweep if cfg.sweep_every and n % cfg.sweep_every == 0 else m.wheg_drive)


def _handle_antenna(robot, world, dt, rng, cfg, events):
    best_h, best_pt = -1.0, None
    reach = cfg.sensors.antenna_reach
    for off in (-cfg.antenna_sweep_deg, 0.0, cfg.antenna_sweep_deg):
        h_ = robot.heading + math.radians(off)
        hgt = antenna_probe((robot.x, robot.y, h_), world, reach)
        if hgt > best_h:
            best_h, best_pt = hgt, (robot.x + reach * math.cos(h_), robot.y + reach * math.sin(h_))
    if best_h > cfg.deposit_height:
        target = best_pt
    else:
        target = (robot.x, robot.y)
    target = world.arena.bounds.clamp(*target)[:2]

    def found(robot, world, rng):
        ev = []
        robot.deposit_target = target
        _goto(robot, S.DEPOSIT, ev, "pile_found" if best_h > cfg.deposit_height else "wall_deposit",
              antenna_height_m=round(best_h, 5))
        return ev

    robot.plan.append((cfg.antenna_time, found))


def _shed(pellet, rng, cfg):
    """Particles lost from a pellet on the way; returns (kept pellet or None, shed mass)."""
    frac = min(1.0, (1.0 - pellet.cohesion) * pick(rng, "fsm").exponential(cfg.shed_scale))
    kept_mass = pellet.mass * (1.0 - frac)
    kept_vol = pellet.volume * (1.0 - frac)
    if kept_vol < cfg.jaw.success_volume or kept_mass <= 0:
        return None, pellet.mass
    return md.replace(pellet, mass=kept_mass, volume=kept_vol), pellet.mass - kept_mass


def _handle_deposit(robot, world, dt, rng, cfg, events):
    def put(robot, world, rng):
        ev = []
        p = robot.carried
        mass = 0.0
        if p is not None:
            kept, lost = _shed(p, rng, cfg)
            if lost > 0:
                world.floor_mass += lost
                _event(robot, ev, "pellet_shed", pellet_mass_kg=lost)
            if kept is not None:
                add_deposit(world.deposits, robot.deposit_target, kept)
                mass = kept.mass
        robot.carried = None
        _goto(robot, S.TURN_TO_EXCAVATE, ev, "deposit", pellet_mass_kg=mass)
        return ev

    robot.plan.append((cfg.deposit_time, put))


def _handle_reverse(robot, world, dt, rng, cfg, events):
    rev = cfg.maneuvers.reverse

    def backed(robot, world, rng):
        _move(robot, world, 2 * rev.displacement, rng, cfg, jitter=False)
        return []

    robot.plan.append((2 * rev.duration, backed))
    if robot.resume is S.TURN_TO_EXCAVATE:
        lo, hi = cfg.reposition_turn_deg
        g = pick(rng, "fsm")
        turn = math.radians(g.uniform(lo, hi)) * (1 if g.random() < 0.5 else -1)
        drive = cfg.reposition_drive

        def reposition(robot, world, rng):
            robot.heading = wrap_angle(robot.heading + turn)
            _move(robot, world, drive, rng, cfg, jitter=False)
            return []

        w = cfg.maneuvers.wheg_drive
        robot.plan.append((abs(turn) / cfg.maneuvers.turn_rate + drive / w.displacement * w.duration, reposition))

    def resume(robot, world, rng):
        ev = []
        _goto(robot, robot.resume, ev, "resume")
        return ev

    robot.plan.append((dt, resume))


HANDLERS = {
    S.TURN_TO_EXCAVATE: lambda r, w, dt, g, c, e: _handle_turn(r, w, dt, g, c, e, "blue", S.APPROACH_EXCAVATE),
    S.TURN_TO_DEPOSIT: lambda r, w, dt, g, c, e: _handle_turn(r, w, dt, g, c, e, "red", S.TRANSPORT),
    S.APPROACH_EXCAVATE: _handle_approach,
    S.EXCAVATE: _handle_excavate,
    S.JAW_CHECK: _handle_jaw_check,
    S.TRANSPORT: _handle_transport,
    S.ANTENNA_SEARCH: _handle_antenna,
    S.DEPOSIT: _handle_deposit,
    S.REVERSE: _handle_reverse,
}


def step(robot: RobotState, world: World, dt: float, rng: np.random.Generator,
         cfg: AgentConfig = AgentConfig()) -> list:
    """Advance the robot by ``dt`` seconds; returns the events emitted.

    If a timed action is pending it consumes the time; otherwise the
    current state's behaviour runs (free driving states act for ``dt``,
    others queue a timed action).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    events = []
    robot.t += dt
    if not robot.plan:
        HANDLERS[robot.fsm](robot, world, dt, rng, cfg, events)
        if robot.fsm in (S.APPROACH_EXCAVATE, S.TRANSPORT) and not robot.plan:
            return events
    remaining = dt
    while robot.plan and remaining > 1e-9:
        dur, fn = robot.plan[0]
        if dur > remaining + 1e-9:
            robot.plan[0] = (dur - remaining, fn)
            break
        remaining -= dur
        robot.plan.popleft()
        events.extend(fn(robot, world, rng))
    return events


def transport_and_search(robot: RobotState, world: World, cfg: AgentConfig = AgentConfig(), rng=None):
    """Photograph the deposit wall and pick a heading: the chosen pile, else the red light.

    Returns ``(heading, detection)``.
    """
    img = render_camera(robot.pose, world, cfg.camera)
    det = detect_piles(img)
    if det.chosen is not None:
        col = 0.5 * (det.chosen[0] + det.chosen[1])
        return wrap_angle(robot.heading + cfg.camera.bearing_of(col)), det
    read = color_reader((robot.x, robot.y), world, "red", rng, cfg.sensors.rgb_sigma)
    heading, _ = turn_until_color_max(robot.heading, read, step_deg=cfg.turn_step_deg,
                                      sigma=cfg.sensors.rgb_sigma, turn_rate=cfg.maneuvers.turn_rate)
    return heading, det


def deposit(robot: RobotState, world: World, cfg: AgentConfig = AgentConfig(), rng=None) -> list:
    """Antenna sweep then deposit the carried pellet at the pile found or at the wall (no shedding)."""
    events = []
    if robot.carried is None:
        return events
    best_h, best_pt = 0.0, None
    reach = cfg.sensors.antenna_reach
    for off in (-cfg.antenna_sweep_deg, 0.0, cfg.antenna_sweep_deg):
        h_ = robot.heading + math.radians(off)
        hgt = antenna_probe((robot.x, robot.y, h_), world, reach)
        if hgt > best_h:
            best_h, best_pt = hgt, (robot.x + reach * math.cos(h_), robot.y + reach * math.sin(h_))
    target = best_pt if best_h > cfg.deposit_height else (robot.x, robot.y)
    add_deposit(world.deposits, target, robot.carried)
    _event(robot, events, "deposit", pellet_mass_kg=robot.carried.mass,
           at="pile" if best_h > cfg.deposit_height else "wall")
    robot.carried = None
    return events

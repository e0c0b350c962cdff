"""Layered INI run configuration covering every module knob."""

from __future__ import annotations

import ast
import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .agent import AgentConfig, Primitive
from .harness import HarnessConfig
from .media import ConstitutiveParams
from .rig import RigProtocol
from .world import Arena


class ConfigError(ValueError):
    """Malformed configuration; ``key`` is the ``section.option`` path at fault."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    params_path: str = ""
    params: ConstitutiveParams = ConstitutiveParams()
    arena: Arena = Arena()
    agent: AgentConfig = AgentConfig()
    harness: HarnessConfig = HarnessConfig()
    rig: RigProtocol = RigProtocol()

    def agent_config(self) -> AgentConfig:
        """Agent settings using this run's constitutive parameters."""
        return replace(self.agent, params=self.params)

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name, path in SECTIONS.items():
            obj = _get(self, path)
            cp[name] = {k: _encode(v) for k, v in _scalars(obj, name).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def dump(self, path):
        Path(path).write_text(self.dumps())

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    def metadata(self) -> dict:
        return {"config_hash": self.digest(), "seed": self.seed}


# section name -> attribute path inside RunConfig
SECTIONS = {
    "run": (),
    "constitutive": ("params",),
    "arena": ("arena",),
    "harness": ("harness",),
    "rig": ("rig",),
    "agent": ("agent",),
    "maneuvers": ("agent", "maneuvers"),
    "jaw": ("agent", "jaw"),
    "tear": ("agent", "tear"),
    "sensors": ("agent", "sensors"),
    "camera": ("agent", "camera"),
}


def _get(obj, path):
    for p in path:
        obj = getattr(obj, p)
    return obj


def _set(obj, path, updates):
    if not path:
        return replace(obj, **updates)
    head, rest = path[0], path[1:]
    return replace(obj, **{head: _set(getattr(obj, head), rest, updates)})


def _scalars(obj, section):
    """Options owned by ``section``: fields that are not themselves sections."""
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if is_dataclass(v) and not isinstance(v, Primitive):
            continue
        out[f.name] = v
    return out


def _encode(v):
    if isinstance(v, Primitive):
        return repr((v.displacement, v.duration, v.carry_safe))
    if isinstance(v, str):
        return v
    return repr(v)


def _decode(key, raw, default):
    if isinstance(default, str):
        return raw
    try:
        v = ast.literal_eval(raw.strip())
    except (ValueError, SyntaxError):
        raise ConfigError(key, f"cannot parse {raw!r}") from None
    if isinstance(default, bool):
        if not isinstance(v, bool):
            raise ConfigError(key, f"expected true/false literal, got {raw!r}")
        return v
    if isinstance(default, int):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(key, f"expected an integer, got {raw!r}")
        return v
    if isinstance(default, float):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(key, f"expected a number, got {raw!r}")
        return float(v)
    if isinstance(default, Primitive):
        if not isinstance(v, tuple) or len(v) != 3:
            raise ConfigError(key, "expected (displacement, duration, carry_safe)")
        try:
            return Primitive(float(v[0]), float(v[1]), bool(v[2]))
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    if isinstance(default, tuple):
        if not isinstance(v, (tuple, list)):
            raise ConfigError(key, f"expected a tuple, got {raw!r}")
        return tuple(tuple(x) if isinstance(x, list) else x for x in v)
    raise ConfigError(key, f"unsupported option type {type(default).__name__}")


def apply_text(cfg: RunConfig, text: str, base_dir: Path = Path(".")) -> RunConfig:
    """Overlay one INI document onto ``cfg``; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    for sect in cp.sections():
        if sect not in SECTIONS:
            raise ConfigError(sect, "unknown section")
    # a parameter file is applied first so [constitutive] keys in the same layer still win
    if cp.has_option("run", "params_path"):
        p = cp.get("run", "params_path").strip()
        if p:
            full = Path(p) if Path(p).is_absolute() else base_dir / p
            try:
                cfg = replace(cfg, params=ConstitutiveParams.load(full))
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigError("run.params_path", str(exc)) from None
    for sect in cp.sections():
        path = SECTIONS[sect]
        current = _scalars(_get(cfg, path), sect)
        updates = {}
        for k, raw in cp[sect].items():
            key = f"{sect}.{k}"
            if k not in current:
                raise ConfigError(key, "unknown key")
            updates[k] = _decode(key, raw, current[k])
        if updates:
            try:
                cfg = _set(cfg, path, updates)
            except (TypeError, ValueError) as exc:
                raise ConfigError(sect, str(exc)) from None
    return cfg


def load(*paths, base: RunConfig = RunConfig()) -> RunConfig:
    """Defaults overlaid by each file in order."""
    cfg = base
    for p in paths:
        p = Path(p)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(str(p), exc.strerror or str(exc)) from None
        cfg = apply_text(cfg, text, p.parent)
    return cfg


def loads(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    return apply_text(base, text)

"""Named deterministic random substreams fanned out from one master seed."""

import zlib

import numpy as np

STREAMS = ("media", "sensors", "fsm", "harness", "rig")


def substream(master_seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return a generator keyed on ``(master_seed, name, *extra)``.

    The name is hashed with CRC32 so that adding a new stream never shifts
    the draws of an existing one.
    """
    key = [int(master_seed) & 0xFFFFFFFF, zlib.crc32(name.encode()), *(int(e) for e in extra)]
    return np.random.default_rng(np.random.SeedSequence(key))


class Streams:
    """Per-module generators for one simulation run."""

    def __init__(self, master_seed: int, *extra: int):
        self.seed = int(master_seed)
        self.media = substream(master_seed, "media", *extra)
        self.sensors = substream(master_seed, "sensors", *extra)
        self.fsm = substream(master_seed, "fsm", *extra)
        self.harness = substream(master_seed, "harness", *extra)


def pick(rng, name: str) -> np.random.Generator:
    """The ``name`` stream of a :class:`Streams` bundle, or ``rng`` itself if it is a bare generator."""
    return getattr(rng, name) if isinstance(rng, Streams) else rng

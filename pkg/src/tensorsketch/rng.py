"""Seeded, splittable random streams.

A stream is identified by a master seed and a path of integer substream
indices. Each path maps deterministically to an independent PCG64 generator
through numpy's ``SeedSequence`` spawn keys, so draws never depend on the
order in which streams are created or on thread scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRIAL_OFFSET = 2**32


@dataclass(frozen=True)
class RngStream:
    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def substream(self, k: int) -> "RngStream":
        if k < 0:
            raise ValueError("substream index must be nonnegative")
        return RngStream(self.seed, self.path + (int(k),))

    def trial(self, t: int) -> "RngStream":
        """Substream used by Monte-Carlo trial ``t``."""
        return self.substream(TRIAL_OFFSET + int(t))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))

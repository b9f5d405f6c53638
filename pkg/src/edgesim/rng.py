"""Seeded random substreams keyed by entity name."""

from __future__ import annotations

import hashlib
import math
import random

U64 = (1 << 64) - 1


def _derive(seed: int, name: str) -> int:
    h = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=16)
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Root seed plus lazily created named substreams.

    Each substream is an independent ``random.Random`` whose seed is derived
    from (root seed, name) by a stable hash, so its draw sequence does not
    depend on how other substreams are consumed.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) <= U64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self._subs = {}

    def substream(self, name: str) -> random.Random:
        rng = self._subs.get(name)
        if rng is None:
            rng = self._subs[name] = random.Random(_derive(self.seed, name))
        return rng

    def link(self, link_id: str) -> random.Random:
        return self.substream("link:" + link_id)

    def node(self, node_id: str) -> random.Random:
        return self.substream("node:" + node_id)


def lognormal_mean_cv(rng: random.Random, mean: float, cv: float) -> float:
    """Lognormal draw parameterised by its mean and coefficient of variation."""
    if cv <= 0.0 or mean <= 0.0:
        return mean
    sigma2 = math.log1p(cv * cv)
    return rng.lognormvariate(math.log(mean) - 0.5 * sigma2, math.sqrt(sigma2))

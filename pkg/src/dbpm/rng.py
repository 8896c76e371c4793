"""Seeded random streams.

A master seed is split with :class:`numpy.random.SeedSequence` into one stream
per agent plus one auxiliary stream, each driving a counter-based Philox
generator. Agents pre-draw their per-round randomness in fixed-size chunks, so
the draw sequence depends only on the seed and never on scheduling.
"""

from __future__ import annotations

import numpy as np

CHUNK = 256


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """A fresh seed sequence; spawning from it never advances the caller's object."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    return np.random.SeedSequence(seed)


def make_generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(as_seed_sequence(seed)))


def spawn_streams(seed, n_agents: int) -> tuple[list[np.random.Generator], np.random.Generator]:
    """Per-agent generators and one auxiliary generator (initial conditions)."""
    children = as_seed_sequence(seed).spawn(n_agents + 1)
    return [make_generator(c) for c in children[:n_agents]], make_generator(children[-1])


def derive_seeds(master_seed, count: int) -> list[np.random.SeedSequence]:
    """Independent run seeds for multi-seed averaging."""
    return as_seed_sequence(master_seed).spawn(count)


class AgentStream:
    """Round randomness ``(awake, block, sample)`` of one agent.

    Each refill draws, in order, ``CHUNK`` uniforms for the awake flag,
    ``CHUNK`` block indices and ``CHUNK`` oracle samples. Rounds must be
    requested in increasing order.
    """

    def __init__(self, rng: np.random.Generator, p_on: float, block_probs, draw_samples, chunk: int = CHUNK):
        self.rng = rng
        self.p_on = float(p_on)
        self.block_probs = np.asarray(block_probs, dtype=np.float64)
        self.draw_samples = draw_samples
        self.chunk = chunk
        self._start = None
        self._awake = self._blocks = self._samples = None

    def _refill(self, start: int) -> None:
        k = self.chunk
        self._awake = self.rng.random(k) < self.p_on
        self._blocks = self.rng.choice(self.block_probs.size, size=k, p=self.block_probs)
        self._samples = self.draw_samples(self.rng, k)
        self._start = start

    def draw(self, t: int):
        if self._start is None or t >= self._start + self.chunk:
            if self._start is not None and t != self._start + self.chunk:
                raise ValueError(f"rounds must be drawn in order (asked {t}, next chunk starts at {self._start + self.chunk})")
            if self._start is None and t != 0:
                raise ValueError("the first round drawn must be 0")
            self._refill(t)
        elif t < self._start:
            raise ValueError(f"round {t} was already consumed")
        k = t - self._start
        return bool(self._awake[k]), int(self._blocks[k]), self._samples[k]

    def chunk_arrays(self, t: int):
        """The arrays of the chunk containing ``t`` and the offset of ``t`` in it."""
        self.draw(t)
        return self._awake, self._blocks, self._samples, t - self._start

"""Seeded, replayable random streams and stochastic gradient oracles.

Streams are identified by (seed, path) where the path is a tuple of tags.
Opening a stream mints a fresh ``numpy.random.Generator`` positioned at the
start, so a stream acts as a replayable batch handle: re-opening it and
re-running the same oracle calls reproduces the draws bit for bit, even when
the oracle is evaluated at a different point. Distinct paths hash to
statistically independent generators.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericsError

_MASK64 = (1 << 64) - 1


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    if isinstance(tag, str):
        digest = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise ConfigError(f"stream tags must be int or str, got {type(tag).__name__}")


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible randomness source.

    Identical (seed, path) always produce bitwise-identical draw sequences;
    children with distinct tags are independent.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *tags) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(_tag_to_int(t) for t in tags))

    def generator(self) -> np.random.Generator:
        """Open the stream: a fresh generator at position zero."""
        ss = np.random.SeedSequence([int(self.seed) & _MASK64, *self.path])
        return np.random.default_rng(ss)


@dataclass(frozen=True)
class GradPair:
    """A (possibly noisy) gradient over the joint (x, y) block."""

    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gx", np.asarray(self.gx, dtype=float))
        object.__setattr__(self, "gy", np.asarray(self.gy, dtype=float))

    def concat(self) -> np.ndarray:
        return np.concatenate([self.gx, self.gy])

    def require_finite(self, context: str = "gradient", iteration: int | None = None) -> "GradPair":
        if not (np.all(np.isfinite(self.gx)) and np.all(np.isfinite(self.gy))):
            raise NumericsError(f"non-finite {context}", iteration=iteration)
        return self


# Backwards-friendly alias matching the domain vocabulary.
GradSample = GradPair


def gaussian_grad_oracle(exact_grad: GradPair, sigma: float, gen: np.random.Generator) -> GradPair:
    """Exact gradient plus one N(0, sigma^2 I) perturbation over (gx, gy).

    Each call consumes one fresh noise draw; sigma = 0 returns the exact
    gradient while still consuming the draw, so zero- and nonzero-noise runs
    share the same stream layout.
    """
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    mx, ny = exact_grad.gx.shape[0], exact_grad.gy.shape[0]
    noise = gen.standard_normal(mx + ny)
    if sigma == 0.0:
        return exact_grad
    return GradPair(exact_grad.gx + sigma * noise[:mx], exact_grad.gy + sigma * noise[mx:])


def batch_mean_grad(oracle, x, y, batch: int, gen: np.random.Generator) -> GradPair:
    """Arithmetic mean of `batch` independent oracle draws at (x, y)."""
    if batch < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch}")
    first = oracle(x, y, gen)
    gx, gy = first.gx.copy(), first.gy.copy()
    for _ in range(batch - 1):
        s = oracle(x, y, gen)
        gx += s.gx
        gy += s.gy
    return GradPair(gx / batch, gy / batch)


class SampleCounter:
    """Tallies of stochastic draws consumed, split by oracle family.

    Counts are incremented where batches are drawn, so replaying a batch
    handle (required by the recursive-momentum direction) is not re-counted.
    """

    __slots__ = ("upper", "lower")

    def __init__(self):
        self.upper = 0
        self.lower = 0

    def add_upper(self, k: int):
        self.upper += int(k)

    def add_lower(self, k: int):
        self.lower += int(k)

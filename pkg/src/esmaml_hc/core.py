"""Random streams and perturbation directions.

Every random draw in the package comes from a :class:`SeedSpec`, a
``(master_seed, stream_path)`` pair that is turned into an independent
numpy ``Generator`` through ``SeedSequence`` spawn keys.  Two specs with the
same master seed and path always produce the same draws, no matter in which
order or in which process they are consumed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionError",
    "DegenerateInputError",
    "Role",
    "SeedSpec",
    "as_param",
    "sample_direction",
    "sample_directions",
    "cos_angle",
]


class DimensionError(ValueError):
    """Raised on an invalid or mismatched parameter dimension."""


class DegenerateInputError(ValueError):
    """Raised when an operation receives a zero vector or similar."""


class Role(enum.IntEnum):
    """Role tags appended to stream paths so sibling streams never collide."""

    DIRECTION = 1
    NOISE = 2
    ROLLOUT = 3
    TASK = 4
    ADAPT = 5
    EVAL = 6
    OUTER = 7
    INSTANCE = 8
    ADVERSARY = 9
    START = 10


@dataclass(frozen=True)
class SeedSpec:
    """Address of one deterministic random stream.

    Parameters
    ----------
    master_seed : int
        Non-negative 64-bit experiment seed.
    stream_path : tuple of int
        Path below the master seed, e.g. ``(iteration, candidate, role)``.
    """

    master_seed: int
    stream_path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")
        path = tuple(int(k) for k in self.stream_path)
        if any(k < 0 for k in path):
            raise ValueError(f"stream_path entries must be non-negative, got {path}")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_path", path)

    def child(self, *keys: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.stream_path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.PCG64(ss))


def as_param(theta, dim: int | None = None) -> np.ndarray:
    """Copy ``theta`` into a 1-D float array, checking dimension and finiteness."""
    arr = np.array(theta, dtype=float).reshape(-1)
    if arr.size == 0:
        raise DimensionError("parameter vector must have dimension >= 1")
    if dim is not None and arr.size != dim:
        raise DimensionError(f"expected dimension {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector has non-finite entries")
    return arr


def sample_direction(d: int, normalize: bool, rng: np.random.Generator) -> np.ndarray:
    """Draw one standard Gaussian direction in ``R^d``.

    With ``normalize`` the draw is rescaled to Euclidean norm ``sqrt(d)``;
    a zero draw is rejected and redrawn.
    """
    d = int(d)
    if d < 1:
        raise DimensionError(f"direction dimension must be >= 1, got {d}")
    while True:
        g = rng.standard_normal(d)
        if not normalize:
            return g
        norm = math.sqrt(float(g @ g))
        if norm > 0.0:
            return (g / norm) * math.sqrt(d)


def sample_directions(n: int, d: int, normalize: bool, rng: np.random.Generator) -> np.ndarray:
    """``n`` directions as rows of an ``(n, d)`` array.

    Consumes the stream exactly like ``n`` successive :func:`sample_direction`
    calls, except in the measure-zero event of a zero draw.
    """
    d = int(d)
    if d < 1:
        raise DimensionError(f"direction dimension must be >= 1, got {d}")
    G = rng.standard_normal((int(n), d))
    if not normalize:
        return G
    norms = np.sqrt(np.einsum("ij,ij->i", G, G))
    for i in np.flatnonzero(norms == 0.0):
        G[i] = sample_direction(d, True, rng)
        norms[i] = math.sqrt(d)
    return (G / norms[:, None]) * math.sqrt(d)


def cos_angle(g, v) -> float:
    """Cosine of the angle between two non-zero vectors of equal dimension."""
    g = np.asarray(g, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if g.size != v.size:
        raise DimensionError(f"dimension mismatch: {g.size} vs {v.size}")
    ng = np.linalg.norm(g)
    nv = np.linalg.norm(v)
    if ng == 0.0 or nv == 0.0:
        raise DegenerateInputError("cos_angle is undefined for a zero vector")
    c = float(g @ v) / (ng * nv)
    return min(1.0, max(-1.0, c))

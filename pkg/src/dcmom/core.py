"""Vector helpers, seeded random streams and streaming statistics.

Vectors are plain ``float64`` numpy arrays. Most routines in the package
accept stacked inputs of shape ``(..., d)`` so that independent replicates
can be pushed through the same code path at once.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

__all__ = [
    "DimensionError",
    "InvalidConfig",
    "NumericFailure",
    "RngStream",
    "StatAccumulator",
    "as_vec",
    "axpy",
    "dot",
    "gaussian_vec",
    "norm2",
    "scale",
    "stream_id",
    "sub",
]

Vec = np.ndarray


class DimensionError(ValueError):
    """Raised on an invalid dimension or a length mismatch."""


class InvalidConfig(ValueError):
    """Raised on parameters outside an operation's domain."""


class NumericFailure(ArithmeticError):
    """Raised when an iteration produces non-finite values."""


def as_vec(x) -> Vec:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    return v


def _check_pair(x: Vec, y: Vec) -> None:
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"length mismatch: {x.shape[-1]} vs {y.shape[-1]}")


def axpy(a: float, x, y) -> Vec:
    """Return ``a * x + y``."""
    x, y = as_vec(x), as_vec(y)
    _check_pair(x, y)
    return a * x + y


def dot(x, y):
    x, y = as_vec(x), as_vec(y)
    _check_pair(x, y)
    return np.sum(x * y, axis=-1)


def norm2(x):
    """Squared Euclidean norm over the last axis."""
    x = as_vec(x)
    return np.sum(x * x, axis=-1)


def scale(a: float, x) -> Vec:
    return a * as_vec(x)


def sub(x, y) -> Vec:
    x, y = as_vec(x), as_vec(y)
    _check_pair(x, y)
    return x - y


def stream_id(*parts) -> int:
    """Stable 64-bit id for a tuple of labels (run id, oracle tag, ...).

    ``hash()`` is salted per interpreter, so a cryptographic digest is used to
    keep ids identical across processes.
    """
    text = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class RngStream:
    """A reproducible random stream indexed by ``(seed, stream_id)``.

    Backed by a Philox counter-based generator keyed through
    :class:`numpy.random.SeedSequence`; distinct stream ids give independent
    sequences and the draw order inside a stream is the only mutable state.
    """

    def __init__(self, seed: int, stream: int | str = 0):
        if isinstance(stream, str):
            stream = stream_id(stream)
        self.seed = int(seed) & (2**64 - 1)
        self.stream_id = int(stream) & (2**64 - 1)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def normal(self, shape, sigma: float = 1.0) -> np.ndarray:
        if sigma == 0.0:
            return np.zeros(shape)
        return sigma * self._gen.standard_normal(shape)

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id:#018x})"


def gaussian_vec(rng: RngStream, d: int, sigma: float) -> Vec:
    """``d`` independent Normal(0, sigma^2) samples."""
    if d < 1:
        raise DimensionError(f"dimension must be positive, got {d}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    return rng.normal((d,), sigma)


class StatAccumulator:
    """Running mean and variance (Welford / Chan merge), elementwise.

    Values may be scalars or arrays of a fixed shape; ``push_many`` folds a
    whole batch along axis 0 in one step.
    """

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        self.count += 1
        delta = value - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (value - self.mean)

    def push_many(self, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        n = values.shape[0]
        if n == 0:
            return
        b_mean = values.mean(axis=0)
        b_m2 = ((values - b_mean) ** 2).sum(axis=0)
        total = self.count + n
        delta = b_mean - self.mean
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + b_m2 + delta**2 * (self.count * n / total)
        self.count = total

    @property
    def variance(self):
        """Unbiased sample variance (nan below two samples)."""
        if self.count < 2:
            return np.full(np.shape(self.mean), math.nan) if np.ndim(self.mean) else math.nan
        return self.m2 / (self.count - 1)

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.count)

"""Deterministic dense-matrix kernels, activations, and seeded randomness.

Everything downstream (autoencoder training, synthetic data, tree
learners) draws its randomness from :class:`Rng`, a keyed counter-based
generator, so that a single 64-bit seed reproduces every artifact
bit-for-bit across runs and platforms.  Matrices are plain C-contiguous
float64 2-D numpy arrays; matrix products go through numpy/BLAS.
"""

from __future__ import annotations

import math

import numpy as np

Matrix = np.ndarray

ACTIVATIONS = ("sigmoid", "relu", "tanh", "identity")

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


class DimensionMismatch(ValueError):
    """Operand shapes are incompatible."""


class InvalidProbability(ValueError):
    """Probability argument outside [0, 1]."""


# ---------------------------------------------------------------------------
# Seeded randomness
# ---------------------------------------------------------------------------

def _mix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer (pure-Python, masked)."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return x


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(seed: int, label: str) -> int:
    """Derive an independent child seed from a root seed and a stage label.

    Used so that every pipeline stage ("split", "train", ...) gets its own
    stream while remaining a pure function of the root seed.
    """
    return _mix64(_mix64(seed) ^ _fnv1a64(label))


class Rng:
    """Counter-based SplitMix64 generator.

    The i-th 64-bit output is ``mix64(key + i * GAMMA)`` where
    ``key = mix64(seed)``; the only mutable state is the draw counter.
    This makes the stream identical whether values are drawn one at a
    time (the pure-Python Gibbs kernel), in vectorized blocks (numpy), or
    inside the compiled kernel, and lets a kernel consume a block of
    draws that the Python side can skip past exactly.
    """

    def __init__(self, seed: int):
        self._seed = int(seed)
        self.key = _mix64(self._seed)
        self.counter = 0

    def child(self, label: str) -> "Rng":
        """Independent generator for a named sub-stream."""
        return Rng(derive_seed(self._seed, label))

    def consume(self, n_draws: int) -> tuple[int, int]:
        """Reserve ``n_draws`` outputs for an external kernel.

        Returns ``(key, counter_before)``; the kernel computes draws
        ``counter_before+1 .. counter_before+n_draws`` itself.
        """
        start = self.counter
        self.counter += int(n_draws)
        return self.key, start

    def next_u64(self) -> int:
        self.counter += 1
        return _mix64(self.key + self.counter * _GAMMA)

    def u64(self, n: int) -> np.ndarray:
        counters = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += int(n)
        x = np.uint64(self.key) + counters * np.uint64(_GAMMA)
        x ^= x >> np.uint64(30)
        x *= np.uint64(_MIX1)
        x ^= x >> np.uint64(27)
        x *= np.uint64(_MIX2)
        x ^= x >> np.uint64(31)
        return x

    def uniform(self, shape) -> np.ndarray:
        """Uniform draws in [0, 1) with full 53-bit resolution."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self.u64(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u.reshape(shape)

    def normal(self, shape) -> np.ndarray:
        """Standard-normal draws via Box-Muller on the uniform stream.

        Consumes 2*ceil(n/2) uniforms per call regardless of parity.
        """
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        half = (n + 1) // 2
        u1 = self.uniform(half)
        u2 = self.uniform(half)
        r = np.sqrt(-2.0 * np.log1p(-u1))  # log(1-u1) is finite for u1 in [0,1)
        theta = (2.0 * math.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic random permutation of range(n)."""
        return np.argsort(self.uniform(n), kind="stable")

    def integers(self, n: int, high: int) -> np.ndarray:
        """n draws uniform over {0, ..., high-1} (for bootstrap resampling)."""
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)


def gaussian(rng: Rng, rows: int, cols: int) -> Matrix:
    """Matrix of i.i.d. standard-normal draws; advances the generator."""
    return rng.normal((rows, cols))


def bernoulli_mask(rng: Rng, rows: int, cols: int, p: float) -> Matrix:
    """0/1 matrix where each entry is 1 with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidProbability(f"p must lie in [0, 1], got {p}")
    return (rng.uniform((rows, cols)) < p).astype(np.float64)


# ---------------------------------------------------------------------------
# Dense kernels
# ---------------------------------------------------------------------------

def as_matrix(x) -> Matrix:
    """Coerce to a C-contiguous float64 2-D array."""
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionMismatch(
            f"cannot multiply {a.shape} by {b.shape}: inner dimensions differ"
        )
    return a @ b


def activate(m: Matrix, kind: str) -> Matrix:
    """Element-wise activation. ``identity`` returns the input unchanged."""
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-m))
    if kind == "relu":
        return np.maximum(m, 0.0)
    if kind == "tanh":
        return np.tanh(m)
    if kind == "identity":
        return m
    raise ValueError(f"unknown activation kind {kind!r}")


def activation_derivative(kind: str, pre_activation: Matrix) -> Matrix:
    """Element-wise derivative evaluated at the pre-activation value.

    The ReLU derivative at exactly 0 is defined as 0 (subgradient choice);
    gradient checks must stay away from that kink.
    """
    z = pre_activation
    if kind == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s)
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation kind {kind!r}")

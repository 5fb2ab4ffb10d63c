"""Dense vector helpers and the seeded random source shared by every stage.

Vectors and matrices are plain ``float64`` numpy arrays. The helpers here add
the dimension and finiteness checks the rest of the package relies on.
"""

from __future__ import annotations

import numpy as np

L2 = "L2"
LINF = "Linf"
NORMS = (L2, LINF)


def as_vector(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    return v


def as_matrix(values) -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf")
    return m


def matvec(m, v) -> np.ndarray:
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {m.shape} vs vector ({v.shape[0]},)")
    return m @ v


def norm(v, order: str = L2) -> float:
    """L2 (Euclidean) or Linf (max absolute component) norm."""
    v = np.asarray(v, dtype=np.float64)
    if order == L2:
        scale = float(np.max(np.abs(v))) if v.size else 0.0
        if scale == 0.0:
            return 0.0
        # rescale first so tiny or huge components neither underflow nor overflow
        u = v / scale
        return scale * float(np.sqrt(np.dot(u, u)))
    if order == LINF:
        return float(np.max(np.abs(v))) if v.size else 0.0
    raise ValueError(f"unknown norm order {order!r}; expected one of {NORMS}")


def sign(v) -> np.ndarray:
    # np.sign already maps 0 -> 0
    return np.sign(np.asarray(v, dtype=np.float64))


class Rng:
    """Seeded random stream backed by the Philox-4x64 counter-based generator.

    Philox (Salmon et al., 2011) uses the fixed round constants
    ``0xD2E7470EE14C6C93``/``0xCA5A826395121157`` (multipliers) and
    ``0x9E3779B97F4A7C15``/``0xBB67AE8584CAA73B`` (Weyl key increments), so a
    given seed yields the same stream on every platform. The seed is expanded
    into a Philox key through numpy's ``SeedSequence``.

    Child streams for parallel or per-task work come from :meth:`child`, which
    mixes the parent seed with integer task keys; they never depend on how
    much of the parent stream has been consumed.
    """

    def __init__(self, seed: int = 0, _keys: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in _keys)
        ss = np.random.SeedSequence([self.seed, *self.keys])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, *keys: int) -> "Rng":
        return Rng(self.seed, self.keys + tuple(keys))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def choice(self, n, size, replace=True):
        return self.generator.choice(n, size=size, replace=replace)

    def __repr__(self):
        return f"Rng(seed={self.seed}, keys={self.keys})"

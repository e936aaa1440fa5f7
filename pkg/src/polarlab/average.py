"""Average behavior over a uniformly random nonsingular kernel.

The conditional erasure probability given ``s`` erasures reduces to the
probability that a uniform ``(ell-s)``-dimensional subspace of F2^ell misses
``E_i \\ E_{i-1}``.  Counting subspaces by ``t = dim(A ∩ E_{i-1})`` gives

    p_{i|s} = [ell, ell-s]^{-1} * sum_t [i-1, t] * prod_j (2^ell - 2^(i+j)) / (2^(ell-s) - 2^(t+j))

with ``max(i-s, 0) <= t <= min(ell-s, i-1)`` and ``0 <= j < ell-s-t``.  All
products are summed as log2 terms; Gaussian binomials reach 2^1000 at
ell = 64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

_LN2 = math.log(2.0)


MAX_DIM = 4096

# log2(2^a - 2^b) = b + log2(2^(a-b) - 1); products of these split into an exact
# integer exponent plus differences of _P[x] = sum_{k=1..x} log2(1 - 2^-k), which
# stays above -2.5, so nothing large is ever summed
_P = np.concatenate(([0.0], np.cumsum(np.log1p(-np.exp2(-np.arange(1.0, MAX_DIM + 1))) / _LN2)))


def gaussian_binomial(n: int, k: int) -> int:
    """Number of ``k``-dimensional subspaces of F2^n (exact integer)."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    num = den = 1
    for j in range(k):
        num *= 2**n - 2**j
        den *= 2**k - 2**j
    return num // den


@lru_cache(maxsize=None)
def gaussian_binomial_log2(n: int, k: int) -> float:
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    if n > MAX_DIM:
        raise ValueError(f"dimension {n} above {MAX_DIM}")
    return float(_gb_log2(n, k))


def _gb_log2(n, k):
    return k * (n - k) + _P[n] - _P[n - k] - _P[k]


def _log2_gamma(ell: int, s: int, i: int, t: np.ndarray) -> np.ndarray:
    """log2 of ``[i-1, t] * prod_j (2^ell - 2^(i+j)) / (2^(ell-s) - 2^(t+j))``, vectorized over ``t``."""
    n = ell - s - t
    return _gb_log2(i - 1, t) + s * n + _P[ell - i] - _P[ell - i - n] - _P[n]


def _t_range(ell: int, i: int, s: int) -> range:
    return range(max(i - s, 0), min(ell - s, i - 1) + 1)


def _check(ell: int, i: int, s: int) -> None:
    if not 1 <= i <= ell:
        raise IndexError(f"bit index {i} outside [1, {ell}]")
    if not 0 <= s <= ell:
        raise ValueError(f"erasure count {s} outside [0, {ell}]")
    if ell > MAX_DIM:
        raise ValueError(f"kernel size {ell} above {MAX_DIM}")


@lru_cache(maxsize=None)
def _p_direct(ell: int, i: int, s: int) -> float:
    ts = _t_range(ell, i, s)
    if len(ts) == 0:
        # only s = 0 empties the range: the full space always meets E_i \ E_{i-1}
        assert s == 0
        return 0.0
    terms = _log2_gamma(ell, s, i, np.arange(ts.start, ts.stop))
    top = terms.max()
    log2_sum = top + math.log2(np.exp2(terms - top).sum())
    return float(min(1.0, 2.0 ** (log2_sum - gaussian_binomial_log2(ell, ell - s))))


def p_given_s(ell: int, i: int, s: int) -> float:
    """Average conditional erasure probability of ``u_i`` given ``s`` erasures.

    Passing to the orthogonal complement with reversed coordinates gives
    ``p_{i|s} = 1 - p_{ell+1-i | ell-s}``; the smaller side is summed in log2
    so values near 1 keep their full relative accuracy in ``1 - p``.
    """
    _check(ell, i, s)
    p = _p_direct(ell, i, s)
    if p <= 0.5:
        return p
    return 1.0 - _p_direct(ell, ell + 1 - i, ell - s)


def p_given_s_exact(ell: int, i: int, s: int) -> Fraction:
    """Rational evaluation of the same closed form with integer arithmetic."""
    _check(ell, i, s)
    total = Fraction(0)
    for t in _t_range(ell, i, s):
        term = Fraction(gaussian_binomial(i - 1, t))
        for j in range(ell - s - t):
            term *= Fraction(2**ell - 2 ** (i + j), 2 ** (ell - s) - 2 ** (t + j))
        total += term
    return total / gaussian_binomial(ell, ell - s)


@dataclass(frozen=True)
class AvgConditionalTable:
    ell: int
    p: np.ndarray  # p[i-1, s]

    @classmethod
    def build(cls, ell: int) -> "AvgConditionalTable":
        p = np.array([[p_given_s(ell, i, s) for s in range(ell + 1)] for i in range(1, ell + 1)])
        p.setflags(write=False)
        return cls(ell, p)

    def to_csv(self) -> str:
        lines = ["i,s,p"]
        for i in range(self.ell):
            for s in range(self.ell + 1):
                lines.append(f"{i + 1},{s},{self.p[i, s]!r}")
        return "\n".join(lines) + "\n"


@lru_cache(maxsize=None)
def avg_table(ell: int) -> AvgConditionalTable:
    return AvgConditionalTable.build(ell)


def _binom_pmf(ell: int, z: np.ndarray) -> np.ndarray:
    s = np.arange(ell + 1)
    logc = gammaln(ell + 1) - gammaln(s + 1) - gammaln(ell - s + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lz = np.where(s == 0, 0.0, s * np.log(z[:, None]))
        lzc = np.where(s == ell, 0.0, (ell - s) * np.log1p(-z[:, None]))
    return np.exp(logc + lz + lzc)


def avg_F(ell: int, i: int, z):
    """Average erasure probability ``F_i(z)``; vectorized over ``z``."""
    _check(ell, i, 0)
    za = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any((za < 0) | (za > 1)):
        raise ValueError("z must lie in [0, 1]")
    out = _binom_pmf(ell, za) @ avg_table(ell).p[i - 1]
    return float(out[0]) if np.ndim(z) == 0 else out


# bounds ---------------------------------------------------------------------


def bound_p_lower(ell: int, i: int, s: int) -> float:
    """``1 - 2^{-(s-i)}`` clamped to [0, 1]; vacuous (0) when ``s <= i``."""
    _check(ell, i, s)
    return max(0.0, 1.0 - 2.0 ** (-(s - i)))


def bound_p_upper(ell: int, i: int, s: int) -> float:
    """``2 (2/3)^{i-s-1}`` clamped to [0, 1]; vacuous (1) when ``s >= i-1``."""
    _check(ell, i, s)
    return min(1.0, 2.0 * (2.0 / 3.0) ** (i - s - 1))


@dataclass(frozen=True)
class BoundSpec:
    beta: float
    delta: float

    def __post_init__(self):
        if self.beta <= 0 or self.delta <= 0:
            raise ValueError("beta and delta must be positive")

    def g_of_delta(self, ell: int) -> int:
        return math.floor((self.delta * math.log2(ell) + math.log2(6)) / (math.log2(3) - 1))


@dataclass(frozen=True)
class FBound:
    side: str | None  # "lower", "upper" or None inside the transition window
    bound: float
    applicable: bool


def bound_window(ell: int, i: int, spec: BoundSpec) -> tuple[float, float]:
    """``(z_hi, z_lo)``: the lower bound needs ``z > z_hi``, the upper bound ``z < z_lo``."""
    hoeffding = math.sqrt(spec.beta * math.log(ell) / (2 * ell))
    z_hi = i / ell + math.ceil(spec.delta * math.log2(ell)) / ell + hoeffding
    z_lo = i / ell - spec.g_of_delta(ell) / ell - hoeffding
    return z_hi, z_lo


def bound_F(ell: int, i: int, z: float, spec: BoundSpec) -> FBound:
    """Which (if either) average-erasure bound applies at ``(i, z)``, and its value.

    Above the window ``F_i(z) > (1 - ell^-beta)(1 - ell^-delta)``; below it
    ``F_i(z) < ell^-beta + ell^-delta``.
    """
    _check(ell, i, 0)
    if not 0.0 < z < 1.0:
        raise ValueError("z must lie in (0, 1)")
    z_hi, z_lo = bound_window(ell, i, spec)
    if z > z_hi:
        return FBound("lower", (1 - ell**-spec.beta) * (1 - ell**-spec.delta), True)
    if z < z_lo:
        return FBound("upper", ell**-spec.beta + ell**-spec.delta, True)
    return FBound(None, float("nan"), False)

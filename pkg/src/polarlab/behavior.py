"""Polarization behavior of a fixed kernel over the erasure channel.

For an erasure pattern on the kernel outputs, bit ``u_i`` is recoverable by
successive cancellation iff the span of the unerased columns meets
``E_i \\ E_{i-1}``.  With the span in highest-bit echelon form this is the
statement "row ``i-1`` is a pivot row", so one elimination per pattern
yields the whole undecodable set (it always has exactly ``s`` elements for a
nonsingular kernel and ``s`` erasures).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .gf2 import BitMatrix, Seed, as_seed, is_polarizing, rank

EXACT_CAP = 24
_LOG_DOMAIN_ABOVE = 40


@dataclass(frozen=True)
class Kernel:
    matrix: BitMatrix
    polarizing: bool = field(init=False)

    def __post_init__(self):
        m = self.matrix
        if m.rows != m.cols:
            raise ValueError("kernel must be square")
        if m.rows > 64:
            raise ValueError("kernel size is capped at 64")
        if rank(m) != m.rows:
            raise ValueError("kernel must be nonsingular")
        object.__setattr__(self, "polarizing", m.rows >= 2 and is_polarizing(m))

    @property
    def ell(self) -> int:
        return self.matrix.rows

    @property
    def kernel_id(self) -> str:
        return self.matrix.digest()

    def column_words(self) -> np.ndarray:
        return np.array(self.matrix.column_ints(), dtype=np.uint64)


def as_kernel(k: Kernel | BitMatrix) -> Kernel:
    return k if isinstance(k, Kernel) else Kernel(k)


# numba kernels -------------------------------------------------------------


@njit(cache=True)
def _insert(basis, v, ell):
    """Insert ``v`` into a highest-bit basis; return the new pivot bit or -1."""
    one = np.uint64(1)
    for h in range(ell - 1, -1, -1):
        if (v >> np.uint64(h)) & one:
            b = basis[h]
            if b == 0:
                basis[h] = v
                return h
            v ^= b
    return -1


@njit(cache=True)
def _exact_counts(cols, ell):
    """Tally undecodable indices per weight over all 2**ell erasure patterns.

    Patterns are walked in counting order with column ``j`` tied to counter
    bit ``ell-1-j``, so consecutive patterns share a prefix of column
    decisions and only the changed suffix is re-eliminated.
    """
    counts = np.zeros((ell, ell + 1), dtype=np.uint64)
    basis = np.zeros((ell + 1, ell), dtype=np.uint64)
    leads = np.zeros(ell + 1, dtype=np.uint64)
    one = np.uint64(1)
    total = 1 << ell
    for p in range(total):
        if p == 0:
            start = 0
        else:
            tz = 0
            while not (p >> tz) & 1:
                tz += 1
            start = ell - 1 - tz
        for d in range(start, ell):
            for b in range(ell):
                basis[d + 1, b] = basis[d, b]
            leads[d + 1] = leads[d]
            erased = (p >> (ell - 1 - d)) & 1
            if not erased:
                h = _insert(basis[d + 1], cols[d], ell)
                if h >= 0:
                    leads[d + 1] |= one << np.uint64(h)
        s = 0
        q = p
        while q:
            s += q & 1
            q >>= 1
        dec = leads[ell]
        for i in range(ell):
            if not (dec >> np.uint64(i)) & one:
                counts[i, s] += one
    return counts


@njit(cache=True)
def _decodable_masks(cols, ell, erased_masks):
    """Pivot-row mask (= decodable index set) for each erasure mask."""
    out = np.zeros(erased_masks.shape[0], dtype=np.uint64)
    basis = np.zeros(ell, dtype=np.uint64)
    one = np.uint64(1)
    for t in range(erased_masks.shape[0]):
        e = erased_masks[t]
        for b in range(ell):
            basis[b] = 0
        dec = np.uint64(0)
        for j in range(ell):
            if not (e >> np.uint64(j)) & one:
                h = _insert(basis, cols[j], ell)
                if h >= 0:
                    dec |= one << np.uint64(h)
        out[t] = dec
    return out


@njit(cache=True)
def _tally_undecodable(dec_masks, ell):
    tally = np.zeros(ell, dtype=np.uint64)
    one = np.uint64(1)
    for t in range(dec_masks.shape[0]):
        d = dec_masks[t]
        for i in range(ell):
            if not (d >> np.uint64(i)) & one:
                tally[i] += one
    return tally


# public API ---------------------------------------------------------------


def _pattern_mask(pattern, ell: int) -> int:
    if isinstance(pattern, (int, np.integer)):
        mask = int(pattern)
    else:
        mask = 0
        for j in pattern:
            if not 1 <= j <= ell:
                raise IndexError(f"erased position {j} outside [1, {ell}]")
            mask |= 1 << (j - 1)
    if mask >> ell:
        raise ValueError("erasure mask has bits beyond the kernel size")
    return mask


def decodable_set(k: Kernel | BitMatrix, pattern) -> int:
    """Bitmask of decodable indices (bit ``i-1`` for ``u_i``).

    ``pattern`` is either an int mask (bit ``j-1`` = output ``j`` erased) or
    an iterable of 1-based erased output positions.
    """
    k = as_kernel(k)
    mask = _pattern_mask(pattern, k.ell)
    arr = np.array([mask], dtype=np.uint64)
    return int(_decodable_masks(k.column_words(), k.ell, arr)[0])


def is_decodable(k: Kernel | BitMatrix, i: int, pattern) -> bool:
    k = as_kernel(k)
    if not 1 <= i <= k.ell:
        raise IndexError(f"bit index {i} outside [1, {k.ell}]")
    return bool((decodable_set(k, pattern) >> (i - 1)) & 1)


def all_decodable_sets(k: Kernel | BitMatrix) -> np.ndarray:
    """Decodable mask for every erasure mask ``0 .. 2**ell - 1`` (indexed by mask)."""
    k = as_kernel(k)
    if k.ell > 20:
        raise ValueError("per-pattern table limited to ell <= 20")
    masks = np.arange(1 << k.ell, dtype=np.uint64)
    return _decodable_masks(k.column_words(), k.ell, masks)


@dataclass(frozen=True)
class PolarizationBehavior:
    """Per-kernel table of undecodable-pattern tallies.

    ``counts[i-1, s]`` counts weight-``s`` patterns that leave ``u_i``
    undecodable among ``totals[s]`` patterns examined.  In exact mode
    ``totals[s] = C(ell, s)``; in Monte-Carlo mode some strata are sampled.
    """

    ell: int
    counts: np.ndarray
    totals: np.ndarray
    mode: str = "exact"
    samples_per_weight: int | None = None
    kernel_id: str = ""

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.uint64)
        t = np.asarray(self.totals, dtype=np.uint64)
        if c.shape != (self.ell, self.ell + 1) or t.shape != (self.ell + 1,):
            raise ValueError("count table has the wrong shape")
        if np.any(c > t[None, :]):
            raise ValueError("count exceeds the number of examined patterns")
        c.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "totals", t)

    @property
    def q(self) -> np.ndarray:
        """Conditional erasure probabilities ``q[i-1, s]``."""
        return self.counts.astype(float) / self.totals.astype(float)[None, :]

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        """``(W, Wc)`` with ``f_i(z) = sum_s W[s, i] z^s (1-z)^(ell-s)``; ``Wc`` for ``1 - f_i``."""
        binoms = np.array([comb(self.ell, s) for s in range(self.ell + 1)], dtype=float)
        if self.mode == "exact":
            w = self.counts.T.astype(float)
            wc = binoms[:, None] - w
        else:
            q = self.q.T
            w = binoms[:, None] * q
            wc = binoms[:, None] * (1.0 - q)
        return w, wc

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["i", "s", "count", "total_patterns", "mode"])
        for i in range(self.ell):
            for s in range(self.ell + 1):
                wr.writerow([i + 1, s, int(self.counts[i, s]), int(self.totals[s]), self.mode])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, kernel_id: str = "") -> "PolarizationBehavior":
        rows = list(csv.DictReader(io.StringIO(text)))
        ell = max(int(r["i"]) for r in rows)
        counts = np.zeros((ell, ell + 1), dtype=np.uint64)
        totals = np.zeros(ell + 1, dtype=np.uint64)
        for r in rows:
            i, s = int(r["i"]), int(r["s"])
            counts[i - 1, s] = int(r["count"])
            totals[s] = int(r["total_patterns"])
        mode = rows[0]["mode"]
        return cls(ell, counts, totals, mode=mode, kernel_id=kernel_id)


def exact_behavior(k: Kernel | BitMatrix, cap: int = EXACT_CAP) -> PolarizationBehavior:
    k = as_kernel(k)
    if k.ell > cap:
        raise ValueError(
            f"exact enumeration of 2^{k.ell} patterns exceeds the cap ({cap}); use mc_behavior"
        )
    counts = _exact_counts(k.column_words(), k.ell)
    totals = np.array([comb(k.ell, s) for s in range(k.ell + 1)], dtype=np.uint64)
    return PolarizationBehavior(k.ell, counts, totals, "exact", None, k.kernel_id)


def _weight_patterns(ell: int, s: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Erasure masks of weight ``s``: all of them when they fit the budget, else a uniform sample."""
    bits = np.uint64(1) << np.arange(ell, dtype=np.uint64)
    if comb(ell, s) <= samples:
        return np.array(
            [int(np.bitwise_or.reduce(bits[list(c)], initial=np.uint64(0))) for c in combinations(range(ell), s)],
            dtype=np.uint64,
        )
    order = np.argsort(rng.random((samples, ell)), axis=1)[:, :s]
    return np.bitwise_or.reduce(bits[order], axis=1)


def mc_behavior(k: Kernel | BitMatrix, samples_per_weight: int, seed: Seed | int) -> PolarizationBehavior:
    """Weight-stratified estimate of the behavior table.

    Strata with at most ``samples_per_weight`` patterns are enumerated
    exactly; the rest draw that many uniform weight-``s`` patterns from a
    generator derived from ``(seed, s)``.
    """
    if samples_per_weight < 1:
        raise ValueError("samples_per_weight must be positive")
    k = as_kernel(k)
    seed = as_seed(seed)
    ell, cols = k.ell, k.column_words()
    counts = np.zeros((ell, ell + 1), dtype=np.uint64)
    totals = np.zeros(ell + 1, dtype=np.uint64)
    for s in range(ell + 1):
        masks = _weight_patterns(ell, s, samples_per_weight, seed.derive(s).rng())
        dec = _decodable_masks(cols, ell, masks)
        counts[:, s] = _tally_undecodable(dec, ell)
        totals[s] = masks.shape[0]
    return PolarizationBehavior(ell, counts, totals, "mc", samples_per_weight, k.kernel_id)


def behavior(k: Kernel | BitMatrix, samples_per_weight: int = 10_000, seed: Seed | int = 0,
             cap: int = EXACT_CAP) -> PolarizationBehavior:
    """Exact table when enumeration fits under ``cap``, Monte-Carlo otherwise."""
    k = as_kernel(k)
    if k.ell <= cap:
        return exact_behavior(k, cap)
    return mc_behavior(k, samples_per_weight, seed)


# evaluation ----------------------------------------------------------------


def f_pair(b: PolarizationBehavior, z, zc=None) -> tuple[np.ndarray, np.ndarray]:
    """All ``f_i(z)`` and ``1 - f_i(z)`` as arrays of shape ``(len(z), ell)``.

    ``zc`` may carry ``1 - z`` explicitly so points very close to 1 keep
    their precision.  The complement comes from complementary counts rather
    than ``1 - f``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zc = 1.0 - z if zc is None else np.atleast_1d(np.asarray(zc, dtype=float))
    if np.any(z < 0) or np.any(zc < 0):
        raise ValueError("z must lie in [0, 1]")
    w, wc = b.weights()
    ell = b.ell
    s = np.arange(ell + 1)
    if ell <= _LOG_DOMAIN_ABOVE:
        basis = z[:, None] ** s[None, :] * zc[:, None] ** (ell - s)[None, :]
        return basis @ w, basis @ wc
    with np.errstate(divide="ignore", invalid="ignore"):
        lz, lzc = np.log(z)[:, None], np.log(zc)[:, None]
        # 0 * log(0) = 0 at the endpoints
        logb = np.where(s == 0, 0.0, s * lz) + np.where(s == ell, 0.0, (ell - s) * lzc)
        logw, logwc = np.log(w), np.log(wc)
    out_f = np.empty((z.size, ell))
    out_c = np.empty((z.size, ell))
    step = 256
    for a in range(0, z.size, step):
        chunk = logb[a : a + step, :, None]
        out_f[a : a + step] = np.exp(logsumexp(chunk + logw[None], axis=1))
        out_c[a : a + step] = np.exp(logsumexp(chunk + logwc[None], axis=1))
    return out_f, out_c


def eval_f(b: PolarizationBehavior, i: int, z: float) -> float:
    """Erasure probability ``f_{K,i}(z)`` of bit-channel ``i`` (1-based)."""
    if not 1 <= i <= b.ell:
        raise IndexError(f"bit index {i} outside [1, {b.ell}]")
    if not 0.0 <= z <= 1.0:
        raise ValueError("z must lie in [0, 1]")
    f, _ = f_pair(b, [z])
    return float(f[0, i - 1])


def eval_all(b: PolarizationBehavior, z) -> np.ndarray:
    return f_pair(b, z)[0]

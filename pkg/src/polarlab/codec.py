"""Polar code construction, encoding and successive-cancellation decoding on the BEC.

Index convention: position ``i`` (0-based) of ``u`` has base-``ell`` digits
``d_1 .. d_m`` with ``d_1`` most significant; ``x = u K^{⊗m}`` with the first
Kronecker factor acting on ``d_1``.  This matches
:func:`polarlab.scaling.exact_bitchannel_erasures`.

The decoder works on trits.  At every ``ell x ell`` kernel node it decides
input ``i`` from the unerased node outputs and the already-known node inputs
by one GF(2) elimination; it never guesses, so a decoded bit is always the
transmitted one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .behavior import Kernel, PolarizationBehavior, as_kernel, exact_behavior
from .gf2 import BitMatrix, Seed, as_seed
from .scaling import EXACT_N_CAP, beta_constant, exact_bitchannel_erasures

MAX_CODEC_KERNEL = 31


class Symbol(IntEnum):
    ZERO = 0
    ONE = 1
    ERASED = 2


# bit-vector helpers --------------------------------------------------------------


def bits_to_hex(bits) -> str:
    """Pack bits MSB-first into bytes; the final byte is zero-padded."""
    return np.packbits(np.asarray(bits, dtype=np.uint8) & 1, bitorder="big").tobytes().hex()


def hex_to_bits(text: str, length: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(text.strip()), dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="big")
    if bits.size < length or np.any(bits[length:]):
        raise ValueError(f"hex string does not encode exactly {length} bits")
    return bits[:length].copy()


# code ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolarCode:
    kernel: Kernel
    m: int
    frozen: np.ndarray  # bool, True = frozen to zero
    design_z: float
    target_pe: float

    def __post_init__(self):
        fr = np.asarray(self.frozen, dtype=bool).copy()
        if fr.shape != (self.n,):
            raise ValueError(f"frozen mask must have length {self.n}")
        fr.setflags(write=False)
        object.__setattr__(self, "frozen", fr)

    @property
    def ell(self) -> int:
        return self.kernel.ell

    @property
    def n(self) -> int:
        return self.kernel.ell**self.m

    @property
    def k(self) -> int:
        return int(self.n - self.frozen.sum())

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def info_positions(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen)

    def to_dict(self, p: np.ndarray | None = None) -> dict:
        out = {
            "kernel": ["".join(map(str, r)) for r in self.kernel.matrix.to_dense()],
            "m": self.m,
            "n": self.n,
            "frozen_hex": bits_to_hex(self.frozen),
            "design_z": self.design_z,
            "target_pe": self.target_pe,
        }
        if p is not None:
            out["p_digest"] = hashlib.sha256(np.asarray(p, dtype="<f8").tobytes()).hexdigest()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PolarCode":
        kernel = Kernel(BitMatrix.from_strings(d["kernel"]))
        n = kernel.ell ** int(d["m"])
        frozen = hex_to_bits(d["frozen_hex"], n).astype(bool)
        return cls(kernel, int(d["m"]), frozen, float(d["design_z"]), float(d["target_pe"]))

    def save(self, path: str | Path, p: np.ndarray | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(p), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PolarCode":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ConstructionReport:
    p: np.ndarray
    union_bound: float
    rate: float
    gap: float
    beta: float


def _bitchannel_p(kernel: Kernel, m: int, design_z: float, b: PolarizationBehavior | None, cap: int):
    if kernel.ell**m > cap:
        raise OverflowError(f"{kernel.ell}^{m} exceeds the cap {cap}")
    b = exact_behavior(kernel) if b is None else b
    return exact_bitchannel_erasures(b, design_z, m, cap)


def construct_code(
    k: Kernel | BitMatrix,
    m: int,
    design_z: float,
    target_pe: float,
    behavior: PolarizationBehavior | None = None,
    cap: int = EXACT_N_CAP,
) -> tuple[PolarCode, ConstructionReport]:
    """Freeze every bit-channel whose erasure probability exceeds ``target_pe / n``."""
    kernel = as_kernel(k)
    p = _bitchannel_p(kernel, m, design_z, behavior, cap)
    frozen = p > target_pe / p.size
    code = PolarCode(kernel, m, frozen, design_z, target_pe)
    return code, _report(code, p)


def construct_code_fixed_rate(
    k: Kernel | BitMatrix,
    m: int,
    design_z: float,
    n_info: int,
    behavior: PolarizationBehavior | None = None,
    cap: int = EXACT_N_CAP,
) -> tuple[PolarCode, ConstructionReport]:
    """Keep the ``n_info`` most reliable bit-channels (ties go to the lower index)."""
    kernel = as_kernel(k)
    p = _bitchannel_p(kernel, m, design_z, behavior, cap)
    if not 0 <= n_info <= p.size:
        raise ValueError(f"n_info must lie in [0, {p.size}]")
    order = np.lexsort((np.arange(p.size), p))
    frozen = np.ones(p.size, dtype=bool)
    frozen[order[:n_info]] = False
    union = float(p[~frozen].sum())
    code = PolarCode(kernel, m, frozen, design_z, union)
    return code, _report(code, p)


def _report(code: PolarCode, p: np.ndarray) -> ConstructionReport:
    union = float(p[~code.frozen].sum())
    return ConstructionReport(
        p=p,
        union_bound=union,
        rate=code.rate,
        gap=(1.0 - code.design_z) - code.rate,
        beta=beta_constant(code.target_pe) if code.target_pe > 0 else float("inf"),
    )


# encoder ------------------------------------------------------------------------


def polar_transform(u: np.ndarray, kernel: BitMatrix | np.ndarray, m: int, op=np.bitwise_xor) -> np.ndarray:
    """``u K^{⊗m}`` along the last axis, one kernel layer at a time.

    ``op`` combines contributions (XOR for GF(2); OR propagates "unknown").
    """
    kd = kernel.to_dense() if isinstance(kernel, BitMatrix) else np.asarray(kernel)
    ell = kd.shape[0]
    n = ell**m
    u = np.asarray(u)
    if u.shape[-1] != n:
        raise ValueError(f"expected length {n}, got {u.shape[-1]}")
    lead = u.shape[:-1]
    x = u.reshape(-1, n)
    batch = x.shape[0]
    supports = [np.flatnonzero(kd[:, j]) for j in range(ell)]
    for level in range(m):
        a, b = ell**level, ell ** (m - level - 1)
        cur = x.reshape(batch, a, ell, b)
        out = np.empty_like(cur)
        for j, rows in enumerate(supports):
            acc = cur[:, :, rows[0], :].copy()
            for r in rows[1:]:
                op(acc, cur[:, :, r, :], out=acc)
            out[:, :, j, :] = acc
        x = out.reshape(batch, n)
    return x.reshape(*lead, n)


def encode(code: PolarCode, info) -> np.ndarray:
    info = np.asarray(info, dtype=np.uint8)
    if info.shape[-1] != code.k:
        raise ValueError(f"expected {code.k} information bits, got {info.shape[-1]}")
    u = np.zeros(info.shape[:-1] + (code.n,), dtype=np.uint8)
    u[..., code.info_positions] = info & 1
    return polar_transform(u, code.kernel.matrix, code.m)


def transmit_bec(x, z: float, seed: Seed | int) -> np.ndarray:
    """Erase each symbol independently with probability ``z``."""
    if not 0.0 <= z <= 1.0:
        raise ValueError("z must lie in [0, 1]")
    x = np.asarray(x, dtype=np.int8)
    erased = as_seed(seed).rng().random(x.shape) < z
    return np.where(erased, np.int8(Symbol.ERASED), x).astype(np.int8)


# decoder ------------------------------------------------------------------------


class _NodeSolver:
    """Cached per-node decisions for one kernel.

    ``solve(i, erased, known)`` answers whether node input ``i`` is fixed by
    the unerased outputs (mask ``~erased``) and the known earlier inputs
    (mask ``known``).  On success it returns the output subset ``w`` and the
    earlier-input subset ``r`` whose XOR equals input ``i``.
    """

    def __init__(self, kernel: Kernel):
        self.ell = kernel.ell
        self.cols = kernel.matrix.column_ints()
        self.cache: dict[tuple[int, int, int], tuple[bool, int, int]] = {}

    def solve(self, i: int, erased: int, known: int) -> tuple[bool, int, int]:
        key = (i, erased, known)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        ell = self.ell
        allowed = known & ((1 << i) - 1)
        forbidden = [r for r in range(ell) if r != i and not (allowed >> r) & 1]
        order = forbidden + [i] + [r for r in range(ell) if (allowed >> r) & 1]
        pos = {r: ell - 1 - k for k, r in enumerate(order)}
        basis: dict[int, tuple[int, int, int]] = {}
        result = (False, 0, 0)
        for j in range(ell):
            if (erased >> j) & 1:
                continue
            vec, combo = self.cols[j], 1 << j
            key_bits = sum(1 << pos[r] for r in range(ell) if (vec >> r) & 1)
            while key_bits:
                h = key_bits.bit_length() - 1
                if h not in basis:
                    basis[h] = (key_bits, vec, combo)
                    break
                bk, bv, bc = basis[h]
                key_bits ^= bk
                vec ^= bv
                combo ^= bc
        hit = basis.get(pos[i])
        if hit is not None:
            _, vec, combo = hit
            result = (True, combo, vec & allowed)
        self.cache[key] = result
        return result


_SOLVERS: dict[str, _NodeSolver] = {}


def _solver(kernel: Kernel) -> _NodeSolver:
    s = _SOLVERS.get(kernel.kernel_id)
    if s is None:
        s = _SOLVERS[kernel.kernel_id] = _NodeSolver(kernel)
    return s


def _pack(bits: np.ndarray) -> np.ndarray:
    """(T, ell, sub) 0/1 array -> (T, sub) int64 with bit j from row j."""
    weights = (np.int64(1) << np.arange(bits.shape[1], dtype=np.int64))[None, :, None]
    return (bits.astype(np.int64) * weights).sum(axis=1)


def _parity(v: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(v) & 1).astype(np.uint8)


def _sc(solver, kd, yv, yk, frozen, genie):
    """Returns (u values, u decoded status, u known-for-propagation)."""
    T, N = yv.shape
    if N == 1:
        if frozen[0]:
            val = np.zeros((T, 1), dtype=np.uint8)
            status = np.ones((T, 1), dtype=bool)
        else:
            val, status = yv.copy(), yk.copy()
        if genie is None:
            return val, status, status
        val = np.where(status, val, genie)
        return val, status, np.ones_like(status)

    ell = solver.ell
    sub = N // ell
    m_child = int(round(np.log(sub) / np.log(ell))) if sub > 1 else 0
    yv3 = yv.reshape(T, ell, sub)
    erased = _pack(~yk.reshape(T, ell, sub))
    ybits = _pack(yv3)
    vv = np.zeros((T, ell, sub), dtype=np.uint8)
    vk = np.zeros((T, ell, sub), dtype=bool)
    u_val, u_status, u_prop = [], [], []
    for i in range(ell):
        known = _pack(vk[:, :i, :]) if i else np.zeros((T, sub), dtype=np.int64)
        vbits = _pack(vv[:, :i, :]) if i else np.zeros((T, sub), dtype=np.int64)
        keys = (erased << ell) | known
        uniq, inv = np.unique(keys, return_inverse=True)
        table = np.array([solver.solve(i, int(kk) >> ell, int(kk) & ((1 << ell) - 1)) for kk in uniq],
                         dtype=np.int64).reshape(-1, 3)
        inv = inv.reshape(T, sub)
        ok = table[inv, 0].astype(bool)
        value = _parity(ybits & table[inv, 1]) ^ _parity(vbits & table[inv, 2])
        value = np.where(ok, value, 0).astype(np.uint8)
        blk = slice(i * sub, (i + 1) * sub)
        g = None if genie is None else genie[:, blk]
        cv, cs, cp = _sc(solver, kd, value, ok, frozen[blk], g)
        u_val.append(cv)
        u_status.append(cs)
        u_prop.append(cp)
        if sub == 1:
            v_val, v_known = cv, cp
        else:
            v_val = polar_transform(cv, kd, m_child)
            v_known = ~polar_transform(~cp, kd, m_child, op=np.logical_or)
        vv[:, i, :] = np.where(v_known, v_val, value)
        vk[:, i, :] = v_known | ok
    cat = lambda parts: np.concatenate(parts, axis=1)
    return cat(u_val), cat(u_status), cat(u_prop)


def sc_decode_batch(code: PolarCode, y, genie=None) -> tuple[np.ndarray, np.ndarray]:
    """Decode a batch of received words ``y`` of shape ``(T, n)``.

    Returns ``(u, status)``: estimated input bits and a boolean "decoded"
    flag per position.  With ``genie`` (true ``u`` per row) an undecodable
    bit is still reported as erased but its true value is fed forward, which
    gives the bit-channel semantics ("all earlier bits known").
    """
    if code.ell > MAX_CODEC_KERNEL:
        raise ValueError(f"decoder supports kernels up to {MAX_CODEC_KERNEL}x{MAX_CODEC_KERNEL}")
    y = np.atleast_2d(np.asarray(y, dtype=np.int8))
    if y.shape[1] != code.n:
        raise ValueError(f"expected received words of length {code.n}, got {y.shape[1]}")
    if genie is not None:
        genie = np.atleast_2d(np.asarray(genie, dtype=np.uint8))
        if genie.shape != y.shape:
            raise ValueError("genie must match the shape of y")
    known = y != Symbol.ERASED
    vals = np.where(known, y, 0).astype(np.uint8)
    u, status, _ = _sc(_solver(code.kernel), code.kernel.matrix.to_dense(), vals, known, code.frozen, genie)
    return np.where(status, u, 0).astype(np.uint8), status


@dataclass
class DecodeOutcome:
    info: np.ndarray | None  # None on failure
    u: np.ndarray  # Symbol values per position (ERASED where undecided)
    status: np.ndarray  # True = decoded

    @property
    def success(self) -> bool:
        return self.info is not None


def sc_decode(code: PolarCode, y, genie=None) -> DecodeOutcome:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("sc_decode takes one received word; use sc_decode_batch for batches")
    g = None if genie is None else np.asarray(genie)[None, :]
    u, status = sc_decode_batch(code, y[None, :], g)
    u, status = u[0], status[0]
    trits = np.where(status, u, np.uint8(Symbol.ERASED)).astype(np.int8)
    info_pos = code.info_positions
    ok = bool(status[info_pos].all())
    return DecodeOutcome(u[info_pos].copy() if ok else None, trits, status)


@dataclass
class FerResult:
    fer: float
    se: float
    frames: int
    failures: int
    wrong_bits: int
    bit_erasures: np.ndarray = field(repr=False)  # per-position erasure counts

    @property
    def ci(self) -> float:
        """Four-standard-error radius."""
        return 4.0 * self.se


def simulate_fer(
    code: PolarCode,
    z: float,
    trials: int,
    seed: Seed | int,
    chunk: int = 100_000,
    random_codewords: bool = False,
    genie: bool = False,
) -> FerResult:
    """Monte-Carlo frame-erasure rate of SC decoding over BEC(z).

    Transmits the all-zero codeword unless ``random_codewords``.  Chunk
    ``c`` uses ``seed.derive(c)``.  ``wrong_bits`` counts decoded positions
    that disagree with the transmitted ``u`` and should always be zero.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    seed = as_seed(seed)
    failures = wrong = 0
    erasures = np.zeros(code.n, dtype=np.int64)
    info_pos = code.info_positions
    for c, start in enumerate(range(0, trials, chunk)):
        t = min(chunk, trials - start)
        rng = seed.derive(c).rng()
        u = np.zeros((t, code.n), dtype=np.uint8)
        if random_codewords:
            u[:, info_pos] = rng.integers(0, 2, size=(t, info_pos.size), dtype=np.uint8)
        x = polar_transform(u, code.kernel.matrix, code.m)
        erased = rng.random(x.shape) < z
        y = np.where(erased, np.int8(Symbol.ERASED), x.astype(np.int8))
        uh, status = sc_decode_batch(code, y, u if genie else None)
        failures += int(np.count_nonzero(~status[:, info_pos].all(axis=1))) if info_pos.size else 0
        wrong += int(np.count_nonzero(status & (uh != u)))
        erasures += (~status).sum(axis=0)
    fer = failures / trials
    return FerResult(fer, float(np.sqrt(fer * (1 - fer) / trials)), trials, failures, wrong, erasures)

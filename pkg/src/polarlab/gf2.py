"""Bit-packed linear algebra over GF(2).

Matrices are stored row-major with 64 columns per ``uint64`` word; bit ``j``
of a row lives in word ``j // 64`` at position ``j % 64``.  Column vectors
handed to the elimination routines are plain Python ints with bit ``r``
holding row ``r``, which keeps the code width-agnostic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

WORD = 64
MAX_KERNEL_SIZE = 64
DEFAULT_KRON_CAP = 4096


@dataclass(frozen=True)
class Seed:
    """A 64-bit seed plus a stream path; together they fix every random draw.

    ``derive`` appends stream indices so that sub-experiments (per kernel,
    per weight stratum, per trial chunk) get independent generators that do
    not depend on execution order.
    """

    value: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.value < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.value}")

    def derive(self, *keys: int) -> "Seed":
        return Seed(self.value, self.stream + tuple(int(k) for k in keys))

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.value, spawn_key=self.stream)
        return np.random.default_rng(ss)


def as_seed(seed: Seed | int) -> Seed:
    return seed if isinstance(seed, Seed) else Seed(int(seed))


class BitMatrix:
    """Immutable rectangular matrix over GF(2)."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows: int, cols: int, data: np.ndarray):
        if rows < 1 or cols < 1:
            raise ValueError("BitMatrix needs at least one row and one column")
        words = -(-cols // WORD)
        data = np.ascontiguousarray(data, dtype=np.uint64)
        if data.shape != (rows, words):
            raise ValueError(f"packed data has shape {data.shape}, expected {(rows, words)}")
        tail = cols % WORD
        if tail and np.any(data[:, -1] >> np.uint64(tail)):
            raise ValueError("padding bits beyond the last column must be zero")
        data.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "data", data)

    def __setattr__(self, name, value):
        raise AttributeError("BitMatrix is immutable")

    # construction -----------------------------------------------------

    @classmethod
    def from_dense(cls, array) -> "BitMatrix":
        a = np.asarray(array)
        if a.ndim != 2:
            raise ValueError("expected a 2-D array")
        a = (a.astype(np.int64) & 1).astype(np.uint8)
        rows, cols = a.shape
        words = -(-cols // WORD)
        padded = np.zeros((rows, words * WORD), dtype=np.uint8)
        padded[:, :cols] = a
        packed = np.packbits(padded, axis=1, bitorder="little")
        data = packed.view("<u8").astype(np.uint64).reshape(rows, words)
        return cls(rows, cols, data)

    @classmethod
    def from_strings(cls, lines: Sequence[str]) -> "BitMatrix":
        lines = [ln.strip() for ln in lines]
        if not lines or any(len(ln) != len(lines[0]) for ln in lines):
            raise ValueError("rows must be non-empty and of equal length")
        if any(set(ln) - {"0", "1"} for ln in lines):
            raise ValueError("rows may only contain '0' and '1'")
        return cls.from_dense([[int(c) for c in ln] for ln in lines])

    @classmethod
    def from_columns(cls, columns: Sequence[int], rows: int) -> "BitMatrix":
        dense = np.zeros((rows, len(columns)), dtype=np.uint8)
        for j, c in enumerate(columns):
            for r in range(rows):
                dense[r, j] = (c >> r) & 1
        return cls.from_dense(dense)

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols, np.zeros((rows, -(-cols // WORD)), dtype=np.uint64))

    # views ------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def to_dense(self) -> np.ndarray:
        raw = self.data.astype("<u8").view(np.uint8).reshape(self.rows, -1)
        return np.unpackbits(raw, axis=1, bitorder="little")[:, : self.cols]

    def row_ints(self) -> list[int]:
        out = []
        for r in range(self.rows):
            v = 0
            for w in range(self.data.shape[1] - 1, -1, -1):
                v = (v << WORD) | int(self.data[r, w])
            out.append(v)
        return out

    def column_ints(self) -> list[int]:
        """Columns as ints; bit ``r`` of column ``j`` is entry ``(r, j)``."""
        return self.transpose().row_ints()

    def __getitem__(self, idx: tuple[int, int]) -> int:
        r, c = idx
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise IndexError(idx)
        return int(self.data[r, c // WORD] >> np.uint64(c % WORD)) & 1

    def transpose(self) -> "BitMatrix":
        return BitMatrix.from_dense(self.to_dense().T)

    T = property(transpose)

    def select_columns(self, cols: Iterable[int]) -> "BitMatrix":
        return BitMatrix.from_dense(self.to_dense()[:, list(cols)])

    def __matmul__(self, other: "BitMatrix") -> "BitMatrix":
        if self.cols != other.rows:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        prod = self.to_dense().astype(np.int64) @ other.to_dense().astype(np.int64)
        return BitMatrix.from_dense(prod & 1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, self.data.tobytes()))

    def __repr__(self) -> str:
        if self.rows * self.cols <= 256:
            body = ";".join("".join(map(str, r)) for r in self.to_dense())
            return f"BitMatrix({self.rows}x{self.cols}: {body})"
        return f"BitMatrix({self.rows}x{self.cols})"

    def digest(self) -> str:
        """Short content hash used as a kernel id in reports."""
        h = hashlib.sha256(f"{self.rows}x{self.cols}:".encode())
        h.update(self.data.astype("<u8").tobytes())
        return h.hexdigest()[:16]

    def rank(self) -> int:
        return rank(self)


# elimination -----------------------------------------------------------


def _leading_basis(vectors: Iterable[int]) -> dict[int, int]:
    """Reduce vectors to a basis keyed by highest set bit."""
    basis: dict[int, int] = {}
    for v in vectors:
        while v:
            h = v.bit_length() - 1
            b = basis.get(h)
            if b is None:
                basis[h] = v
                break
            v ^= b
    return basis


def rank(m: BitMatrix) -> int:
    src = m.row_ints() if m.rows <= m.cols else m.column_ints()
    return len(_leading_basis(src))


def _as_int_vector(v, length: int) -> int:
    if isinstance(v, (int, np.integer)):
        v = int(v)
        if v >> length:
            raise ValueError("vector has bits beyond the matrix row count")
        return v
    arr = np.asarray(v).ravel()
    if arr.size != length:
        raise ValueError(f"vector length {arr.size} does not match {length} rows")
    return sum(1 << r for r, bit in enumerate(arr) if int(bit) & 1)


def in_column_space(m: BitMatrix, v) -> bool:
    """True iff ``v`` is a GF(2) combination of the columns of ``m``."""
    x = _as_int_vector(v, m.rows)
    basis = _leading_basis(m.column_ints())
    while x:
        b = basis.get(x.bit_length() - 1)
        if b is None:
            return False
        x ^= b
    return True


@dataclass(frozen=True)
class PrefixDims:
    """``dims[j] = dim(V ∩ E_j)`` where ``E_j`` spans the first ``j`` unit vectors."""

    dims: tuple[int, ...]

    def increments(self) -> tuple[bool, ...]:
        """``increments()[i-1]`` is True iff ``d_i > d_{i-1}``."""
        return tuple(b > a for a, b in zip(self.dims, self.dims[1:]))


def leading_rows(columns: Iterable[int]) -> int:
    """Bitmask of pivot rows of the column span under highest-bit echelon form.

    With the span reduced so every basis vector has a distinct highest set
    bit, ``V ∩ E_j`` is spanned by the vectors whose highest bit is below
    ``j``; hence bit ``r`` of the result is set iff ``dim(V ∩ E_{r+1})``
    exceeds ``dim(V ∩ E_r)``.
    """
    mask = 0
    for h in _leading_basis(columns):
        mask |= 1 << h
    return mask


def prefix_intersection_dims(m: BitMatrix) -> PrefixDims:
    leads = leading_rows(m.column_ints())
    dims = [0]
    for r in range(m.rows):
        dims.append(dims[-1] + ((leads >> r) & 1))
    return PrefixDims(tuple(dims))


# structure -------------------------------------------------------------


def kron_power(k: BitMatrix, m: int, max_dim: int = DEFAULT_KRON_CAP) -> BitMatrix:
    """Dense ``K^{⊗m}``; the first factor indexes the most significant digit."""
    if k.rows != k.cols:
        raise ValueError("kron_power needs a square matrix")
    if m < 1:
        raise ValueError("m must be at least 1")
    if k.rows**m > max_dim:
        raise OverflowError(f"{k.rows}^{m} exceeds the size cap {max_dim}")
    base = k.to_dense()
    out = base
    for _ in range(m - 1):
        out = np.kron(out, base) & 1
    return BitMatrix.from_dense(out)


def random_bitmatrix(rows: int, cols: int, rng: np.random.Generator) -> BitMatrix:
    return BitMatrix.from_dense(rng.integers(0, 2, size=(rows, cols), dtype=np.uint8))


def sample_nonsingular(ell: int, seed: Seed | int) -> BitMatrix:
    """Uniform draw from GL(ell, F2) by rejection from uniform matrices."""
    if not 1 <= ell <= MAX_KERNEL_SIZE:
        raise ValueError(f"ell must lie in [1, {MAX_KERNEL_SIZE}], got {ell}")
    rng = as_seed(seed).rng()
    while True:
        cand = random_bitmatrix(ell, ell, rng)
        if rank(cand) == ell:
            return cand


def enumerate_gl(ell: int) -> list[BitMatrix]:
    """Every element of GL(ell, F2); only sensible for ell <= 3."""
    if ell > 4:
        raise ValueError("exhaustive GL enumeration is limited to ell <= 4")
    out = []
    for bits in product((0, 1), repeat=ell * ell):
        cand = BitMatrix.from_dense(np.array(bits, dtype=np.uint8).reshape(ell, ell))
        if rank(cand) == ell:
            out.append(cand)
    return out


def is_polarizing(k: BitMatrix) -> bool:
    """True iff no column permutation of ``k`` is upper triangular.

    A column whose lowest nonzero entry sits in row ``r`` can only be placed
    at position ``>= r``.  Sorting those rows and matching greedily decides
    whether an upper-triangular arrangement exists.
    """
    if k.rows != k.cols:
        raise ValueError("kernel must be square")
    if rank(k) != k.rows:
        raise ValueError("kernel is singular")
    lowest = sorted(c.bit_length() - 1 for c in k.column_ints())
    return any(r > pos for pos, r in enumerate(lowest))


# kernel text format ------------------------------------------------------


def format_kernel(k: BitMatrix) -> str:
    if k.rows != k.cols:
        raise ValueError("kernel must be square")
    body = "\n".join("".join(map(str, row)) for row in k.to_dense())
    return f"l={k.rows}\n{body}\n"


def parse_kernel(text: str) -> BitMatrix:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("l="):
        raise ValueError("kernel file must start with 'l=<size>'")
    try:
        ell = int(lines[0][2:])
    except ValueError as exc:
        raise ValueError(f"bad size line {lines[0]!r}") from exc
    rows = lines[1:]
    if len(rows) != ell or any(len(r) != ell for r in rows):
        raise ValueError(f"expected {ell} rows of {ell} characters")
    return BitMatrix.from_strings(rows)


def read_kernel(path: str | Path) -> BitMatrix:
    return parse_kernel(Path(path).read_text())


def write_kernel(k: BitMatrix, path: str | Path) -> None:
    Path(path).write_text(format_kernel(k))


ARIKAN = BitMatrix.from_strings(["10", "11"])

"""Sparse labeled datasets and the LIBSVM text format.

A :class:`Dataset` is stored in CSR form (``indptr``/``indices``/``values``) so
the numba kernels can walk it directly; :class:`Example` is a light per-row view.
File indices are 1-based, in-memory indices are 0-based.
"""
from __future__ import annotations

import gzip
import io
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ParseError(ValueError):
    """Malformed sparse-text input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Example:
    label: float
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values differ in length")
        if len(self.indices) > 1 and np.any(np.diff(self.indices) <= 0):
            raise ValueError("indices must be strictly increasing")


def support(e: Example) -> frozenset[int]:
    """The example's nonzero coordinate set (its gradient support)."""
    return frozenset(int(i) for i in e.indices)


@dataclass(frozen=True, eq=False)
class Dataset:
    dim: int
    labels: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name, dtype in (("labels", np.float64), ("indptr", np.int64),
                            ("indices", np.int64), ("values", np.float64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if len(self.indptr) != len(self.labels) + 1:
            raise ValueError("indptr length must be n + 1")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= self.dim):
            raise ValueError("feature index out of range for dim")

    @property
    def n(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Example:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return Example(float(self.labels[i]), self.indices[lo:hi], self.values[lo:hi])

    @property
    def examples(self) -> list[Example]:
        return [self[i] for i in range(self.n)]

    def support_sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    def coordinate_frequency(self) -> np.ndarray:
        """Fraction of examples whose support contains each coordinate."""
        counts = np.bincount(self.indices, minlength=self.dim)
        return counts / self.n

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.indices, self.indptr),
                             shape=(self.n, self.dim))

    def take(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        sizes = self.support_sizes()[rows]
        indptr = np.concatenate([[0], np.cumsum(sizes)])
        pieces = [np.arange(self.indptr[r], self.indptr[r + 1]) for r in rows]
        flat = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.int64)
        return Dataset(self.dim, self.labels[rows], indptr,
                       self.indices[flat], self.values[flat])

    @classmethod
    def from_examples(cls, examples: Iterable[Example], dim: int | None = None) -> "Dataset":
        examples = list(examples)
        labels = np.array([e.label for e in examples], dtype=np.float64)
        sizes = [len(e.indices) for e in examples]
        indptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        if examples and indptr[-1]:
            indices = np.concatenate([np.asarray(e.indices, dtype=np.int64) for e in examples])
            values = np.concatenate([np.asarray(e.values, dtype=np.float64) for e in examples])
        else:
            indices = np.zeros(0, dtype=np.int64)
            values = np.zeros(0, dtype=np.float64)
        if dim is None:
            dim = int(indices.max()) + 1 if len(indices) else 1
        return cls(dim, labels, indptr, indices, values)

    @classmethod
    def from_dense(cls, X: np.ndarray, y: np.ndarray) -> "Dataset":
        """Build from a dense design; exact zeros are dropped from the support."""
        X = np.asarray(X, dtype=np.float64)
        csr = sp.csr_matrix(X)
        csr.eliminate_zeros()
        csr.sort_indices()
        return cls(X.shape[1], np.asarray(y, dtype=np.float64), csr.indptr, csr.indices, csr.data)

    def equals(self, other: "Dataset") -> bool:
        return (self.dim == other.dim
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))


def parse_sparse_text(text: bytes | str, dim: int | None = None) -> Dataset:
    """Parse ``<label> <idx>:<val> ...`` lines (1-based indices).

    Blank lines and ``#`` comments are skipped and stored zeros are dropped.
    ``dim`` overrides the inferred dimension (it must cover every index).
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        prev = 0
        for tok in tokens[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(f"malformed token {tok!r}", lineno)
            try:
                j = int(key)
                v = float(val)
            except ValueError:
                raise ParseError(f"malformed token {tok!r}", lineno) from None
            if j < 1:
                raise ParseError(f"index {j} is not 1-based", lineno)
            if j <= prev:
                raise ParseError(f"indices not strictly increasing at {j}", lineno)
            prev = j
            if v != 0.0:
                indices.append(j - 1)
                values.append(v)
        indptr.append(len(indices))
    if not labels:
        raise ParseError("empty dataset")
    needed = max(indices) + 1 if indices else 1
    if dim is None:
        dim = needed
    elif dim < needed:
        raise ParseError(f"dim override {dim} smaller than max index {needed}")
    return Dataset(dim, np.array(labels), np.array(indptr), np.array(indices, dtype=np.int64),
                   np.array(values, dtype=np.float64))


def serialize(d: Dataset) -> str:
    """Inverse of :func:`parse_sparse_text` (exact float round trip)."""
    out = io.StringIO()
    for i in range(d.n):
        e = d[i]
        parts = [repr(float(e.label))]
        parts += [f"{j + 1}:{float(v)!r}" for j, v in zip(e.indices, e.values)]
        out.write(" ".join(parts) + "\n")
    return out.getvalue()


def load(path: str | os.PathLike, dim: int | None = None) -> Dataset:
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        return parse_sparse_text(fh.read(), dim=dim)


def subsample(d: Dataset, m: int, seed: int) -> Dataset:
    """Uniform sample of ``m`` rows without replacement; dim is preserved."""
    if not 1 <= m <= d.n:
        raise ValueError(f"subsample size {m} outside [1, {d.n}]")
    rows = np.random.default_rng(seed).choice(d.n, size=m, replace=False)
    return d.take(rows)

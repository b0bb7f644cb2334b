"""Tensor kernel functions and Gram construction.

Three kernel families over q points x'_1 .. x'_q (q even):

* linear:       sum(x'_1 * ... * x'_q)              (elementwise product)
* polynomial:   (sum(x'_1 * ... * x'_q)) ** degree
* exponential:  exp(sum(x'_1 * ... * x'_q))

All are symmetric and positive definite.  ``build_packed_gram`` fills the
packed layout with exactly one kernel evaluation per unique entry.
``build_dense_gram_matrix`` is the baseline layout the packed one is
checked against: rows indexed by canonical half-tuples (pairs for q=4),
each row the elementwise product of its points, so that the row-by-row
inner products reproduce every kernel value with quadratic redundancy.

Both builders group the elementwise product into the same two halves and
accumulate feature sums in the same order, so corresponding entries agree
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import (
    CapacityError,
    InvalidOrderError,
    RangeError,
    ShapeError,
    UnsupportedKernelError,
)
from .symtensor import IndexScheme, PackedSymTensor, unique_count

__all__ = [
    "DENSE_BASELINE_CAP",
    "EXP_SUM_LIMIT",
    "KERNEL_FAMILIES",
    "DenseGramMatrix",
    "TensorKernelSpec",
    "build_dense_gram_matrix",
    "build_packed_gram",
    "kernel_eval",
    "memory_report",
]

KERNEL_FAMILIES = ("linear", "polynomial", "exponential")

# exp(700) is near the float64 ceiling; larger sums are rejected instead of
# silently returning inf
EXP_SUM_LIMIT = 700.0

# default point cap for the dense baseline layout, whose memory grows as
# roughly n^4/4 entries
DENSE_BASELINE_CAP = 150


@dataclass(frozen=True)
class TensorKernelSpec:
    """Kernel family plus tensor order; ``degree`` only for polynomial."""

    family: str
    q: int = 4
    degree: int | None = None

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}"
            )
        if self.q < 2 or self.q % 2 != 0:
            raise InvalidOrderError(f"kernel order must be even and >= 2, got {self.q}")
        if self.family == "polynomial":
            if self.degree is None or self.degree < 1:
                raise ValueError("polynomial kernels need a degree >= 1")
        elif self.degree is not None:
            raise ValueError("degree is only meaningful for polynomial kernels")


def _half_product(points):
    # fixed grouping: product of the first half times product of the second
    # half, factors multiplied in argument order within each half
    q = points.shape[0]
    h = q // 2
    left = points[0].copy()
    for k in range(1, h):
        left *= points[k]
    right = points[h].copy()
    for k in range(h + 1, q):
        right *= points[k]
    return left * right


def _apply_family(spec, sums):
    if spec.family == "linear":
        return sums
    if spec.family == "polynomial":
        return np.power(sums, spec.degree)
    overflow = np.abs(sums) > EXP_SUM_LIMIT
    if np.any(overflow):
        raise RangeError(
            f"exponential kernel sum {float(np.max(np.abs(sums)))!r} exceeds "
            f"the overflow guard of {EXP_SUM_LIMIT}"
        )
    return np.exp(sums)


def kernel_eval(spec, points):
    """Kernel value for q points given as a (q, d) array-like.

    Feature terms are accumulated sequentially, matching the packed and
    dense Gram builders exactly.
    """
    try:
        pts = np.asarray(points, dtype=np.float64)
    except ValueError as exc:
        raise ShapeError(f"points do not form a rectangular array: {exc}") from exc
    if pts.ndim != 2 or pts.shape[0] != spec.q:
        raise ShapeError(
            f"expected {spec.q} point vectors of equal dimension, got shape {pts.shape}"
        )
    if pts.shape[1] < 1:
        raise ShapeError("points must have dimension >= 1")
    prod = _half_product(pts)
    total = 0.0
    for term in prod:
        total += term
    return float(_apply_family(spec, np.float64(total)))


@njit(cache=True)
def _gram_sums_jit(idx, points):  # pragma: no cover - compiled
    n_slots, order = idx.shape
    d = points.shape[1]
    h = order // 2
    out = np.empty(n_slots)
    for u in range(n_slots):
        total = 0.0
        for f in range(d):
            left = points[idx[u, 0], f]
            for k in range(1, h):
                left *= points[idx[u, k], f]
            right = points[idx[u, h], f]
            for k in range(h + 1, order):
                right *= points[idx[u, k], f]
            total += left * right
        out[u] = total
    return out


def build_packed_gram(spec, points):
    """Packed Gram tensor of the kernel over the rows of ``points``.

    Slot for canonical tuple (i1..iq) holds the kernel value of rows
    i1..iq; exactly unique_count evaluations are performed, one per slot.
    Each slot is independent of the others (no partial products are shared
    between tuples), which keeps the builder embarrassingly parallel; the
    current single pass is sequential and deterministic.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
        raise ShapeError(f"points must be a non-empty 2-D array, got shape {pts.shape}")
    scheme = IndexScheme(pts.shape[0], spec.q)
    sums = _gram_sums_jit(scheme.index_matrix(), pts)
    return PackedSymTensor(scheme, _apply_family(spec, sums))


@njit(cache=True)
def _pair_dots_jit(rows):  # pragma: no cover - compiled
    p, d = rows.shape
    out = np.empty((p, p))
    for a in range(p):
        for b in range(p):
            total = 0.0
            for f in range(d):
                total += rows[a, f] * rows[b, f]
            out[a, b] = total
    return out


@dataclass(frozen=True)
class DenseGramMatrix:
    """Baseline layout: kernel values as a half-tuple by half-tuple matrix."""

    matrix: np.ndarray
    pair_scheme: IndexScheme
    spec: TensorKernelSpec

    @property
    def stored_entries(self):
        return self.matrix.size

    def entry(self, left, right):
        """Kernel value for the q points indexed by two half-tuples."""
        return float(
            self.matrix[self.pair_scheme.rank(left), self.pair_scheme.rank(right)]
        )


def build_dense_gram_matrix(spec, points, cap=DENSE_BASELINE_CAP):
    """The pre-packing layout: products of canonical half-tuples, squared up.

    Row k holds the elementwise product of the half-tuple's point rows;
    entry (a, b) is then the kernel value of the union of the two
    half-tuples (for q=4: entry ((i,j),(k,l)) = k(x_i, x_j, x_k, x_l)).
    Only families with a product feature representation are supported, and
    ``points`` is refused above ``cap`` rows because storage grows with the
    squared half-tuple count.
    """
    if spec.family not in ("linear", "polynomial"):
        raise UnsupportedKernelError(
            f"dense baseline layout supports linear/polynomial only, got {spec.family!r}"
        )
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
        raise ShapeError(f"points must be a non-empty 2-D array, got shape {pts.shape}")
    n = pts.shape[0]
    if n > cap:
        raise CapacityError(
            f"dense baseline layout refused for n={n} points (cap {cap}); "
            f"it would store {unique_count(n, spec.q // 2) ** 2} entries"
        )
    half = IndexScheme(n, spec.q // 2)
    idx = half.index_matrix()
    rows = pts[idx[:, 0]].copy()
    for k in range(1, spec.q // 2):
        rows *= pts[idx[:, k]]
    matrix = _pair_dots_jit(rows)
    if spec.family == "polynomial":
        matrix = np.power(matrix, spec.degree)
    return DenseGramMatrix(matrix=matrix, pair_scheme=half, spec=spec)


def memory_report(n, q):
    """Byte costs of the full order-q tensor versus the packed layout.

    Entries are counted as 8-byte doubles: n**q * 8 for the full tensor,
    unique_count * 8 packed.  reduction_fraction = 1 - packed/dense.
    """
    n = int(n)
    q = int(q)
    packed = unique_count(n, q) * 8
    dense = n ** q * 8
    return {
        "dense_bytes": dense,
        "packed_bytes": packed,
        "reduction_fraction": 1.0 - packed / dense,
    }

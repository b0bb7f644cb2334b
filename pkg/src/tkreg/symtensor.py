"""Packed storage and index arithmetic for symmetric order-q tensors.

A symmetric tensor over ``n`` points repeats each value across every
permutation of its index tuple, so only the entries with non-decreasing
indices need to be kept.  There are ``C(n+q-1, q)`` of those.  This module
stores them in one flat array, ordered exactly as ``q`` nested loops would
visit them (each inner loop starting at the current value of the loop
outside it), and provides constant-time translation between index tuples
and flat slots via precomputed skip tables.

For ``q = 2`` the slot formula reduces to the familiar triangular layout
``slot(r, c) = r*n - r*(r+1)/2 + c``; higher orders follow the same scheme
with one skip table per remaining position.

Contractions against a coefficient vector fold the full symmetric sums
over the packed entries by weighting each canonical tuple with its
permutation multiplicity ``q! / prod(m_k!)``.
"""

from __future__ import annotations

import itertools
import math
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CapacityError, DataFormatError, InvalidOrderError, ShapeError

__all__ = [
    "MAX_UNIQUE_ENTRIES",
    "PSYT_MAGIC",
    "IndexScheme",
    "PackedSymTensor",
    "TupleMultiplicity",
    "canonicalize",
    "contract_gradient",
    "contract_objective",
    "iter_canonical",
    "multiplicity",
    "read_psyt",
    "unique_count",
    "write_psyt",
]

# Counts above 2**53 stop being exactly representable in float64, which the
# memory reports and multiplicity weights rely on.
MAX_UNIQUE_ENTRIES = 2 ** 53

PSYT_MAGIC = b"PSYT"
PSYT_VERSION = 1


def canonicalize(indices):
    """Return the canonical (sorted, non-decreasing) form of an index tuple."""
    return tuple(sorted(int(i) for i in indices))


def unique_count(n, order):
    """Number of distinct entries of a symmetric tensor of the given order.

    Equals ``C(n + order - 1, order)``: n*(n+1)/2 for a matrix,
    n*(n+1)*(n+2)/6 for a cube, n*(n+1)*(n+2)*(n+3)/24 for order 4.

    Any integer order >= 1 is accepted here; the even-order restriction of
    the kernel method is enforced where a packed tensor is actually built.
    Raises CapacityError when the count exceeds MAX_UNIQUE_ENTRIES.
    """
    n = int(n)
    order = int(order)
    if n < 1:
        raise ValueError(f"point count must be >= 1, got {n}")
    if order < 1:
        raise InvalidOrderError(f"tensor order must be >= 1, got {order}")
    count = math.comb(n + order - 1, order)
    if count > MAX_UNIQUE_ENTRIES:
        raise CapacityError(
            f"symmetric tensor with n={n}, order={order} has {count} unique "
            f"entries, above the supported cap of 2**53"
        )
    return count


@dataclass(frozen=True)
class TupleMultiplicity:
    """Permutation bookkeeping for one canonical index tuple.

    ``counts`` maps each distinct index to its repeat count m_k;
    ``total_perms`` is the number of distinct permutations of the tuple,
    q! / prod(m_k!).
    """

    counts: tuple
    total_perms: int

    @property
    def order(self):
        return sum(m for _, m in self.counts)

    def count_of(self, index):
        for i, m in self.counts:
            if i == index:
                return m
        return 0

    def first_position_count(self, index):
        """Permutations of the tuple that place ``index`` first.

        Equals total_perms * m_k / order, always an integer.
        """
        return self.total_perms * self.count_of(index) // self.order


def multiplicity(indices):
    """TupleMultiplicity of a canonical index tuple."""
    t = tuple(int(i) for i in indices)
    if any(a > b for a, b in zip(t, t[1:])):
        raise ValueError(f"index tuple {t} is not canonical (non-decreasing)")
    counts = tuple(sorted(Counter(t).items()))
    denom = 1
    for _, m in counts:
        denom *= math.factorial(m)
    return TupleMultiplicity(counts=counts, total_perms=math.factorial(len(t)) // denom)


class IndexScheme:
    """Bijection between canonical index tuples and flat slots.

    The scheme precomputes one skip table per tuple position (``order``
    tables of ``n+1`` entries, built in O(n) each), after which ``rank`` is
    a table lookup per position and ``unrank`` a binary search per
    position.

    Slot order is the nested-loop enumeration order: tuples sorted
    lexicographically, outer index slowest.  Any order >= 1 is supported;
    packed Gram tensors additionally require an even order (see
    PackedSymTensor).
    """

    def __init__(self, n, order):
        self.n = int(n)
        self.order = int(order)
        self._count = unique_count(self.n, self.order)
        # _skip[rem][v] = number of canonical suffixes of length rem+1 whose
        # first index is below v; row `rem` serves the position with `rem`
        # positions still to fill after it.
        skip = np.zeros((self.order, self.n + 1), dtype=np.int64)
        for rem in range(self.order):
            row = [math.comb(self.n - u + rem - 1, rem) for u in range(self.n)]
            skip[rem, 1:] = np.cumsum(row)
        self._skip = skip
        self._index_matrix = None
        self._multiplicities = None

    @property
    def unique_count(self):
        return self._count

    def __repr__(self):
        return f"IndexScheme(n={self.n}, order={self.order})"

    def __eq__(self, other):
        return (
            isinstance(other, IndexScheme)
            and self.n == other.n
            and self.order == other.order
        )

    def _check_indices(self, idx):
        if idx.shape[-1] != self.order:
            raise ShapeError(
                f"expected index tuples of length {self.order}, got shape {idx.shape}"
            )
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise IndexError(f"index out of range [0, {self.n})")

    def rank(self, indices):
        """Slot of an index tuple; any permutation of the tuple is accepted."""
        return int(self.rank_many(np.asarray(indices, dtype=np.int64)))

    def rank_many(self, indices):
        """Vectorised rank: ``indices`` has shape (..., order)."""
        idx = np.sort(np.asarray(indices, dtype=np.int64), axis=-1)
        self._check_indices(idx)
        slots = np.zeros(idx.shape[:-1], dtype=np.int64)
        prev = np.zeros(idx.shape[:-1], dtype=np.int64)
        for j in range(self.order):
            row = self._skip[self.order - 1 - j]
            cur = idx[..., j]
            slots += row[cur] - row[prev]
            prev = cur
        return slots

    def unrank(self, slot):
        """Canonical index tuple stored at ``slot``."""
        slot = int(slot)
        if not 0 <= slot < self._count:
            raise IndexError(f"slot {slot} out of range [0, {self._count})")
        out = []
        prev = 0
        rest = slot
        for j in range(self.order):
            row = self._skip[self.order - 1 - j]
            target = rest + row[prev]
            v = int(np.searchsorted(row, target, side="right")) - 1
            rest = int(target - row[v])
            out.append(v)
            prev = v
        return tuple(out)

    def unrank_many(self, slots):
        slots = np.asarray(slots, dtype=np.int64)
        if slots.size and (slots.min() < 0 or slots.max() >= self._count):
            raise IndexError(f"slot out of range [0, {self._count})")
        out = np.zeros(slots.shape + (self.order,), dtype=np.int64)
        prev = np.zeros(slots.shape, dtype=np.int64)
        rest = slots.copy()
        for j in range(self.order):
            row = self._skip[self.order - 1 - j]
            target = rest + row[prev]
            v = np.searchsorted(row, target, side="right") - 1
            rest = target - row[v]
            out[..., j] = v
            prev = v
        return out

    def index_matrix(self):
        """All canonical tuples as one (unique_count, order) int32 array.

        Built once per scheme by level-wise expansion; row u is the tuple
        stored at slot u.
        """
        if self._index_matrix is None:
            cols = [np.arange(self.n, dtype=np.int32)]
            for _ in range(1, self.order):
                last = cols[-1]
                reps = (self.n - last).astype(np.int64)
                total = int(reps.sum())
                starts = np.zeros(len(last) + 1, dtype=np.int64)
                np.cumsum(reps, out=starts[1:])
                offset = np.arange(total, dtype=np.int64) - np.repeat(starts[:-1], reps)
                cols = [np.repeat(c, reps) for c in cols]
                cols.append(np.repeat(last, reps) + offset.astype(np.int32))
            mat = np.ascontiguousarray(np.stack(cols, axis=1))
            assert mat.shape == (self._count, self.order)
            self._index_matrix = mat
        return self._index_matrix

    def multiplicities(self):
        """Permutation counts q!/prod(m_k!) for every slot, as int64."""
        if self._multiplicities is None:
            idx = self.index_matrix()
            run = np.ones(len(idx), dtype=np.int64)
            denom = np.ones(len(idx), dtype=np.int64)
            for j in range(1, self.order):
                same = idx[:, j] == idx[:, j - 1]
                run = np.where(same, run + 1, 1)
                denom *= np.where(same, run, 1)
            self._multiplicities = math.factorial(self.order) // denom
        return self._multiplicities


def iter_canonical(scheme):
    """Yield (slot, tuple, TupleMultiplicity) in slot order.

    Pure-python enumeration; the vectorised twin is
    IndexScheme.index_matrix / multiplicities.
    """
    for slot, tup in enumerate(
        itertools.combinations_with_replacement(range(scheme.n), scheme.order)
    ):
        yield slot, tup, multiplicity(tup)


class PackedSymTensor:
    """Unique entries of a symmetric even-order tensor, stored flat.

    Immutable after construction: the value array is write-protected, so
    instances are safe to share across threads.
    """

    def __init__(self, scheme, values):
        if scheme.order < 2 or scheme.order % 2 != 0:
            raise InvalidOrderError(
                f"packed tensors require an even order >= 2, got {scheme.order}"
            )
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (scheme.unique_count,):
            raise ShapeError(
                f"expected {scheme.unique_count} values for n={scheme.n}, "
                f"order={scheme.order}, got shape {values.shape}"
            )
        values.setflags(write=False)
        self.scheme = scheme
        self.values = values
        self._vmu = None
        self._vmu_over_q = None

    @property
    def n(self):
        return self.scheme.n

    @property
    def order(self):
        return self.scheme.order

    def get(self, indices):
        """Value at an index tuple; permutation-invariant by construction."""
        return float(self.values[self.scheme.rank(indices)])

    def get_many(self, indices):
        return self.values[self.scheme.rank_many(indices)]

    def _weighted(self):
        # values scaled by tuple multiplicity; cached because contraction is
        # called once per solver iteration
        if self._vmu is None:
            mult = self.scheme.multiplicities().astype(np.float64)
            self._vmu = self.values * mult
            self._vmu_over_q = self._vmu / self.order
        return self._vmu, self._vmu_over_q


@njit(cache=True)
def _objective_jit(idx, vmu, alpha):  # pragma: no cover - compiled
    total = 0.0
    n_slots, order = idx.shape
    for u in range(n_slots):
        p = 1.0
        for k in range(order):
            p *= alpha[idx[u, k]]
        total += vmu[u] * p
    return total


@njit(cache=True)
def _gradient_jit(idx, vmu_over_q, alpha, n):  # pragma: no cover - compiled
    n_slots, order = idx.shape
    g = np.zeros(n)
    vals = np.empty(order)
    prefix = np.empty(order + 1)
    suffix = np.empty(order + 1)
    for u in range(n_slots):
        for k in range(order):
            vals[k] = alpha[idx[u, k]]
        prefix[0] = 1.0
        for k in range(order):
            prefix[k + 1] = prefix[k] * vals[k]
        suffix[order] = 1.0
        for k in range(order - 1, -1, -1):
            suffix[k] = suffix[k + 1] * vals[k]
        w = vmu_over_q[u]
        for k in range(order):
            # product over the tuple with position k removed, formed
            # directly so zero coefficients never divide
            g[idx[u, k]] += w * (prefix[k] * suffix[k + 1])
    return g


def _check_alpha(tensor, alpha):
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    if alpha.shape != (tensor.n,):
        raise ShapeError(
            f"coefficient vector must have shape ({tensor.n},), got {alpha.shape}"
        )
    return alpha


def contract_objective(tensor, alpha):
    """(1/q) * sum over all n^q index tuples of K[t] * prod(alpha[t]).

    Folded over the packed entries: each canonical tuple contributes its
    value times its permutation multiplicity times the product of alpha
    over the tuple.  For a linear-kernel Gram tensor this equals
    (1/q) * ||X^T alpha||_q^q.
    """
    alpha = _check_alpha(tensor, alpha)
    vmu, _ = tensor._weighted()
    return float(_objective_jit(tensor.scheme.index_matrix(), vmu, alpha)) / tensor.order


def contract_gradient(tensor, alpha):
    """Gradient of contract_objective: g_j = sum K[j, t'] * prod(alpha[t']).

    The sum runs over all (q-1)-tuples t'.  Folding over canonical tuples,
    each occurrence of index j in a tuple contributes the tuple's value
    times multiplicity/q times the product of alpha over the remaining
    positions.  Accumulation is sequential in slot order, so the result is
    deterministic.
    """
    alpha = _check_alpha(tensor, alpha)
    _, vmu_over_q = tensor._weighted()
    return _gradient_jit(tensor.scheme.index_matrix(), vmu_over_q, alpha, tensor.n)


def write_psyt(tensor, path):
    """Dump a packed tensor: 'PSYT', u32 version/n/q, then float64 slots (LE)."""
    header = struct.pack(
        "<4sIII", PSYT_MAGIC, PSYT_VERSION, tensor.n, tensor.order
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(tensor.values.astype("<f8").tobytes())


def read_psyt(path):
    """Read a tensor written by write_psyt."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise DataFormatError(f"{path}: truncated header")
        magic, version, n, order = struct.unpack("<4sIII", header)
        if magic != PSYT_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}")
        if version != PSYT_VERSION:
            raise DataFormatError(f"{path}: unsupported version {version}")
        scheme = IndexScheme(n, order)
        raw = fh.read(8 * scheme.unique_count)
        values = np.frombuffer(raw, dtype="<f8")
        if values.shape[0] != scheme.unique_count:
            raise DataFormatError(
                f"{path}: expected {scheme.unique_count} values, got {values.shape[0]}"
            )
    return PackedSymTensor(scheme, values.astype(np.float64))

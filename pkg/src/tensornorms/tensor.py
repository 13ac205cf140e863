"""Dense tensors with one contravariant and m covariant indices.

Storage is a plain row-major ndarray of shape ``(n_o, n, ..., n)``; the
first axis is the output (contravariant) index and the remaining ``m`` axes
are the covariant slots. All indexing is zero-based.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .exceptions import SizingError, UnsupportedOrderError

MAX_ORDER_1M = 4
MAX_ORDER_0M = 8


def _symmetrize_axes(a: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Average ``a`` over all permutations of the listed axes."""
    axes = list(axes)
    if len(axes) < 2:
        return a.copy()
    out = np.zeros_like(a)
    base = list(range(a.ndim))
    count = 0
    for perm in itertools.permutations(axes):
        order = base.copy()
        for src, dst in zip(axes, perm):
            order[src] = dst
        out += np.transpose(a, order)
        count += 1
    out /= count
    # Summation order differs between permuted positions, so copy every entry
    # from its sorted-index representative to make the symmetry bit-exact.
    idx = np.indices(a.shape)
    idx[axes] = np.sort(idx[axes], axis=0)
    return out[tuple(idx)]


def _restore(cls, entries, attrs):
    """Unpickle without re-running validation or symmetrization."""
    obj = object.__new__(cls)
    a = np.array(entries, dtype=float)
    a.setflags(write=False)
    object.__setattr__(obj, "entries", a)
    for k, v in attrs.items():
        object.__setattr__(obj, k, v)
    return obj


class Tensor1m:
    """A (1,m)-tensor, partially symmetric in its covariant indices.

    Construction averages the entries over covariant permutations, so every
    instance is partially symmetric unless built with ``symmetrize=False``
    (only :func:`slice_block` does that, for mixed input blocks).
    """

    __slots__ = ("entries", "partially_symmetric")

    def __init__(self, entries, *, symmetrize: bool = True):
        a = np.array(entries, dtype=float)
        if a.ndim < 2:
            raise SizingError(f"need at least 2 axes, got shape {a.shape}")
        n = a.shape[1]
        if any(s != n for s in a.shape[1:]):
            raise SizingError(f"covariant axes must share one length, got {a.shape}")
        if a.ndim - 1 > MAX_ORDER_1M:
            raise UnsupportedOrderError(f"order {a.ndim - 1} > {MAX_ORDER_1M}")
        if not np.all(np.isfinite(a)):
            raise ValueError("tensor entries must be finite")
        if symmetrize and a.ndim > 2:
            a = _symmetrize_axes(a, range(1, a.ndim))
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "partially_symmetric", bool(symmetrize or a.ndim == 2))

    def __setattr__(self, name, value):
        raise AttributeError("Tensor1m is immutable")

    def __reduce__(self):
        return (_restore, (Tensor1m, self.entries, {"partially_symmetric": self.partially_symmetric}))

    @property
    def dim_out(self) -> int:
        return self.entries.shape[0]

    @property
    def dim_in(self) -> int:
        return self.entries.shape[1]

    @property
    def order(self) -> int:
        return self.entries.ndim - 1

    @property
    def shape(self):
        return self.entries.shape

    def __repr__(self):
        return f"Tensor1m(n_o={self.dim_out}, n={self.dim_in}, m={self.order})"

    def contract(self, x, times: int | None = None):
        return contract(self, x, self.order if times is None else times)

    def __mul__(self, c):
        return Tensor1m(self.entries * float(c), symmetrize=False)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, dim_out: int, dim_in: int, order: int) -> "Tensor1m":
        return cls(np.zeros((dim_out,) + (dim_in,) * order), symmetrize=False)


class Tensor0m:
    """A fully covariant tensor of the given order; ``symmetric`` marks full symmetry."""

    __slots__ = ("entries", "symmetric")

    def __init__(self, entries, *, symmetric: bool = False):
        a = np.array(entries, dtype=float)
        if a.ndim < 1:
            raise SizingError("order must be positive")
        if any(s != a.shape[0] for s in a.shape):
            raise SizingError(f"all axes must share one length, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("tensor entries must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "symmetric", bool(symmetric))

    def __setattr__(self, name, value):
        raise AttributeError("Tensor0m is immutable")

    def __reduce__(self):
        return (_restore, (Tensor0m, self.entries, {"symmetric": self.symmetric}))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def order(self) -> int:
        return self.entries.ndim

    def __repr__(self):
        return f"Tensor0m(n={self.dim}, order={self.order}, symmetric={self.symmetric})"

    def apply(self, x, times: int | None = None):
        """Contract the trailing ``times`` slots with ``x`` (all slots by default)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise SizingError(f"vector length {x.shape} != {self.dim}")
        times = self.order if times is None else times
        out = self.entries
        for _ in range(times):
            out = out @ x
        return out


def contract(t: Tensor1m, x, times: int):
    """Contract the last ``times`` covariant slots of ``t`` with ``x``.

    Returns a vector when all slots are consumed, a matrix when one is left,
    and a :class:`Tensor1m` otherwise.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (t.dim_in,):
        raise SizingError(f"vector length {x.shape} != dim_in {t.dim_in}")
    if not 1 <= times <= t.order:
        raise SizingError(f"cannot contract {times} times a tensor of order {t.order}")
    out = t.entries
    for _ in range(times):
        out = out @ x
    if out.ndim <= 2:
        return np.array(out)
    return Tensor1m(out, symmetrize=False)


def square(t: Tensor1m) -> Tensor0m:
    """The (0,2m) square ``B^a_{i..} B^a_{j..}``; ``square(t) x^{2m} = |B x^m|^2``."""
    return Tensor0m(np.tensordot(t.entries, t.entries, axes=([0], [0])))


def symmetrize(t: Tensor0m) -> Tensor0m:
    if t.order > MAX_ORDER_0M:
        raise UnsupportedOrderError(f"order {t.order} > {MAX_ORDER_0M}")
    if t.symmetric:
        return t
    return Tensor0m(_symmetrize_axes(t.entries, range(t.order)), symmetric=True)


def flatten_last(t: Tensor1m) -> np.ndarray:
    """Unfold a (1,2)-tensor to the ``(n_o*n) x n`` matrix with row ``n*i + j``."""
    if t.order != 2:
        raise UnsupportedOrderError("flatten_last needs a (1,2)-tensor")
    return t.entries.reshape(t.dim_out * t.dim_in, t.dim_in).copy()


def flatten_first(t: Tensor1m) -> np.ndarray:
    """Unfold to ``n_o x n^m`` with columns in row-major multi-index order."""
    return t.entries.reshape(t.dim_out, t.dim_in**t.order).copy()


def frobenius_norm(t) -> float:
    a = t.entries if isinstance(t, (Tensor1m, Tensor0m)) else np.asarray(t, dtype=float)
    return float(np.linalg.norm(a.ravel()))


def _as_slice(r, size: int) -> slice:
    if isinstance(r, slice):
        start, stop, step = r.indices(size)
        if step != 1:
            raise SizingError("only unit-stride ranges are supported")
    else:
        start, stop = r
    if not 0 <= start < stop <= size:
        raise SizingError(f"range {start}..{stop} outside 0..{size}")
    return slice(start, stop)


def slice_block(t: Tensor1m, out_range, in_ranges) -> Tensor1m:
    """Sub-tensor over ``out_range`` and one input range per covariant slot.

    Ranges are ``(start, stop)`` pairs or slices. The result keeps the
    partial-symmetry guarantee only when every input range is the same.
    """
    if len(in_ranges) != t.order:
        raise SizingError(f"need {t.order} input ranges, got {len(in_ranges)}")
    out_s = _as_slice(out_range, t.dim_out)
    in_s = [_as_slice(r, t.dim_in) for r in in_ranges]
    lengths = {s.stop - s.start for s in in_s}
    if len(lengths) != 1:
        raise SizingError("input ranges must have equal length")
    block = t.entries[(out_s, *in_s)]
    same = all((s.start, s.stop) == (in_s[0].start, in_s[0].stop) for s in in_s)
    result = Tensor1m(block, symmetrize=False)
    object.__setattr__(result, "partially_symmetric", same and t.partially_symmetric)
    return result


# -- text serialization ------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def dumps(t: Tensor1m) -> str:
    """Header ``tensor1m n_o n m`` then entries in storage order, eight per line."""
    flat = t.entries.ravel()
    lines = [f"tensor1m {t.dim_out} {t.dim_in} {t.order}"]
    for i in range(0, flat.size, 8):
        lines.append(" ".join(_fmt(v) for v in flat[i:i + 8]))
    return "\n".join(lines) + "\n"


def loads(text: str) -> Tensor1m:
    tokens = text.split()
    if len(tokens) < 4 or tokens[0] != "tensor1m":
        raise ValueError("not a tensor1m record")
    n_o, n, m = (int(v) for v in tokens[1:4])
    size = n_o * n**m
    values = np.array([float(v) for v in tokens[4:4 + size]])
    if values.size != size:
        raise ValueError(f"expected {size} entries, found {values.size}")
    # Stored tensors are already symmetric; re-averaging would perturb the last bit.
    return Tensor1m(values.reshape((n_o,) + (n,) * m), symmetrize=False)


def read_records(text: str) -> list[Tensor1m]:
    """Split a stream containing several ``tensor1m`` records."""
    out = []
    tokens = text.split()
    i = 0
    while i < len(tokens):
        if tokens[i] != "tensor1m":
            raise ValueError(f"unexpected token {tokens[i]!r}")
        n_o, n, m = (int(v) for v in tokens[i + 1:i + 4])
        size = n_o * n**m
        chunk = tokens[i:i + 4 + size]
        out.append(loads(" ".join(chunk)))
        i += 4 + size
    return out


def factorial(k: int) -> int:
    return math.factorial(k)

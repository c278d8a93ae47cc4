"""Sparse voxel tensors in canonical Morton order.

Every POV (positively-occupied voxel) carries an integer coordinate triple and
a fixed number of signed integer attribute channels.  Voxels are always
stored sorted by Morton key so that encoder and decoder walk them in the same
order no matter how the input was permuted.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import RangeError, StructuralError

MAX_DEPTH = 21  # 3 * 21 bits fit in a signed 64-bit key
ATTR_MIN, ATTR_MAX = -32768, 32767


def morton_key(coord, depth: int) -> int:
    """Bit-interleaved key of one coordinate; per level the bits are (x, y, z), x highest."""
    x, y, z = (int(c) for c in coord)
    lim = 1 << depth
    if not (0 <= x < lim and 0 <= y < lim and 0 <= z < lim):
        raise RangeError(f"coordinate {(x, y, z)} out of range for depth {depth}")
    key = 0
    for b in range(depth):
        key |= (((x >> b) & 1) << (3 * b + 2)) | (((y >> b) & 1) << (3 * b + 1)) | (((z >> b) & 1) << (3 * b))
    return key


def morton_keys(coords: np.ndarray, depth: int) -> np.ndarray:
    """Vectorized :func:`morton_key` for an ``(N, 3)`` integer array."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    if depth > MAX_DEPTH:
        raise RangeError(f"depth {depth} exceeds {MAX_DEPTH}")
    if coords.size and (coords.min() < 0 or coords.max() >= (1 << depth)):
        raise RangeError(f"coordinates out of range for depth {depth}")
    keys = np.zeros(len(coords), dtype=np.int64)
    x, y, z = coords[:, 0], coords[:, 1], coords[:, 2]
    for b in range(depth):
        keys |= ((x >> b) & 1) << (3 * b + 2)
        keys |= ((y >> b) & 1) << (3 * b + 1)
        keys |= ((z >> b) & 1) << (3 * b)
    return keys


def octant_index(coord) -> int:
    x, y, z = (int(c) for c in coord)
    return (x & 1) * 4 + (y & 1) * 2 + (z & 1)


def octant_indices(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.int64)
    return ((coords[:, 0] & 1) << 2) | ((coords[:, 1] & 1) << 1) | (coords[:, 2] & 1)


class Voxel(NamedTuple):
    coord: tuple
    attrs: tuple


class SparseTensor:
    """Immutable set of POVs with ``channels`` integer attributes each.

    ``coords`` and ``attrs`` are exposed as read-only arrays in canonical
    (ascending Morton) order.  Duplicate coordinates are rejected.
    """

    __slots__ = ("depth", "coords", "attrs", "keys")

    def __init__(self, coords, attrs=None, depth: int = 10):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        if attrs is None:
            attrs = np.zeros((len(coords), 0), dtype=np.int64)
        attrs = np.asarray(attrs)
        if attrs.ndim == 1:
            attrs = attrs[:, None]
        if attrs.shape[0] != len(coords):
            raise StructuralError(f"{len(coords)} coordinates but {attrs.shape[0]} attribute rows")
        if attrs.size and not np.issubdtype(attrs.dtype, np.integer):
            if not np.all(np.mod(attrs, 1) == 0):
                raise RangeError("attributes must be integers")
        attrs = attrs.astype(np.int64)
        if attrs.size and (attrs.min() < ATTR_MIN or attrs.max() > ATTR_MAX):
            raise RangeError("attributes exceed the signed 16-bit range")
        if not 1 <= depth <= MAX_DEPTH:
            raise RangeError(f"depth {depth} not in [1, {MAX_DEPTH}]")
        keys = morton_keys(coords, depth)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
            raise StructuralError("duplicate voxel coordinates")
        self.depth = int(depth)
        self.coords = coords[order]
        self.attrs = attrs[order]
        self.keys = keys
        for a in (self.coords, self.attrs, self.keys):
            a.setflags(write=False)

    @classmethod
    def _sorted(cls, coords, attrs, keys, depth):
        # trusted constructor for already-canonical data
        t = object.__new__(cls)
        t.depth, t.coords, t.attrs, t.keys = int(depth), coords, attrs, keys
        for a in (coords, attrs, keys):
            a.setflags(write=False)
        return t

    @property
    def channels(self) -> int:
        return self.attrs.shape[1]

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self) -> Iterator[Voxel]:
        for c, a in zip(self.coords, self.attrs):
            yield Voxel(tuple(int(v) for v in c), tuple(int(v) for v in a))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return (self.depth == other.depth and self.attrs.shape == other.attrs.shape
                and np.array_equal(self.coords, other.coords)
                and np.array_equal(self.attrs, other.attrs))

    def __repr__(self) -> str:
        return f"SparseTensor(n={len(self)}, channels={self.channels}, depth={self.depth})"

    def with_attrs(self, attrs) -> "SparseTensor":
        attrs = np.asarray(attrs, dtype=np.int64).reshape(len(self), -1)
        return SparseTensor._sorted(self.coords, attrs.copy(), self.keys, self.depth)

    def index_of(self, coords) -> np.ndarray:
        """Row index of each query coordinate, or -1 when unoccupied / out of range."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        out = np.full(len(coords), -1, dtype=np.int64)
        ok = np.all((coords >= 0) & (coords < (1 << self.depth)), axis=1)
        if not ok.any() or not len(self):
            return out
        q = morton_keys(coords[ok], self.depth)
        pos = np.searchsorted(self.keys, q)
        pos_c = np.minimum(pos, len(self.keys) - 1)
        hit = self.keys[pos_c] == q
        out[np.flatnonzero(ok)[hit]] = pos_c[hit]
        return out


@dataclass(frozen=True)
class Neighbors:
    """CSR neighbor table for one kernel size.

    Row ``i`` owns entries ``indptr[i]:indptr[i+1]``; each entry is an offset
    slot (``(dx+r)*K*K + (dy+r)*K + (dz+r)``) and the source POV index.
    Entries within a row are sorted by slot.
    """

    kernel: int
    indptr: np.ndarray
    slots: np.ndarray
    srcs: np.ndarray

    def __len__(self) -> int:
        return len(self.indptr) - 1

    def row(self, i: int) -> list:
        a, b = self.indptr[i], self.indptr[i + 1]
        return list(zip(self.slots[a:b].tolist(), self.srcs[a:b].tolist()))

    def mirror_slot(self, slot):
        return self.kernel ** 3 - 1 - slot

    def take_rows(self, rows) -> "Neighbors":
        """Table restricted to destination ``rows`` (sources keep their original indices)."""
        rows = np.asarray(rows, dtype=np.int64)
        start = self.indptr[rows]
        length = self.indptr[rows + 1] - start
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(length, out=indptr[1:])
        pos = np.repeat(start - indptr[:-1], length) + np.arange(indptr[-1])
        return Neighbors(self.kernel, indptr, self.slots[pos], self.srcs[pos])


def kernel_offsets(kernel: int) -> np.ndarray:
    r = kernel // 2
    rng = np.arange(-r, r + 1)
    dx, dy, dz = np.meshgrid(rng, rng, rng, indexing="ij")
    return np.stack([dx.ravel(), dy.ravel(), dz.ravel()], axis=1)


def gather_neighbors(t: SparseTensor, kernel: int = 3) -> Neighbors:
    """For every POV list the occupied offsets of a ``kernel``-cube around it."""
    if kernel not in (1, 3, 5):
        raise RangeError(f"kernel must be 1, 3 or 5, got {kernel}")
    n = len(t)
    if kernel == 1:
        idx = np.arange(n, dtype=np.int64)
        return Neighbors(1, np.arange(n + 1, dtype=np.int64), np.zeros(n, dtype=np.int64), idx)
    dsts, slots, srcs = [], [], []
    for slot, off in enumerate(kernel_offsets(kernel)):
        src = t.index_of(t.coords + off)
        hit = np.flatnonzero(src >= 0)
        dsts.append(hit)
        slots.append(np.full(len(hit), slot, dtype=np.int64))
        srcs.append(src[hit])
    dst = np.concatenate(dsts)
    order = np.argsort(dst, kind="stable")  # stable keeps slot order within a row
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(dst, minlength=n), out=indptr[1:])
    return Neighbors(kernel, indptr, np.concatenate(slots)[order], np.concatenate(srcs)[order])

"""Dyadic average-pooling pyramid with integer residue classes.

Scale ``S`` holds the input voxels; each coarser scale merges the ``k``
occupied children of every 2x2x2 cube into one parent whose value is the
rounded child average.  The residue ``sum mod k`` is kept alongside so the
exact child sum can be rebuilt from the rounded parent value with integer
arithmetic only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from .errors import EmptyInputError, RangeError, StructuralError
from .sparse import SparseTensor, morton_keys, octant_indices


def round_average(sums, k):
    """Rounded mean ``sums / k`` with ties broken upward.

    Half-up is used (not half-to-even): with half-to-even two sums that differ
    by ``k`` can round to the same even value for even ``k``, so the residue
    class would no longer identify the sum.
    """
    sums = np.asarray(sums, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    return np.floor_divide(2 * sums + k, 2 * k)


def reconstruct_sums(q, residues, k):
    """Inverse of pooling: the unique sum in ``[k*q - k/2, k*q + k/2)`` with ``sum % k == residue``."""
    q = np.asarray(q, dtype=np.int64)
    residues = np.asarray(residues, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    base = k * q - k // 2
    return base + np.mod(residues - base, k)


def residue_alphabet(k: int) -> int:
    """Number of equiprobable residue symbols for a cube with ``k`` children."""
    if not 1 <= k <= 8:
        raise RangeError(f"k must be in [1, 8], got {k}")
    return int(k)


@dataclass(frozen=True)
class ScaleLink:
    """Parent/child relation between scale ``s`` and ``s - 1``.

    Children of parent ``j`` are the contiguous rows ``first[j]:first[j+1]``
    of scale ``s`` (Morton order keeps siblings adjacent).
    """

    parent: np.ndarray   # (N_s,) parent row at s-1
    octant: np.ndarray   # (N_s,) position inside the parent cube
    first: np.ndarray    # (N_{s-1} + 1,)

    @property
    def k(self) -> np.ndarray:
        return np.diff(self.first)

    @property
    def masks(self) -> np.ndarray:
        m = np.zeros(len(self.first) - 1, dtype=np.int64)
        np.bitwise_or.at(m, self.parent, 1 << self.octant)
        return m


@dataclass
class Geometry:
    """Occupancy at every scale; ``coords[s-1]`` belongs to scale ``s``."""

    depth: int
    coords: list
    links: list = field(default_factory=list)  # links[s-1] for s >= 2; links[0] is None

    @property
    def num_scales(self) -> int:
        return len(self.coords)

    def counts(self) -> list:
        return [len(c) for c in self.coords]

    def link(self, s: int) -> ScaleLink:
        if not 2 <= s <= self.num_scales:
            raise StructuralError(f"no link for scale {s}")
        return self.links[s - 1]

    def tensor(self, s: int, attrs=None) -> SparseTensor:
        c = self.coords[s - 1]
        depth = max(s - 1, 1)
        if attrs is None:
            attrs = np.zeros((len(c), 0), dtype=np.int64)
        return SparseTensor._sorted(c, np.asarray(attrs, dtype=np.int64), morton_keys(c, depth), depth)


def link_from_coords(child_coords: np.ndarray) -> tuple:
    """Parent coordinates and the :class:`ScaleLink` for canonical-order children."""
    pc = child_coords >> 1
    n = len(pc)
    new = np.ones(n, dtype=bool)
    if n > 1:
        new[1:] = np.any(pc[1:] != pc[:-1], axis=1)
    starts = np.flatnonzero(new)
    parent = np.cumsum(new) - 1
    first = np.append(starts, n).astype(np.int64)
    return pc[starts], ScaleLink(parent.astype(np.int64), octant_indices(child_coords), first)


def geometry_from_coords(coords: np.ndarray, depth: int) -> Geometry:
    """Pool occupancy down to a single POV: ``depth + 1`` scales in total."""
    if len(coords) == 0:
        raise EmptyInputError("empty tensor")
    levels = [np.asarray(coords, dtype=np.int64)]
    links = []
    for _ in range(depth):
        pc, link = link_from_coords(levels[0])
        levels.insert(0, pc)
        links.insert(0, link)
    assert len(levels[0]) == 1
    return Geometry(depth, levels, [None] + links)


@dataclass(frozen=True)
class ParentCube:
    parent_coord: tuple
    child_indices: tuple
    k: int
    sum: tuple
    residue: tuple


@dataclass
class ScalePyramid:
    """Per-scale quantized tensors plus the pooling bookkeeping.

    ``values[s-1]`` is the ``(N_s, C)`` array of rounded values at scale ``s``;
    ``sums[s-1]`` / ``residues[s-1]`` (``s >= 2``) hold, for each parent at
    ``s - 1``, the exact child sum and ``sum mod k``.
    """

    geometry: Geometry
    values: list
    sums: list
    residues: list

    @property
    def num_scales(self) -> int:
        return self.geometry.num_scales

    @property
    def tensors(self) -> list:
        return [self.tensor(s) for s in range(1, self.num_scales + 1)]

    def tensor(self, s: int) -> SparseTensor:
        return self.geometry.tensor(s, self.values[s - 1])

    def count(self, s: int) -> int:
        return len(self.geometry.coords[s - 1])

    def cubes(self, s: int) -> Iterator[ParentCube]:
        link = self.geometry.link(s)
        pcoords = self.geometry.coords[s - 2]
        for j in range(len(pcoords)):
            a, b = link.first[j], link.first[j + 1]
            yield ParentCube(tuple(int(v) for v in pcoords[j]), tuple(range(a, b)), int(b - a),
                             tuple(int(v) for v in self.sums[s - 1][j]),
                             tuple(int(v) for v in self.residues[s - 1][j]))


def pool(values: np.ndarray, link: ScaleLink) -> tuple:
    """Child sums, rounded averages and residues for one scale transition."""
    k = link.k
    sums = np.add.reduceat(values, link.first[:-1], axis=0) if len(values) else values
    q = round_average(sums, k[:, None])
    return sums, q, np.mod(sums, k[:, None])


def build_pyramid(top: SparseTensor) -> ScalePyramid:
    if len(top) == 0:
        raise EmptyInputError("cannot build a pyramid from an empty tensor")
    geom = geometry_from_coords(top.coords, top.depth)
    S = geom.num_scales
    values = [None] * S
    sums = [None] * S
    residues = [None] * S
    values[S - 1] = np.array(top.attrs, dtype=np.int64)
    for s in range(S, 1, -1):
        sm, q, r = pool(values[s - 1], geom.link(s))
        sums[s - 1], values[s - 2], residues[s - 1] = sm, q, r
    return ScalePyramid(geom, values, sums, residues)


def unpool(pyr: ScalePyramid, s: int, exact_parent) -> tuple:
    """Fill every child at scale ``s`` with its parent's exact average.

    ``exact_parent`` is ``(sums, k)`` per parent cube; the result is the
    per-child ``(numerator, denominator)`` pair, i.e. the rational average.
    """
    link = pyr.geometry.link(s) if isinstance(pyr, ScalePyramid) else pyr.link(s)
    sums, k = exact_parent
    sums = np.asarray(sums, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    m = len(link.first) - 1
    if len(sums) != m or len(k) != m:
        raise StructuralError(f"exact averages cover {len(sums)} parents, scale {s} has {m}")
    return sums[link.parent], np.broadcast_to(k[link.parent][:, None], sums[link.parent].shape)


def as_fractions(num, den) -> list:
    return [[Fraction(int(a), int(b)) for a, b in zip(rn, rd)] for rn, rd in zip(num, den)]

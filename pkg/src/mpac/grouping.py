"""Octant groups, the remaining-mean update, and last-child inference.

Within a scale the children of every cube are visited group by group (one
group per octant position).  Once some children of a cube are known, the
still-unknown siblings are re-initialised to the exact mean of what remains
of the parent sum, and the final child of each cube is recovered without
coding anything.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import StateError
from .mode import CodecMode

GROUP_ORDER = (0, 1, 2, 3, 4, 5, 6, 7)


@dataclass(frozen=True)
class GroupSchedule:
    order: tuple
    groups: tuple  # groups[g] -> POV rows whose octant is order[g]

    def __len__(self) -> int:
        return len(self.groups)


def group_schedule(octants: np.ndarray, order=GROUP_ORDER) -> GroupSchedule:
    octants = np.asarray(octants)
    return GroupSchedule(tuple(order), tuple(np.flatnonzero(octants == o) for o in order))


@dataclass
class CubeState:
    """Coding progress of one parent cube (per-channel tuples)."""

    k: int
    exact_sum: tuple
    processed_sum: tuple
    processed_count: int = 0

    def add(self, values) -> None:
        if self.processed_count >= self.k:
            raise StateError("cube already complete")
        self.processed_sum = tuple(a + int(v) for a, v in zip(self.processed_sum, values))
        self.processed_count += 1


def update_value(cs: CubeState) -> tuple:
    """Exact mean of the children that are still unknown."""
    remaining = cs.k - cs.processed_count
    if remaining <= 0:
        raise StateError("no remaining children in cube")
    return tuple(Fraction(e - p, remaining) for e, p in zip(cs.exact_sum, cs.processed_sum))


def last_child_infer(cs: CubeState) -> tuple:
    if cs.processed_count != cs.k - 1:
        raise StateError(f"last-child inference needs {cs.k - 1} processed children, "
                         f"have {cs.processed_count}")
    return tuple(e - p for e, p in zip(cs.exact_sum, cs.processed_sum))


def coded_symbol_count(pyr, s: int, mode: CodecMode) -> int:
    """Symbols per channel that must be entropy coded at scale ``s``."""
    n = pyr.count(s)
    if mode.cross_group:
        return n - pyr.count(s - 1)
    k = pyr.geometry.link(s).k
    return int(n - np.count_nonzero(k == 1))


class ScaleState:
    """Vectorised :class:`CubeState` bookkeeping for every cube of one scale.

    ``known[i, c]`` marks child attributes already decoded or inferred;
    ``value`` holds those integers.  Everything stays in exact integer
    arithmetic; :meth:`best_known` is the only place floats appear.
    """

    def __init__(self, link, exact_sums: np.ndarray):
        self.parent = link.parent
        self.octant = link.octant
        self.k = link.k.astype(np.int64)
        self.exact = np.asarray(exact_sums, dtype=np.int64)
        n, c = len(self.parent), self.exact.shape[1]
        self.proc_sum = np.zeros_like(self.exact)
        self.proc_cnt = np.zeros((len(self.k), c), dtype=np.int64)
        self.known = np.zeros((n, c), dtype=bool)
        self.value = np.zeros((n, c), dtype=np.int64)
        self.infer_forced()

    @property
    def channels(self) -> int:
        return self.exact.shape[1]

    def remaining(self) -> np.ndarray:
        return self.k[:, None] - self.proc_cnt

    def update_numden(self) -> tuple:
        """Per-child rational update value (numerator, denominator) for unknown children."""
        rem = self.remaining()
        num = (self.exact - self.proc_sum)[self.parent]
        den = rem[self.parent]
        return num, den

    def best_known(self, channels=None) -> np.ndarray:
        num, den = self.update_numden()
        safe = np.where(den > 0, den, 1)
        est = num / safe
        out = np.where(self.known, self.value, est)
        return out if channels is None else out[:, list(channels)]

    def commit(self, rows: np.ndarray, channels, values: np.ndarray) -> None:
        """Record decoded ``values`` (``(len(rows), len(channels))``) then infer forced children."""
        rows = np.asarray(rows, dtype=np.int64)
        channels = list(channels)
        values = np.asarray(values, dtype=np.int64).reshape(len(rows), len(channels))
        if np.any(self.known[np.ix_(rows, channels)]):
            raise StateError("child committed twice")
        self.known[np.ix_(rows, channels)] = True
        self.value[np.ix_(rows, channels)] = values
        par = self.parent[rows]
        for j, c in enumerate(channels):
            np.add.at(self.proc_sum[:, c], par, values[:, j])
            np.add.at(self.proc_cnt[:, c], par, 1)
        self.infer_forced(channels)

    def infer_forced(self, channels=None) -> None:
        """Fill every cube that has exactly one unknown child left."""
        chans = range(self.channels) if channels is None else channels
        rem = self.remaining()
        for c in chans:
            rows = np.flatnonzero(~self.known[:, c] & (rem[self.parent, c] == 1))
            if not len(rows):
                continue
            par = self.parent[rows]
            v = self.exact[par, c] - self.proc_sum[par, c]
            self.known[rows, c] = True
            self.value[rows, c] = v
            self.proc_sum[par, c] += v
            self.proc_cnt[par, c] += 1

    def unknown_rows(self, channel: int, octant=None) -> np.ndarray:
        mask = ~self.known[:, channel]
        if octant is not None:
            mask &= self.octant == octant
        return np.flatnonzero(mask)

    def complete(self) -> bool:
        return bool(self.known.all())

    def check_conservation(self) -> bool:
        return bool(np.array_equal(self.proc_sum, self.exact)
                    and np.array_equal(self.proc_cnt, np.broadcast_to(self.k[:, None], self.proc_cnt.shape)))

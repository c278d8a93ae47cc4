import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import brute_force_neighbors, random_cloud
from mpac.errors import RangeError, StructuralError
from mpac.sparse import (SparseTensor, gather_neighbors, morton_key, morton_keys, octant_index,
                         octant_indices)


def test_morton_examples():
    assert morton_key((0, 0, 0), 4) == 0
    assert morton_key((1, 0, 0), 4) == 4
    assert morton_key((0, 1, 0), 4) == 2
    assert morton_key((0, 0, 1), 4) == 1
    assert morton_key((2, 0, 0), 4) == 32


def test_morton_range_error():
    with pytest.raises(RangeError):
        morton_key((16, 0, 0), 4)
    with pytest.raises(RangeError):
        morton_key((0, -1, 0), 4)
    with pytest.raises(RangeError):
        morton_keys(np.array([[0, 0, 16]]), 4)


def test_morton_injective_on_random_samples():
    rng = np.random.default_rng(0)
    coords = np.unique(rng.integers(0, 1 << 12, size=(100_000, 3)), axis=0)
    keys = morton_keys(coords, 12)
    assert len(np.unique(keys)) == len(coords)


@given(st.lists(st.tuples(*[st.integers(0, 1023)] * 3), min_size=1, max_size=50))
def test_morton_vectorised_matches_scalar(coords):
    arr = np.array(coords)
    assert morton_keys(arr, 10).tolist() == [morton_key(c, 10) for c in coords]


@given(st.tuples(*[st.integers(0, 255)] * 3), st.tuples(*[st.integers(0, 255)] * 3))
def test_morton_order_is_parent_major(a, b):
    # a coarser cell's key order carries over to all its descendants
    ka, kb = morton_key(a, 8), morton_key(b, 8)
    pa, pb = morton_key([v >> 1 for v in a], 7), morton_key([v >> 1 for v in b], 7)
    if pa < pb:
        assert ka < kb


def test_octant_index():
    assert octant_index((0, 0, 0)) == 0
    assert octant_index((3, 2, 5)) == 5
    kids = [(2 * 3 + dx, 2 * 1 + dy, 2 * 2 + dz) for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]
    assert sorted(octant_index(c) for c in kids) == list(range(8))
    assert octant_indices(np.array(kids)).tolist() == [octant_index(c) for c in kids]


def test_tensor_validation():
    with pytest.raises(StructuralError):
        SparseTensor([[0, 0, 0], [0, 0, 0]], [[1], [2]], 4)
    with pytest.raises(StructuralError):
        SparseTensor([[0, 0, 0]], [[1], [2]], 4)
    with pytest.raises(RangeError):
        SparseTensor([[0, 0, 0]], [[40000]], 4)
    with pytest.raises(RangeError):
        SparseTensor([[0, 0, 0]], [[0.5]], 4)
    with pytest.raises(RangeError):
        SparseTensor([[0, 0, 32]], [[1]], 4)


def test_tensor_is_read_only():
    t = SparseTensor([[1, 2, 3]], [[5]], 4)
    with pytest.raises(ValueError):
        t.attrs[0, 0] = 1


@given(st.integers(0, 10_000))
def test_canonical_order_is_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    t = random_cloud(rng, int(rng.integers(1, 200)), 6)
    perm = rng.permutation(len(t))
    u = SparseTensor(t.coords[perm], t.attrs[perm], t.depth)
    assert u == t
    assert np.all(np.diff(u.keys) > 0)


def test_index_of():
    t = SparseTensor([[1, 2, 3], [0, 0, 0], [7, 7, 7]], [[1], [2], [3]], 3)
    idx = t.index_of([[7, 7, 7], [1, 1, 1], [0, 0, 0], [9, 0, 0], [-1, 0, 0]])
    assert idx[1] == idx[3] == idx[4] == -1
    assert t.attrs[idx[0], 0] == 3 and t.attrs[idx[2], 0] == 2


def test_gather_isolated_voxel():
    t = SparseTensor([[5, 5, 5]], [[0]], 4)
    nb = gather_neighbors(t, 3)
    assert nb.row(0) == [(13, 0)]


def test_gather_pair_along_z():
    t = SparseTensor([[0, 0, 0], [0, 0, 1]], [[0], [0]], 4)
    nb = gather_neighbors(t, 3)
    # slot = (dx+1)*9 + (dy+1)*3 + (dz+1): +z is 14, -z is 12
    assert nb.row(0) == [(13, 0), (14, 1)]
    assert nb.row(1) == [(12, 0), (13, 1)]


@pytest.mark.parametrize("kernel", [1, 3, 5])
def test_gather_matches_brute_force(kernel):
    rng = np.random.default_rng(kernel)
    t = random_cloud(rng, 1000, 5, spread=12)
    nb = gather_neighbors(t, kernel)
    assert [nb.row(i) for i in range(len(t))] == brute_force_neighbors(t.coords, kernel)


@given(st.integers(0, 10_000))
def test_gather_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    t = random_cloud(rng, int(rng.integers(1, 300)), 5, spread=8)
    nb = gather_neighbors(t, 3)
    pairs = {(i, s, j) for i in range(len(t)) for s, j in nb.row(i)}
    assert all((j, nb.mirror_slot(s), i) in pairs for i, s, j in pairs)


def test_gather_bad_kernel():
    with pytest.raises(RangeError):
        gather_neighbors(SparseTensor([[0, 0, 0]], [[0]], 4), 2)


def test_take_rows_keeps_sources():
    rng = np.random.default_rng(1)
    t = random_cloud(rng, 200, 4)
    nb = gather_neighbors(t, 3)
    rows = np.array([5, 0, 17, 17, len(t) - 1])
    sub = nb.take_rows(rows)
    assert [sub.row(i) for i in range(len(rows))] == [nb.row(r) for r in rows]

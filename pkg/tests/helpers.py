"""Shared generators and brute-force oracles for the test suite."""
import numpy as np

from mpac.context import variants_for
from mpac.mode import CodecMode
from mpac.sapa import SapaModel, make_samples, train
from mpac.sparse import SparseTensor
from mpac.synth import SHAPES, TEXTURES, smooth_suite, synth_cloud

ACCEPTANCE_LINES = []  # filled by the acceptance suite, echoed in the terminal summary

RGB_MODES = ("cs", "cs+cg", "cs+cg+cc", "cs+cg+cc+seq")
GRAY_MODES = ("cs", "cs+cg")


def random_cloud(rng, n, depth, channels=3, hi=255, lo=0, spread=None):
    """``n`` distinct random voxels (fewer if the grid is too small) with random attributes."""
    grid = 1 << depth
    spread = grid if spread is None else min(spread, grid)
    n = min(n, spread ** 3)
    keys = rng.choice(spread ** 3, size=n, replace=False) if spread ** 3 < 4 * n else \
        np.unique(rng.integers(0, spread ** 3, size=n))
    coords = np.stack([keys // (spread * spread), (keys // spread) % spread, keys % spread], axis=1)
    attrs = rng.integers(lo, hi + 1, size=(len(coords), channels))
    return SparseTensor(coords, attrs, depth)


def _size_for(shape, n):
    # rough surface areas in voxels for a shape of extent ``size``
    area = {"sphere": np.pi, "box": 3.4, "torus": 2.5, "perlin-surface": 1.1}[shape]
    return max(4.0, float(np.sqrt(n / area)))


def fuzz_cloud(seed):
    """One cloud of the losslessness fuzz: 1e2..1e5 POVs, depth 6..10, RGB or single channel."""
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(6, 11))
    grid = 1 << depth
    # log-uniform sizes skewed toward small clouds keep the total runtime bounded
    target = int(10 ** (2 + 3 * rng.uniform() ** 1.7))
    if seed % 50 == 0:
        target = 100_000
    channels = 1 if rng.uniform() < 0.3 else 3
    if rng.uniform() < 0.25:
        hi = 255 if channels == 3 else int(rng.choice([255, 4095]))
        spread = int(np.ceil(target ** (1 / 3) * rng.uniform(1.0, 2.5)))
        t = random_cloud(rng, target, depth, channels, hi=hi, spread=spread)
    else:
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        texture = TEXTURES[int(rng.integers(len(TEXTURES)))]
        size = min(_size_for(shape, target), grid - 1)
        t = synth_cloud(int(rng.integers(1 << 30)), shape, depth, texture, size=size, channels=channels)
    if len(t) > 100_000:
        keep = np.sort(rng.choice(len(t), 100_000, replace=False))
        t = SparseTensor._sorted(t.coords[keep], t.attrs[keep], t.keys[keep], t.depth)
    if len(t) < 100:
        extra = random_cloud(rng, 200, depth, t.attrs.shape[1], hi=int(t.attrs.max()) or 1)
        coords = np.concatenate([t.coords, extra.coords])
        attrs = np.concatenate([t.attrs, extra.attrs])
        _, first = np.unique(coords, axis=0, return_index=True)
        t = SparseTensor(coords[first], attrs[first], depth)
    return t


def modes_for(t):
    return RGB_MODES if t.attrs.shape[1] == 3 else GRAY_MODES


def all_variants(channels):
    modes = RGB_MODES if channels == 3 else GRAY_MODES
    return sorted({k for m in modes for k in variants_for(CodecMode.parse(m), channels)})


def train_small_model(steps=30, seed=0):
    """Width-8, one-block network with variants for every RGB and gray mode."""
    keys = all_variants(3) + all_variants(1)
    model = SapaModel.initialize(keys, width=8, blocks=1, seed=seed)
    rgb = smooth_suite(seed, 4, depth=6, size=20)
    gray = [synth_cloud(seed + i, SHAPES[i], 6, "gradient", size=20, channels=1) for i in range(2)]
    samples = [s for m in RGB_MODES for t in rgb for s in make_samples(t, CodecMode.parse(m))]
    samples += [s for m in GRAY_MODES for t in gray for s in make_samples(t, CodecMode.parse(m))]
    train(model, samples, steps, lr=1e-2, batch=len(keys), seed=seed)
    return model


def brute_force_neighbors(coords, kernel):
    r = kernel // 2
    index = {tuple(c): i for i, c in enumerate(coords.tolist())}
    out = []
    for c in coords.tolist():
        row = []
        slot = 0
        for dx in range(-r, r + 1):
            for dy in range(-r, r + 1):
                for dz in range(-r, r + 1):
                    j = index.get((c[0] + dx, c[1] + dy, c[2] + dz))
                    if j is not None:
                        row.append((slot, j))
                    slot += 1
        out.append(row)
    return out


def brute_force_cubes(coords, attrs):
    """Parent coordinate -> (children attrs list) by direct grouping."""
    groups = {}
    for c, a in zip(coords.tolist(), attrs.tolist()):
        groups.setdefault(tuple(v >> 1 for v in c), []).append(a)
    return groups

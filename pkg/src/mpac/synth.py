"""Procedural colored point clouds for training and evaluation.

Shapes are sampled as thin surfaces and voxelized; colors are evaluated at
voxel centers so that smooth textures stay smooth after voxelization.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, ParseError
from .sparse import SparseTensor

SHAPES = ("sphere", "box", "torus", "perlin-surface")
TEXTURES = ("gradient", "checker", "image-projection")


# --- PPM rasters ----------------------------------------------------------------

def write_ppm(path, img) -> None:
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a P6 (binary) or P3 (ASCII) 8-bit PPM into an ``(H, W, 3)`` uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated PPM header", offset=pos)
        tokens.append(data[start:pos])
    magic = tokens[0]
    try:
        w, h, maxval = (int(v) for v in tokens[1:])
    except ValueError:
        raise ParseError(f"{path}: bad PPM header", offset=pos) from None
    if magic not in (b"P6", b"P3") or maxval != 255 or w <= 0 or h <= 0:
        raise ParseError(f"{path}: only 8-bit P3/P6 PPM is supported", offset=0)
    if magic == b"P6":
        body = data[pos + 1:pos + 1 + 3 * w * h]
        if len(body) != 3 * w * h:
            raise ParseError(f"{path}: truncated pixel data", offset=len(data))
        arr = np.frombuffer(body, dtype=np.uint8)
    else:
        try:
            arr = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise ParseError(f"{path}: bad ASCII pixel data", offset=pos) from None
        if len(arr) != 3 * w * h or arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
            raise ParseError(f"{path}: bad ASCII pixel data", offset=pos)
        arr = arr.astype(np.uint8)
    return arr.reshape(h, w, 3).copy()


def default_image(seed: int = 0, size: int = 128) -> np.ndarray:
    """A smooth procedural picture with a few hard edges, used when no raster is given."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / size
    img = np.empty((size, size, 3))
    for c in range(3):
        fx, fy, ph = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)
        img[..., c] = 128 + 90 * np.sin(2 * np.pi * (fx * x + fy * y) + ph)
    cx, cy, r = rng.uniform(0.3, 0.7, 2).tolist() + [rng.uniform(0.1, 0.25)]
    disk = (x - cx) ** 2 + (y - cy) ** 2 < r * r
    img[disk] = rng.integers(0, 256, 3)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# --- value noise for the height field -------------------------------------------------

def _value_noise(rng, x, y, cell: float, octaves: int = 3):
    out = np.zeros_like(x)
    amp = 1.0
    for _ in range(octaves):
        n = int(np.ceil(max(x.max(), y.max()) / cell)) + 2
        lattice = rng.uniform(-1, 1, (n + 1, n + 1))
        gx, gy = x / cell, y / cell
        ix, iy = np.floor(gx).astype(int), np.floor(gy).astype(int)
        fx, fy = gx - ix, gy - iy
        sx, sy = fx * fx * (3 - 2 * fx), fy * fy * (3 - 2 * fy)
        a = lattice[ix, iy] * (1 - sx) + lattice[ix + 1, iy] * sx
        b = lattice[ix, iy + 1] * (1 - sx) + lattice[ix + 1, iy + 1] * sx
        out += amp * (a * (1 - sy) + b * sy)
        amp *= 0.5
        cell *= 0.5
    return out


# --- surfaces ---------------------------------------------------------------------

def _grid(n0: float, n1: float, step: float = 0.5):
    u = np.arange(0.0, n0, step)
    v = np.arange(0.0, n1, step)
    return np.meshgrid(u, v, indexing="ij")


def _surface(rng, shape: str, size: float) -> np.ndarray:
    """Surface samples (roughly two per voxel edge) inside ``[0, size]^3``."""
    if shape == "sphere":
        r = size / 2 - 1
        nt = int(np.ceil(np.pi * r * 2)) + 1
        th = np.linspace(0, np.pi, nt)
        pts = []
        for t in th:
            m = max(int(np.ceil(2 * np.pi * r * np.sin(t) * 2)), 1)
            ph = np.linspace(0, 2 * np.pi, m, endpoint=False)
            pts.append(np.stack([np.sin(t) * np.cos(ph), np.sin(t) * np.sin(ph), np.full(m, np.cos(t))], 1))
        return np.concatenate(pts) * r + size / 2
    if shape == "box":
        dims = rng.uniform(0.5, 1.0, 3) * (size - 1)
        faces = []
        for ax in range(3):
            a, b = [i for i in range(3) if i != ax]
            u, v = _grid(dims[a], dims[b])
            for side in (0.0, dims[ax]):
                p = np.empty((u.size, 3))
                p[:, a], p[:, b], p[:, ax] = u.ravel(), v.ravel(), side
                faces.append(p)
        return np.concatenate(faces) + (size - dims) / 2
    if shape == "torus":
        R = size * 0.3
        r = size * 0.5 - R - 1
        nu = int(np.ceil(2 * np.pi * (R + r) * 2))
        nv = int(np.ceil(2 * np.pi * r * 2)) + 1
        u, v = np.meshgrid(np.linspace(0, 2 * np.pi, nu, endpoint=False),
                           np.linspace(0, 2 * np.pi, nv, endpoint=False), indexing="ij")
        x = (R + r * np.cos(v)) * np.cos(u)
        y = (R + r * np.cos(v)) * np.sin(u)
        z = r * np.sin(v)
        p = np.stack([x.ravel(), y.ravel(), z.ravel()], 1)
        return p + np.array([size / 2, size / 2, size / 2])
    if shape == "perlin-surface":
        x, y = _grid(size - 1, size - 1)
        h = _value_noise(rng, x, y, cell=max(size / 3, 2.0))
        z = (size - 1) / 2 + h * (size - 1) / 5
        return np.stack([x.ravel(), y.ravel(), np.clip(z.ravel(), 0, size - 1)], 1)
    raise ConfigError(f"unknown shape {shape!r}; expected one of {SHAPES}")


def _texture(rng, texture: str, c: np.ndarray, size: float, image=None) -> np.ndarray:
    p = c.astype(np.float64)
    if texture == "gradient":
        # |slope|_1 <= 1 colour unit per voxel per channel, so neighbours differ by at most 2 after rounding
        slope = rng.dirichlet(np.ones(3), 3) * rng.choice([-1.0, 1.0], (3, 3)) * min(1.0, 200.0 / max(size, 1))
        base = rng.uniform(28, 228, 3)
        center = p.mean(axis=0)
        col = base + (p - center) @ slope.T
        return np.clip(np.rint(col), 0, 255).astype(np.int64)
    if texture == "checker":
        period = int(rng.integers(4, 17))
        a, b = rng.integers(0, 256, (2, 3))
        parity = (np.floor(p / period).astype(np.int64).sum(axis=1) & 1).astype(bool)
        return np.where(parity[:, None], a, b).astype(np.int64)
    if texture == "image-projection":
        img = default_image(int(rng.integers(1 << 30))) if image is None else np.asarray(image, dtype=np.uint8)
        ax = int(rng.integers(3))
        a, b = [i for i in range(3) if i != ax]
        lo = p.min(axis=0)
        span = max(float((p.max(axis=0) - lo).max()), 1.0)
        h, w = img.shape[:2]
        iy = np.clip(((p[:, a] - lo[a]) / span * (h - 1)).round().astype(int), 0, h - 1)
        ix = np.clip(((p[:, b] - lo[b]) / span * (w - 1)).round().astype(int), 0, w - 1)
        return img[iy, ix].astype(np.int64)
    raise ConfigError(f"unknown texture {texture!r}; expected one of {TEXTURES}")


def synth_cloud(seed: int = 0, shape: str = "sphere", depth: int = 8, texture: str = "gradient",
                size=None, image=None, channels: int = 3) -> SparseTensor:
    """Deterministic textured surface cloud.

    ``size`` is the shape's extent in voxels (default: the grid, capped so the
    cloud stays around 10^5 POVs or fewer).  ``channels=1`` keeps only a
    luma-like channel, standing in for reflectance.
    """
    if shape not in SHAPES:
        raise ConfigError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    if texture not in TEXTURES:
        raise ConfigError(f"unknown texture {texture!r}; expected one of {TEXTURES}")
    if not 2 <= depth <= 16:
        raise ConfigError("depth must be in [2, 16]")
    grid = 1 << depth
    if size is None:
        size = min(grid - 1, 160)
    size = float(min(max(size, 3), grid - 1))
    rng = np.random.default_rng([seed, SHAPES.index(shape), TEXTURES.index(texture), depth])
    pts = _surface(rng, shape, size)
    offset = rng.integers(0, int(grid - size) + 1, 3) if grid - size >= 1 else np.zeros(3, dtype=int)
    vox = np.unique(np.clip(np.floor(pts).astype(np.int64) + offset, 0, grid - 1), axis=0)
    colors = _texture(rng, texture, vox, size, image)
    if channels == 1:
        colors = (colors @ np.array([1, 2, 1]) + 2) // 4
        colors = colors[:, None]
    elif channels != 3:
        raise ConfigError("channels must be 1 or 3")
    return SparseTensor(vox, colors, depth)


def crop(t: SparseTensor, lo, size: int) -> SparseTensor:
    """POVs inside the axis-aligned cube ``[lo, lo + size)``."""
    lo = np.asarray(lo, dtype=np.int64)
    keep = np.all((t.coords >= lo) & (t.coords < lo + size), axis=1)
    return SparseTensor._sorted(t.coords[keep], t.attrs[keep], t.keys[keep], t.depth)


def smooth_suite(seed: int = 0, count: int = 4, depth: int = 7, size=None) -> list:
    """Gradient-textured clouds over every shape, for training and ablations."""
    return [synth_cloud(seed + i, SHAPES[i % len(SHAPES)], depth, "gradient", size) for i in range(count)]

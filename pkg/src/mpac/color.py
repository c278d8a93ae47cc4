"""Reversible YCoCg-R lifting transform for 8-bit RGB."""
from __future__ import annotations

import numpy as np

from .errors import RangeError


def rgb_to_ycocg_r(rgb):
    """Forward lifting on an ``(..., 3)`` integer array (or a single triple).

    Y lands in [0, 255]; Co and Cg in [-255, 255].
    """
    a = np.asarray(rgb, dtype=np.int64)
    if a.shape[-1] != 3:
        raise RangeError("expected RGB triples")
    if a.size and (a.min() < 0 or a.max() > 255):
        raise RangeError("RGB components must be in [0, 255]")
    r, g, b = a[..., 0], a[..., 1], a[..., 2]
    co = r - b
    t = b + (co >> 1)
    cg = g - t
    y = t + (cg >> 1)
    out = np.stack([y, co, cg], axis=-1)
    return tuple(int(v) for v in out) if out.ndim == 1 else out


def ycocg_r_to_rgb(ycocg):
    a = np.asarray(ycocg, dtype=np.int64)
    if a.shape[-1] != 3:
        raise RangeError("expected YCoCg triples")
    y, co, cg = a[..., 0], a[..., 1], a[..., 2]
    t = y - (cg >> 1)
    g = cg + t
    b = t - (co >> 1)
    r = b + co
    out = np.stack([r, g, b], axis=-1)
    if out.size and (out.min() < 0 or out.max() > 255):
        raise RangeError("YCoCg triple does not map back into 8-bit RGB")
    return tuple(int(v) for v in out) if out.ndim == 1 else out

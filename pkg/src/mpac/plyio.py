"""PLY reading/writing (ASCII and binary) and voxelization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ParseError, RangeError
from .sparse import SparseTensor

_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_FORMATS = {"ascii": None, "binary_little_endian": "<", "binary_big_endian": ">"}
_RGB_NAMES = (("red", "green", "blue"), ("r", "g", "b"), ("diffuse_red", "diffuse_green", "diffuse_blue"))
_SCALAR_NAMES = ("reflectance", "intensity", "scalar_reflectance", "scalar_intensity")


@dataclass
class PlyCloud:
    """Point positions plus optional integer colors ``(N, 3)`` or reflectance ``(N, 1)``."""

    positions: np.ndarray
    colors: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def channels(self) -> int:
        return 0 if self.colors is None else self.colors.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PlyCloud):
            return NotImplemented
        if not np.array_equal(self.positions, other.positions):
            return False
        if self.colors is None or other.colors is None:
            return self.colors is None and other.colors is None
        return np.array_equal(self.colors, other.colors)


def _parse_header(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("missing ply magic or end_header", line=1)
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    try:
        lines = data[:end].decode("ascii").splitlines()
    except UnicodeDecodeError:
        raise ParseError("non-ASCII bytes in header", offset=0) from None
    fmt = None
    elements = []  # [name, count, [(prop, dtype)]]
    for no, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            if len(parts) != 3 or parts[1] not in _FORMATS:
                raise ParseError(f"unsupported format line {raw!r}", line=no)
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise ParseError(f"bad element line {raw!r}", line=no)
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before any element", line=no)
            if len(parts) >= 2 and parts[1] == "list":
                if len(parts) != 5 or parts[2] not in _TYPES or parts[3] not in _TYPES:
                    raise ParseError(f"bad list property {raw!r}", line=no)
                elements[-1][2].append((parts[4], ("list", parts[2], parts[3])))
                continue
            if len(parts) != 3 or parts[1] not in _TYPES:
                raise ParseError(f"unsupported property {raw!r}", line=no)
            elements[-1][2].append((parts[2], _TYPES[parts[1]]))
        else:
            raise ParseError(f"unexpected header keyword {parts[0]!r}", line=no)
    if fmt is None:
        raise ParseError("missing format line", line=2)
    return fmt, elements, body_start, len(lines) + 1


def _pick_columns(props, table, where):
    names = [p for p, _ in props]
    for n in "xyz":
        if n not in names:
            raise ParseError(f"vertex element lacks property {n!r}", line=where)
    pos = np.stack([table[n].astype(np.float64) for n in "xyz"], axis=1)
    colors = None
    for trio in _RGB_NAMES:
        if all(n in names for n in trio):
            colors = np.stack([table[n] for n in trio], axis=1).astype(np.int64)
            break
    if colors is None:
        for n in _SCALAR_NAMES:
            if n in names:
                colors = table[n].astype(np.int64)[:, None]
                break
    if not np.all(np.isfinite(pos)):
        raise ParseError("non-finite vertex position", line=where)
    return PlyCloud(pos, colors)


def read_ply(path) -> PlyCloud:
    with open(path, "rb") as f:
        data = f.read()
    return parse_ply(data)


def parse_ply(data: bytes) -> PlyCloud:
    fmt, elements, pos, header_lines = _parse_header(data)
    if not elements or all(e[0] != "vertex" for e in elements):
        raise ParseError("no vertex element", line=header_lines)
    if fmt == "ascii":
        text = data[pos:].decode("ascii", errors="replace").splitlines()
        row = 0
        for name, count, props in elements:
            if name != "vertex":
                row += count  # every non-vertex record sits on its own line
                continue
            if any(isinstance(t, tuple) for _, t in props):
                raise ParseError("list properties on vertices are unsupported", line=header_lines)
            if row + count > len(text):
                raise ParseError(f"expected {count} vertices, file ends early",
                                 line=header_lines + len(text) + 1)
            table = {p: np.empty(count, dtype=t) for p, t in props}
            for i in range(count):
                fields = text[row + i].split()
                line = header_lines + row + i + 1
                if len(fields) != len(props):
                    raise ParseError(f"expected {len(props)} values, got {len(fields)}", line=line)
                for (p, t), v in zip(props, fields):
                    try:
                        val = float(v) if t[0] == "f" else int(v)
                    except ValueError:
                        raise ParseError(f"bad value {v!r} for {p}", line=line) from None
                    if t[0] != "f":
                        info = np.iinfo(t)
                        if not info.min <= val <= info.max:
                            raise ParseError(f"value {v} out of range for {p}", line=line)
                    table[p][i] = val
            return _pick_columns(props, table, header_lines)
    endian = _FORMATS[fmt]
    for name, count, props in elements:
        if any(isinstance(t, tuple) for _, t in props):
            if name == "vertex":
                raise ParseError("list properties on vertices are unsupported", offset=pos)
            raise ParseError(f"cannot skip binary list element {name!r} before the vertices", offset=pos)
        dtype = np.dtype([(p, endian + t) for p, t in props])
        need = dtype.itemsize * count
        if pos + need > len(data):
            raise ParseError(f"element {name!r} truncated: need {need} bytes, have {len(data) - pos}",
                             offset=len(data))
        if name == "vertex":
            table = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
            return _pick_columns(props, {p: table[p] for p, _ in props}, header_lines)
        pos += need
    raise ParseError("no vertex element", offset=pos)


def write_ply(path, cloud: PlyCloud, binary: bool = False) -> None:
    pos = np.asarray(cloud.positions, dtype=np.float64)
    integral = np.all(pos == np.round(pos)) and (pos.size == 0 or np.abs(pos).max() < 2 ** 31)
    ptype = "int" if integral else "double"
    props = [(n, ptype) for n in "xyz"]
    cols = []
    if cloud.colors is not None:
        c = np.asarray(cloud.colors, dtype=np.int64)
        if c.shape[1] == 3:
            if c.size and (c.min() < 0 or c.max() > 255):
                raise RangeError("RGB colors must be in [0, 255]")
            props += [(n, "uchar") for n in ("red", "green", "blue")]
        elif c.shape[1] == 1:
            if c.size and (c.min() < 0 or c.max() > 65535):
                raise RangeError("reflectance must be in [0, 65535]")
            props.append(("reflectance", "uchar" if c.size == 0 or c.max() <= 255 else "ushort"))
        else:
            raise RangeError("colors must have 1 or 3 channels")
        cols = [c[:, i] for i in range(c.shape[1])]
    head = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
            f"element vertex {len(pos)}"] + [f"property {t} {n}" for n, t in props] + ["end_header"]
    columns = [pos[:, i] for i in range(3)] + cols
    with open(path, "wb") as f:
        f.write(("\n".join(head) + "\n").encode("ascii"))
        if binary:
            rec = np.empty(len(pos), dtype=np.dtype([(n, "<" + _TYPES[t]) for n, t in props]))
            for (n, _), col in zip(props, columns):
                rec[n] = col
            f.write(rec.tobytes())
        else:
            cols_txt = [col.astype(np.int64).astype(str) if t != "double" else np.char.mod("%.17g", col)
                        for (_, t), col in zip(props, columns)]
            if len(pos):
                f.write(("\n".join(" ".join(r) for r in zip(*cols_txt)) + "\n").encode("ascii"))


def voxelize(pc: PlyCloud, depth: int = 10) -> SparseTensor:
    """Quantize positions onto a ``2**depth`` grid, merging duplicates by rounded mean."""
    if not 4 <= depth <= 16:
        raise RangeError(f"depth must be in [4, 16], got {depth}")
    if len(pc) == 0:
        raise EmptyInputError("empty point cloud")
    pos = np.asarray(pc.positions, dtype=np.float64)
    attrs = (np.zeros((len(pos), 0), dtype=np.int64) if pc.colors is None
             else np.asarray(pc.colors, dtype=np.int64))
    grid = 1 << depth
    if np.all(pos == np.floor(pos)) and pos.min() >= 0 and pos.max() < grid:
        vox = pos.astype(np.int64)
    else:
        lo = pos.min(axis=0)
        extent = float((pos.max(axis=0) - lo).max())
        scale = grid / extent if extent > 0 else 0.0
        vox = np.clip(np.floor((pos - lo) * scale), 0, grid - 1).astype(np.int64)
    uniq, inv, counts = np.unique(vox, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if len(uniq) == len(vox):
        return SparseTensor(vox, attrs, depth)
    sums = np.zeros((len(uniq), attrs.shape[1]), dtype=np.int64)
    np.add.at(sums, inv, attrs)
    n = counts[:, None]
    return SparseTensor(uniq, np.floor_divide(2 * sums + n, 2 * n), depth)


def tensor_to_ply(t: SparseTensor) -> PlyCloud:
    colors = np.array(t.attrs) if t.attrs.shape[1] else None
    return PlyCloud(t.coords.astype(np.float64), colors)

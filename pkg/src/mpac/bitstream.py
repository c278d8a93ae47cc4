"""Container layout: header, section table, raw geometry masks, stream framing.

All multi-byte integers are little-endian.  A file is::

    header | u32 geometry_len | u32 residue_len | u32 attribute_len | sections

The attribute section is a sequence of ``u32 length + payload`` frames.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptStreamError
from .pyramid import Geometry, link_from_coords
from .sparse import MAX_DEPTH

MAGIC = b"MPAC"
VERSION = 1


def put_varint(out: bytearray, v: int) -> None:
    if v < 0:
        raise ValueError("varint must be non-negative")
    while True:
        byte = v & 0x7F
        v >>= 7
        if v:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def get_varint(data, pos: int) -> tuple:
    v, shift = 0, 0
    while True:
        if pos >= len(data):
            raise CorruptStreamError("truncated varint", "header")
        byte = data[pos]
        pos += 1
        v |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return v, pos
        shift += 7
        if shift > 63:
            raise CorruptStreamError("varint too long", "header")


@dataclass
class Header:
    flags: int
    channels: int
    colorspace: int
    depth: int
    counts: list          # POV count per scale, scale 1 first
    bounds: list          # [(lo, hi)] per channel
    model_hash: int
    root: list            # root attribute per channel
    version: int = VERSION

    @property
    def num_scales(self) -> int:
        return len(self.counts)

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC)
        out += struct.pack("<5B", self.version, self.flags, self.channels, self.colorspace, self.depth)
        for n in self.counts:
            put_varint(out, n)
        for lo, hi in self.bounds:
            out += struct.pack("<hh", lo, hi)
        out += struct.pack("<Q", self.model_hash)
        out += struct.pack(f"<{self.channels}h", *self.root)
        return bytes(out)

    @classmethod
    def parse(cls, data) -> tuple:
        """Decode a header; returns ``(header, position after it)``."""
        if len(data) < 9 or bytes(data[:4]) != MAGIC:
            raise CorruptStreamError("not an MPAC bitstream", "header")
        version, flags, channels, colorspace, depth = struct.unpack_from("<5B", data, 4)
        if version != VERSION:
            raise CorruptStreamError(f"unsupported version {version}", "header")
        if channels not in (1, 3) or colorspace not in (0, 1) or not 1 <= depth <= MAX_DEPTH:
            raise CorruptStreamError("invalid header fields", "header")
        pos = 9
        counts = []
        for _ in range(depth + 1):
            n, pos = get_varint(data, pos)
            counts.append(n)
        if counts[0] != 1 or any(b < a or b > 8 * a for a, b in zip(counts, counts[1:])):
            raise CorruptStreamError("inconsistent POV counts", "header")
        try:
            bounds = [struct.unpack_from("<hh", data, pos + 4 * c) for c in range(channels)]
            pos += 4 * channels
            (model_hash,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            root = list(struct.unpack_from(f"<{channels}h", data, pos))
            pos += 2 * channels
        except struct.error:
            raise CorruptStreamError("truncated header", "header") from None
        if any(lo > hi for lo, hi in bounds):
            raise CorruptStreamError("empty attribute alphabet", "header")
        return cls(flags, channels, colorspace, depth, counts, [tuple(b) for b in bounds],
                   model_hash, root, version), pos


def pack_sections(header: bytes, sections) -> bytes:
    table = struct.pack("<3I", *(len(s) for s in sections))
    return header + table + b"".join(sections)


def split_sections(data, pos: int) -> list:
    try:
        lengths = struct.unpack_from("<3I", data, pos)
    except struct.error:
        raise CorruptStreamError("truncated section table", "header") from None
    pos += 12
    if pos + sum(lengths) != len(data):
        raise CorruptStreamError(f"section lengths {lengths} do not match the {len(data) - pos} bytes present",
                                 "section table")
    out = []
    for n in lengths:
        out.append(bytes(data[pos:pos + n]))
        pos += n
    return out


def frame(payloads) -> bytes:
    return b"".join(struct.pack("<I", len(p)) + bytes(p) for p in payloads)


class FrameReader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def next(self, location) -> bytes:
        if self.pos + 4 > len(self.data):
            raise CorruptStreamError("missing stream frame", location)
        (n,) = struct.unpack_from("<I", self.data, self.pos)
        self.pos += 4
        if self.pos + n > len(self.data):
            raise CorruptStreamError("stream frame overruns the section", location)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def done(self) -> None:
        if self.pos != len(self.data):
            raise CorruptStreamError("unused bytes after the last stream", "attributes")


# --- geometry -------------------------------------------------------------------

_CHILD = np.array([[(i >> 2) & 1, (i >> 1) & 1, i & 1] for i in range(8)], dtype=np.int64)


def serialize_geometry(geom: Geometry) -> bytes:
    """One occupancy byte per parent per scale transition (bit ``i`` = octant ``i``)."""
    return b"".join(geom.link(s).masks.astype(np.uint8).tobytes() for s in range(2, geom.num_scales + 1))


def deserialize_geometry(data: bytes, depth: int, counts=None) -> Geometry:
    """Rebuild the occupancy of every scale starting from the root at the origin."""
    buf = np.frombuffer(data, dtype=np.uint8)
    coords = [np.zeros((1, 3), dtype=np.int64)]
    links = [None]
    pos = 0
    for s in range(2, depth + 2):
        parents = coords[-1]
        m = len(parents)
        if pos + m > len(buf):
            raise CorruptStreamError("geometry section truncated", f"geometry scale {s}")
        masks = buf[pos:pos + m]
        pos += m
        if np.any(masks == 0):
            raise CorruptStreamError("occupancy mask with no children", f"geometry scale {s}")
        bits = ((masks[:, None] >> np.arange(8)) & 1).astype(bool)
        par, octs = np.nonzero(bits)  # row-major: parents in order, octants ascending
        child = 2 * parents[par] + _CHILD[octs]
        if counts is not None and len(child) != counts[s - 1]:
            raise CorruptStreamError("occupancy disagrees with the header POV count", f"geometry scale {s}")
        _, link = link_from_coords(child)
        coords.append(child)
        links.append(link)
    if pos != len(buf):
        raise CorruptStreamError("trailing geometry bytes", "geometry")
    return Geometry(depth, coords, links)

"""Encoder and decoder orchestration over scales, groups and color channels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import entropy
from .bitstream import (FrameReader, Header, deserialize_geometry, frame, pack_sections,
                        serialize_geometry, split_sections)
from .color import rgb_to_ycocg_r, ycocg_r_to_rgb
from .context import RAW, YCOCG, plan_steps, step_inputs, step_rows, variants_for
from .errors import ConfigError, CorruptStreamError, ModelMismatchError, RangeError
from .grouping import ScaleState
from .mode import CodecMode
from .pyramid import build_pyramid, reconstruct_sums
from .sapa import AnalyticFallback, SapaModel, nbr_tables
from .sparse import SparseTensor

__all__ = ["encode", "decode", "EncodeResult", "StreamStat", "channel_bounds",
           "rgb_to_ycocg_r", "ycocg_r_to_rgb", "choose_colorspace", "read_header"]


@dataclass(frozen=True)
class StreamStat:
    scale: int
    stage: str
    channel: int
    symbols: int
    nbytes: int      # payload bytes (without the u32 frame)
    bits_p: float    # ideal code length under the floored model
    bits_q: float    # ideal code length under the quantised CDFs

    @property
    def bits(self) -> int:
        return 8 * self.nbytes


@dataclass
class EncodeResult:
    data: bytes
    header_bytes: int
    geometry_bytes: int
    residue_bytes: int
    attribute_bytes: int
    points: int
    streams: list = field(default_factory=list)
    symbols: dict = field(default_factory=dict)   # (scale, channel) -> coded symbols
    residue_bits: float = 0.0

    @property
    def geom_bits(self) -> int:
        return 8 * self.geometry_bytes

    @property
    def attr_bits(self) -> int:
        """Everything except the raw geometry masks."""
        return 8 * (len(self.data) - self.geometry_bytes)

    @property
    def bpp(self) -> float:
        return self.attr_bits / self.points

    def coded_symbols(self, s: int, channel: int = 0) -> int:
        return self.symbols.get((s, channel), 0)


def channel_bounds(attrs) -> list:
    attrs = np.asarray(attrs)
    return [(int(attrs[:, c].min()), int(attrs[:, c].max())) for c in range(attrs.shape[1])]


def choose_colorspace(attrs, colorspace=None) -> int:
    if colorspace in ("raw", RAW):
        return RAW
    attrs = np.asarray(attrs)
    rgb_ok = attrs.shape[1] == 3 and (attrs.size == 0 or (attrs.min() >= 0 and attrs.max() <= 255))
    if colorspace in ("ycocg", YCOCG):
        if not rgb_ok:
            raise ConfigError("YCoCg-R needs 3-channel 8-bit attributes")
        return YCOCG
    if colorspace not in (None, "auto"):
        raise ConfigError(f"unknown colorspace {colorspace!r}")
    return YCOCG if rgb_ok else RAW


def _resolve(mode, channels: int, model) -> tuple:
    if isinstance(mode, str):
        mode = CodecMode.parse(mode)
    if channels not in (1, 3):
        raise ConfigError(f"only 1- or 3-channel attributes are supported, got {channels}")
    mode = mode.effective(channels)
    mode.check_channels(channels)
    if model is None:
        raise ConfigError("no probability model given (pass a SapaModel or AnalyticFallback)")
    if not model.supports(variants_for(mode, channels)):
        raise ConfigError(f"model lacks variants for mode {mode.name} with {channels} channel(s)")
    return mode, model


def _residue_symbols(k, residues):
    ks = np.repeat(k, residues.shape[1]).astype(np.int64)
    return ks, residues.reshape(-1).astype(np.int64)


def encode(t: SparseTensor, mode="cs+cg", model=None, colorspace=None) -> EncodeResult:
    """Compress the attributes (and raw geometry) of ``t``."""
    if model is None:
        model = AnalyticFallback()
    channels = t.attrs.shape[1]
    mode, model = _resolve(mode, channels, model)
    cs = choose_colorspace(t.attrs, colorspace)
    attrs = rgb_to_ycocg_r(t.attrs) if cs == YCOCG else np.asarray(t.attrs, dtype=np.int64)
    top = t.with_attrs(attrs)
    pyr = build_pyramid(top)
    bounds = channel_bounds(attrs)
    S = pyr.num_scales
    header = Header(mode.flags, channels, cs, t.depth, pyr.geometry.counts(), bounds,
                    model.hash, [int(v) for v in pyr.values[0][0]])

    ks, rs = [], []
    for s in range(2, S + 1):
        a, b = _residue_symbols(pyr.geometry.link(s).k, pyr.residues[s - 1])
        ks.append(a)
        rs.append(b)
    residue, residue_bits = entropy.encode_uniform_stream(np.concatenate(ks), np.concatenate(rs),
                                                          entropy.UNIFORM_CUM)

    payloads, stats, symbols = [], [], {}
    learned = isinstance(model, SapaModel)
    for s in range(2, S + 1):
        state = ScaleState(pyr.geometry.link(s), pyr.sums[s - 1])
        truth = pyr.values[s - 1]
        nbrs = nbr_tables(pyr.geometry.tensor(s)) if learned else None
        for step in plan_steps(mode, channels):
            rows = step_rows(state, step)
            vals = truth[np.ix_(rows, step.coded)]
            if len(rows):
                feats, base, scales = step_inputs(state, step, cs)
                fld = model.predict(step.variant, feats, nbrs, base, scales, rows)
                for j, c in enumerate(step.coded):
                    symbols[(s, c)] = symbols.get((s, c), 0) + len(rows)
                    lo, hi = bounds[c]
                    if lo == hi:
                        continue
                    data, bp, bq = entropy.encode_laplace(np.ascontiguousarray(fld.mu[:, j]),
                                                          np.ascontiguousarray(fld.b[:, j]),
                                                          lo, hi, np.ascontiguousarray(vals[:, j]))
                    payloads.append(data.tobytes())
                    stats.append(StreamStat(s, step.stage, c, len(rows), len(data), bp, bq))
            state.commit(rows, step.coded, vals)
        assert state.complete() and np.array_equal(state.value, truth)

    hb = header.to_bytes()
    geometry = serialize_geometry(pyr.geometry)
    attributes = frame(payloads)
    data = pack_sections(hb, [geometry, residue.tobytes(), attributes])
    return EncodeResult(data, len(hb) + 12, len(geometry), len(residue), len(attributes), len(t),
                        stats, symbols, float(residue_bits))


def read_header(data: bytes) -> tuple:
    """``(header, [geometry, residue, attributes])`` of a bitstream."""
    header, pos = Header.parse(data)
    return header, split_sections(data, pos)


def decode(data: bytes, model=None) -> SparseTensor:
    """Exact inverse of :func:`encode` given the same model."""
    if model is None:
        model = AnalyticFallback()
    data = bytes(data)
    header, (geo, res, att) = read_header(data)
    if header.model_hash != model.hash:
        raise ModelMismatchError(f"bitstream was coded with model {header.model_hash:016x}, "
                                 f"decoder has {model.hash:016x}", "header")
    try:
        mode = CodecMode.from_flags(header.flags)
    except ConfigError as exc:
        raise CorruptStreamError(str(exc), "header") from None
    channels, cs, bounds = header.channels, header.colorspace, header.bounds
    if mode.cross_color and channels != 3:
        raise CorruptStreamError("cross-color flag on a single-channel stream", "header")
    if not model.supports(variants_for(mode, channels)):
        raise ModelMismatchError(f"model lacks variants for mode {mode.name}", "header")
    geom = deserialize_geometry(geo, header.depth, header.counts)
    S = geom.num_scales

    ks = [_residue_symbols(geom.link(s).k, np.zeros((len(geom.coords[s - 2]), channels)))[0]
          for s in range(2, S + 1)]
    allk = np.concatenate(ks) if ks else np.zeros(0, dtype=np.int64)
    status, rall = entropy.decode_uniform_stream(np.frombuffer(res, dtype=np.uint8), allk, entropy.UNIFORM_CUM)
    entropy.check_status(status, "residues")

    values = np.array([header.root], dtype=np.int64)
    for lo_hi, v in zip(bounds, header.root):
        if not lo_hi[0] <= v <= lo_hi[1]:
            raise CorruptStreamError("root value outside the channel alphabet", "header")
    frames = FrameReader(att)
    learned = isinstance(model, SapaModel)
    off = 0
    for s in range(2, S + 1):
        link = geom.link(s)
        m = len(link.k)
        r = rall[off:off + m * channels].reshape(m, channels)
        off += m * channels
        sums = reconstruct_sums(values, r, link.k[:, None])
        state = ScaleState(link, sums)
        nbrs = nbr_tables(geom.tensor(s)) if learned else None
        for step in plan_steps(mode, channels):
            rows = step_rows(state, step)
            vals = np.zeros((len(rows), len(step.coded)), dtype=np.int64)
            if len(rows):
                feats, base, scales = step_inputs(state, step, cs)
                fld = model.predict(step.variant, feats, nbrs, base, scales, rows)
                for j, c in enumerate(step.coded):
                    lo, hi = bounds[c]
                    if lo == hi:
                        vals[:, j] = lo
                        continue
                    where = f"scale {s}, stage {step.stage}, channel {c}"
                    payload = np.frombuffer(frames.next(where), dtype=np.uint8)
                    status, out, _ = entropy.decode_laplace(payload, np.ascontiguousarray(fld.mu[:, j]),
                                                            np.ascontiguousarray(fld.b[:, j]), lo, hi, len(rows))
                    entropy.check_status(status, where)
                    vals[:, j] = out
            state.commit(rows, step.coded, vals)
        if not state.check_conservation():
            raise CorruptStreamError("child values do not add up to the parent sums", f"scale {s}")
        values = state.value
        for c, (lo, hi) in enumerate(bounds):
            if values[:, c].min() < lo or values[:, c].max() > hi:
                raise CorruptStreamError("reconstructed value outside the channel alphabet", f"scale {s}")
    frames.done()
    if cs == YCOCG:
        try:
            values = ycocg_r_to_rgb(values)
        except RangeError:
            raise CorruptStreamError("decoded YCoCg values are not valid RGB", "attributes") from None
    return geom.tensor(S, values)

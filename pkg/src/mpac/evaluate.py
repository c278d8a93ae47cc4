"""Corpus evaluation: encode, verify the round trip, report bits per point."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

from .codec import decode, encode
from .errors import MpacError
from .mode import CodecMode

COLUMNS = ("cloud", "mode", "points", "attr_bits", "bpp", "geom_bits", "enc_ms", "dec_ms")


class RoundTripError(MpacError):
    """A decoded cloud differs from its input; no numbers are reported for it."""


@dataclass
class EvalRow:
    cloud: str
    mode: str
    points: int
    attr_bits: int
    geom_bits: int
    enc_ms: float
    dec_ms: float
    header_bits: int = 0
    residue_bits: int = 0
    payload_bits: int = 0   # attribute section including u32 frames
    streams: list = field(default_factory=list)

    @property
    def bpp(self) -> float:
        return self.attr_bits / self.points

    def breakdown(self) -> dict:
        """Attribute bits per (scale, stage, channel) stream."""
        return {(s.scale, s.stage, s.channel): s.bits for s in self.streams}

    def as_dict(self) -> dict:
        return {"cloud": self.cloud, "mode": self.mode, "points": self.points, "attr_bits": self.attr_bits,
                "bpp": round(self.bpp, 6), "geom_bits": self.geom_bits,
                "enc_ms": round(self.enc_ms, 3), "dec_ms": round(self.dec_ms, 3)}


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def modes(self) -> list:
        seen = []
        for r in self.rows:
            if r.mode not in seen:
                seen.append(r.mode)
        return seen

    def mean_bpp(self, mode: str) -> float:
        vals = [r.bpp for r in self.rows if r.mode == mode]
        return sum(vals) / len(vals) if vals else float("nan")

    def table(self) -> str:
        if not self.rows:
            return "(empty report)\n"
        data = [[str(v) if not isinstance(v, float) else f"{v:.4f}" for v in r.as_dict().values()]
                for r in self.rows]
        widths = [max(len(c), *(len(d[i]) for d in data)) for i, c in enumerate(COLUMNS)]
        fmt = "  ".join("{:<%d}" % w if i < 2 else "{:>%d}" % w for i, w in enumerate(widths))
        lines = [fmt.format(*COLUMNS), fmt.format(*("-" * w for w in widths))]
        lines += [fmt.format(*d) for d in data]
        if len(self.rows) > 1:
            lines.append("")
            lines += [f"mean bpp {m}: {self.mean_bpp(m):.4f}" for m in self.modes()]
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r.as_dict())
        return buf.getvalue()

    def flag_cg_regressions(self, tolerance: float = 0.01) -> list:
        """Clouds where cs+cg costs more than cs by over ``tolerance`` (relative)."""
        cs = {r.cloud: r.bpp for r in self.rows if r.mode == "cs"}
        return [r.cloud for r in self.rows
                if r.mode == "cs+cg" and r.cloud in cs and r.bpp > cs[r.cloud] * (1 + tolerance)]


def evaluate(corpus, modes=("cs", "cs+cg"), model=None) -> EvalReport:
    """Encode every cloud in every mode, decode it and check it bit-exactly.

    ``corpus`` holds SparseTensors or ``(name, tensor)`` pairs.  Any mismatch
    raises :class:`RoundTripError` before a report is produced.
    """
    report = EvalReport()
    items = [c if isinstance(c, tuple) else (f"cloud{i}", c) for i, c in enumerate(corpus)]
    parsed = [CodecMode.parse(m) if isinstance(m, str) else m for m in modes]
    for name, t in items:
        for mode in parsed:
            eff = mode.effective(t.attrs.shape[1])
            if eff != mode and eff in parsed:
                continue  # a 1-channel cloud would repeat an already-listed mode
            t0 = time.perf_counter()
            res = encode(t, mode, model)
            t1 = time.perf_counter()
            out = decode(res.data, model)
            t2 = time.perf_counter()
            if out != t:
                raise RoundTripError(f"{name}: round trip failed in mode {mode.name}")
            report.rows.append(EvalRow(name, mode.name, len(t), res.attr_bits, res.geom_bits,
                                       1e3 * (t1 - t0), 1e3 * (t2 - t1), 8 * res.header_bytes,
                                       8 * res.residue_bytes, 8 * res.attribute_bytes, res.streams))
    return report

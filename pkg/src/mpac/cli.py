"""Command-line front end: ``mpac {encode,decode,train,eval,synth,inspect}``.

Exit codes: 0 success, 1 usage or unreadable input, 2 corrupt stream,
3 configuration error (bad mode, weights, channel count).
"""
from __future__ import annotations

import argparse
import glob
import os
import sys
import time

from . import codec
from .errors import (ConfigError, CorruptStreamError, EmptyInputError, ModelError, ParseError,
                     RangeError)
from .evaluate import evaluate
from .mode import CodecMode
from .plyio import read_ply, tensor_to_ply, voxelize, write_ply
from .sapa import AnalyticFallback, SapaModel, make_samples, train
from .synth import SHAPES, TEXTURES, read_ppm, smooth_suite, synth_cloud

EXIT_OK, EXIT_USAGE, EXIT_CORRUPT, EXIT_CONFIG = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _load_model(source: str, b0: float):
    if source == "fallback":
        return AnalyticFallback(b0)
    try:
        return SapaModel.load(source)
    except OSError as exc:
        raise ConfigError(f"cannot read weights {source!r}: {exc.strerror}") from None
    except ModelError as exc:
        raise ConfigError(f"invalid weights {source!r}: {exc}") from None


def _parse_modes(text: str) -> list:
    return [CodecMode.parse(m) for m in text.split(",") if m.strip()]


def _set_threads(n) -> None:
    if n is None:
        return
    import numba
    if n < 1:
        raise UsageError("--threads must be at least 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _read_cloud(path: str, depth: int):
    try:
        pc = read_ply(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path!r}: {exc.strerror}") from None
    if pc.colors is None:
        raise ConfigError(f"{path}: no color or reflectance property to code")
    return voxelize(pc, depth)


def _corpus(source: str, depth: int) -> list:
    if source.startswith("synth"):
        _, _, n = source.partition(":")
        return [(f"smooth{i}", t) for i, t in enumerate(smooth_suite(0, int(n or 4), depth=min(depth, 8),
                                                                      size=40))]
    files = sorted(glob.glob(os.path.join(source, "*.ply"))) if os.path.isdir(source) else [source]
    if not files or not all(os.path.exists(f) for f in files):
        raise UsageError(f"no PLY files found at {source!r}")
    return [(os.path.basename(f), _read_cloud(f, depth)) for f in files]


# --- subcommands ---------------------------------------------------------------------

def cmd_encode(a) -> int:
    t = _read_cloud(a.input, a.depth)
    model = _load_model(a.weights, a.b0)
    t0 = time.perf_counter()
    res = codec.encode(t, CodecMode.parse(a.mode), model, a.colorspace)
    ms = 1e3 * (time.perf_counter() - t0)
    with open(a.output, "wb") as f:
        f.write(res.data)
    print(f"{a.output}: {len(t)} points, {len(res.data)} bytes, attribute {res.bpp:.4f} bpp, "
          f"geometry {res.geom_bits} bits, {ms:.0f} ms")
    return EXIT_OK


def cmd_decode(a) -> int:
    model = _load_model(a.weights, a.b0)
    try:
        with open(a.input, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise UsageError(f"cannot read {a.input!r}: {exc.strerror}") from None
    t = codec.decode(data, model)
    write_ply(a.output, tensor_to_ply(t), binary=a.binary)
    print(f"{a.output}: {len(t)} points")
    return EXIT_OK


def cmd_train(a) -> int:
    modes = _parse_modes(a.modes)
    corpus = _corpus(a.corpus, a.depth)
    channels = {t.attrs.shape[1] for _, t in corpus}
    if len(channels) != 1:
        raise ConfigError("training corpus mixes 1- and 3-channel clouds")
    c = channels.pop()
    from .context import variants_for
    keys = sorted({k for m in modes for k in variants_for(m.effective(c), c)})
    model = SapaModel.initialize(keys, width=a.width, blocks=a.blocks, seed=a.seed)
    samples = [s for m in modes for _, t in corpus for s in make_samples(t, m)]
    print(f"{len(corpus)} clouds, {len(samples)} samples, {len(keys)} variants", file=sys.stderr)

    def log(i, loss):
        if a.verbose and (i % 10 == 0 or i == a.steps - 1):
            print(f"step {i:5d}  loss {loss:.1f} bits", file=sys.stderr)

    losses = train(model, samples, a.steps, lr=a.lr, batch=a.batch, seed=a.seed, log=log)
    model.save(a.out)
    first = f"{losses[0]:.1f}" if losses else "-"
    last = f"{losses[-1]:.1f}" if losses else "-"
    print(f"{a.out}: {len(keys)} variants, hash {model.hash:016x}, batch loss {first} -> {last} bits")
    return EXIT_OK


def cmd_eval(a) -> int:
    modes = _parse_modes(a.modes)
    model = _load_model(a.weights, a.b0)
    report = evaluate(_corpus(a.corpus, a.depth), modes, model)
    if a.csv:
        with open(a.csv, "w") as f:
            f.write(report.csv())
    sys.stdout.write(report.csv() if a.format == "csv" else report.table())
    for name in report.flag_cg_regressions():
        print(f"warning: cs+cg costs more than cs on {name}", file=sys.stderr)
    return EXIT_OK


def cmd_synth(a) -> int:
    image = read_ppm(a.image) if a.image else None
    t = synth_cloud(a.seed, a.shape, a.depth, a.texture, a.size, image, a.channels)
    write_ply(a.out, tensor_to_ply(t), binary=a.binary)
    print(f"{a.out}: {len(t)} points")
    return EXIT_OK


def cmd_inspect(a) -> int:
    try:
        with open(a.input, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise UsageError(f"cannot read {a.input!r}: {exc.strerror}") from None
    h, sections = codec.read_header(data)
    mode = CodecMode.from_flags(h.flags)
    print(f"magic MPAC  version {h.version}  mode {mode.name}  channels {h.channels}  "
          f"colorspace {'ycocg-r' if h.colorspace else 'raw'}  depth {h.depth}")
    print(f"model hash {h.model_hash:016x}")
    print("bounds " + " ".join(f"[{lo},{hi}]" for lo, hi in h.bounds) + "  root " +
          " ".join(str(v) for v in h.root))
    print("POV counts per scale: " + " ".join(f"{s + 1}:{n}" for s, n in enumerate(h.counts)))
    print("sections:")
    for name, sec in zip(("geometry", "residue", "attributes"), sections):
        print(f"  {name:<10} {len(sec):>10} bytes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mpac", description="Multiscale point cloud attribute codec")
    p.add_argument("--threads", type=int, default=None, help="cap on data-parallel worker threads")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def model_args(sp):
        sp.add_argument("--weights", default="fallback", help="SAPW weight file or 'fallback'")
        sp.add_argument("--b0", type=float, default=2.0, help="Laplace scale of the fallback model")

    e = sub.add_parser("encode", help="compress a PLY file")
    e.add_argument("-i", "--input", required=True)
    e.add_argument("-o", "--output", required=True)
    e.add_argument("--mode", default="cs+cg+cc")
    e.add_argument("--depth", type=int, default=10)
    e.add_argument("--colorspace", choices=("auto", "raw", "ycocg"), default="auto")
    model_args(e)
    e.set_defaults(fn=cmd_encode)

    d = sub.add_parser("decode", help="decompress to a PLY file")
    d.add_argument("-i", "--input", required=True)
    d.add_argument("-o", "--output", required=True)
    d.add_argument("--binary", action="store_true", help="write binary little-endian PLY")
    model_args(d)
    d.set_defaults(fn=cmd_decode)

    t = sub.add_parser("train", help="train probability-model weights")
    t.add_argument("--corpus", required=True, help="directory of PLY files, or synth[:N]")
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int, default=200)
    t.add_argument("--lr", type=float, default=1e-2)
    t.add_argument("--batch", type=int, default=8)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--modes", default="cs+cg+cc")
    t.add_argument("--depth", type=int, default=10)
    t.add_argument("--width", type=int, default=16)
    t.add_argument("--blocks", type=int, default=2)
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(fn=cmd_train)

    v = sub.add_parser("eval", help="bits-per-point report over a corpus")
    v.add_argument("--corpus", required=True, help="directory of PLY files, one PLY, or synth[:N]")
    v.add_argument("--modes", default="cs,cs+cg,cs+cg+cc")
    v.add_argument("--depth", type=int, default=10)
    v.add_argument("--csv", default=None, help="also write CSV rows to this path")
    v.add_argument("--format", choices=("table", "csv"), default="table")
    model_args(v)
    v.set_defaults(fn=cmd_eval)

    s = sub.add_parser("synth", help="write a procedural colored cloud")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--shape", choices=SHAPES, default="sphere")
    s.add_argument("--texture", choices=TEXTURES, default="gradient")
    s.add_argument("--depth", type=int, default=8)
    s.add_argument("--size", type=float, default=None, help="shape extent in voxels")
    s.add_argument("--image", default=None, help="PPM raster for image-projection")
    s.add_argument("--channels", type=int, choices=(1, 3), default=3)
    s.add_argument("--binary", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    n = sub.add_parser("inspect", help="print a bitstream's header and section table")
    n.add_argument("input")
    n.set_defaults(fn=cmd_inspect)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _set_threads(args.threads)
        return args.fn(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except CorruptStreamError as exc:
        print(f"corrupt stream: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (ConfigError, ModelError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, RangeError, EmptyInputError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

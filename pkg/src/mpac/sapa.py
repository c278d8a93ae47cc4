"""Sparse-convolutional Laplace parameter network, its weight file, and training.

A model holds one small network per *variant* (coding stage x color
context).  Every network is ``stem -> residual blocks -> head``; the head
emits ``(mu_raw, b_raw)`` per coded channel.  ``mu`` is an offset from the
POV's best-known value in network units and ``b`` is the Laplace scale in
attribute units, ``softplus(b_raw) + B_MIN``.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .color import rgb_to_ycocg_r
from .context import (YCOCG, plan_steps, step_inputs, step_rows, variant_io,
                      variants_for)
from .errors import ModelError, ShapeError, TrainingDivergenceError
from .grouping import ScaleState
from .laplace import B_MIN, estimate_bits, laplace_prob  # noqa: F401  (re-exported)
from .mode import CodecMode
from .pyramid import build_pyramid
from .sparse import Neighbors, SparseTensor, gather_neighbors

MAGIC = b"SAPW"
VERSION = 1
DEFAULT_B0 = 2.0


def _inv_softplus(y: float) -> float:
    return y + math.log(-math.expm1(-y))


@dataclass
class LaplaceField:
    """Per-POV, per-channel Laplace location and scale (attribute units)."""

    mu: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return len(self.mu)


def nbr_tables(t: SparseTensor, kernels=(1, 3)) -> dict:
    return {k: gather_neighbors(t, k) for k in kernels}


class SapaModel:
    """Weights for every variant: ``layers[key] = [(W, bias), ...]``.

    ``W`` has shape ``(K**3, cin, cout)``.  The first layer is the stem, the
    last is the 1x1x1 head and the layers in between form residual pairs.
    """

    name = "sapa"

    def __init__(self, layers: dict):
        self.layers = {}
        for key, ls in layers.items():
            cin, cout = variant_io(key)
            ls = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)) for w, b in ls]
            if len(ls) < 2 or len(ls) % 2:
                raise ShapeError(f"{key}: need stem, head and whole residual blocks")
            prev = cin
            for i, (w, b) in enumerate(ls):
                k = round(w.shape[0] ** (1 / 3))
                if w.ndim != 3 or k ** 3 != w.shape[0] or k not in (1, 3, 5) or w.shape[1] != prev \
                        or b.shape != (w.shape[2],):
                    raise ShapeError(f"{key}: bad shape in layer {i}")
                prev = w.shape[2]
            if prev != cout or ls[-1][0].shape[0] != 1:
                raise ShapeError(f"{key}: head must be 1x1x1 with {cout} outputs")
            if 0 < len(ls) - 2 and any(w.shape[1] != w.shape[2] for w, _ in ls[1:-1]):
                raise ShapeError(f"{key}: residual layers must keep their width")
            if not all(np.all(np.isfinite(w)) and np.all(np.isfinite(b)) for w, b in ls):
                raise ModelError(f"{key}: non-finite weights")
            self.layers[key] = ls
        self._hash = None

    # --- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, variants, width: int = 16, blocks: int = 2, stem_kernel: int = 1,
                   kernel: int = 3, seed: int = 0, b0: float = DEFAULT_B0) -> "SapaModel":
        rng = np.random.default_rng(seed)
        out = {}
        for key in sorted(variants):
            cin, cout = variant_io(key)
            ls = []
            dims = [(stem_kernel, cin, width)] + [(kernel, width, width)] * (2 * blocks)
            for k, a, c in dims:
                std = math.sqrt(2.0 / (k ** 3 * a))
                ls.append((rng.normal(0.0, std, (k ** 3, a, c)), np.zeros(c)))
            # a zero head starts every variant exactly at the analytic predictor
            head = np.zeros((1, width, cout))
            hb = np.zeros(cout)
            hb[cout // 2:] = _inv_softplus(b0 - B_MIN)
            ls.append((head, hb))
            out[key] = ls
        model = cls(out)
        model.round_weights()
        return model

    @classmethod
    def for_mode(cls, mode: CodecMode, channels: int, **kw) -> "SapaModel":
        return cls.initialize(variants_for(mode.effective(channels), channels), **kw)

    def round_weights(self) -> None:
        """Snap weights to float32 so in-memory and serialized models agree exactly."""
        for ls in self.layers.values():
            for w, b in ls:
                w[...] = w.astype(np.float32)
                b[...] = b.astype(np.float32)
        self._hash = None

    def copy(self) -> "SapaModel":
        return SapaModel({k: [(w.copy(), b.copy()) for w, b in ls] for k, ls in self.layers.items()})

    @property
    def variants(self) -> list:
        return sorted(self.layers)

    def supports(self, keys) -> bool:
        return all(k in self.layers for k in keys)

    # --- evaluation ---------------------------------------------------------

    def forward(self, key: str, feats, nbrs: dict, rows=None, params=None) -> ad.Var:
        """Raw head output ``(len(rows), 2 * coded)`` as a tape variable.

        ``nbrs`` maps kernel size to the scale's neighbor table.  Only the
        last residual layer and the head are restricted to ``rows``.
        """
        if key not in self.layers:
            raise ModelError(f"model has no variant {key!r}")
        ls = params[key] if params is not None else [(ad.Var(w), ad.Var(b)) for w, b in self.layers[key]]
        feats = np.ascontiguousarray(feats, dtype=np.float64)
        cin = ls[0][0].value.shape[1]
        if feats.ndim != 2 or feats.shape[1] != cin:
            raise ShapeError(f"{key}: expected {cin} feature channels, got {feats.shape}")
        n = len(feats)
        if rows is None:
            rows = np.arange(n, dtype=np.int64)
        rows = np.asarray(rows, dtype=np.int64)

        def table(w, sub):
            k = round(w.value.shape[0] ** (1 / 3))
            nb = nbrs[k]
            return nb.take_rows(rows) if sub else nb

        x = ad.Var(feats)
        w, b = ls[0]
        mid = ls[1:-1]
        h = ad.relu(ad.sconv(x, w, b, table(w, not mid)))
        for i in range(0, len(mid), 2):
            (w1, b1), (w2, b2) = mid[i], mid[i + 1]
            last = i + 2 == len(mid)
            t = ad.relu(ad.sconv(h, w1, b1, table(w1, False)))
            t = ad.sconv(t, w2, b2, table(w2, last))
            h = ad.relu(ad.add(ad.rows(h, rows) if last else h, t))
        w, b = ls[-1]
        head = Neighbors(1, np.arange(len(rows) + 1, dtype=np.int64), np.zeros(len(rows), dtype=np.int64),
                         np.arange(len(rows), dtype=np.int64))
        return ad.sconv(h, w, b, head)

    def predict(self, key: str, feats, nbrs: dict, base, scales, rows) -> LaplaceField:
        rows = np.asarray(rows, dtype=np.int64)
        with ad.no_grad():
            raw = self.forward(key, feats, nbrs, rows).value
        nc = raw.shape[1] // 2
        mu = np.asarray(base)[rows] + raw[:, :nc] * np.asarray(scales)[None, :]
        b = np.logaddexp(0.0, raw[:, nc:]) + B_MIN
        return LaplaceField(mu, b)

    # --- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        head = [MAGIC, struct.pack("<BH", VERSION, len(self.layers))]
        payload = []
        for key in self.variants:
            kb = key.encode()
            head.append(struct.pack("<B", len(kb)) + kb + struct.pack("<B", len(self.layers[key])))
            for w, b in self.layers[key]:
                k = round(w.shape[0] ** (1 / 3))
                head.append(struct.pack("<BHH", k, w.shape[1], w.shape[2]))
                payload.append(w.astype("<f4").tobytes() + b.astype("<f4").tobytes())
        body = b"".join(head + payload)
        return body + hashlib.blake2b(body, digest_size=8).digest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SapaModel":
        data = bytes(data)
        if len(data) < 15 or data[:4] != MAGIC:
            raise ModelError("not a SAPW weight file")
        body, digest = data[:-8], data[-8:]
        if hashlib.blake2b(body, digest_size=8).digest() != digest:
            raise ModelError("weight file hash mismatch")
        try:
            version, count = struct.unpack_from("<BH", body, 4)
            if version != VERSION:
                raise ModelError(f"unsupported weight file version {version}")
            pos = 7
            tables = []
            for _ in range(count):
                n = body[pos]
                key = body[pos + 1:pos + 1 + n].decode()
                pos += 1 + n
                nl = body[pos]
                pos += 1
                dims = []
                for _ in range(nl):
                    dims.append(struct.unpack_from("<BHH", body, pos))
                    pos += 5
                tables.append((key, dims))
            layers = {}
            for key, dims in tables:
                ls = []
                for k, a, c in dims:
                    nw = k ** 3 * a * c
                    w = np.frombuffer(body, "<f4", nw, pos).reshape(k ** 3, a, c)
                    pos += 4 * nw
                    b = np.frombuffer(body, "<f4", c, pos)
                    pos += 4 * c
                    ls.append((w.astype(np.float64), b.astype(np.float64)))
                layers[key] = ls
        except (struct.error, IndexError, ValueError, UnicodeDecodeError) as exc:
            raise ModelError(f"truncated weight file: {exc}") from None
        if pos != len(body):
            raise ModelError("trailing bytes in weight file")
        model = cls(layers)
        model._hash = int.from_bytes(digest, "little")
        return model

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SapaModel":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    @property
    def hash(self) -> int:
        if self._hash is None:
            self._hash = int.from_bytes(self.to_bytes()[-8:], "little")
        return self._hash


class AnalyticFallback:
    """Non-learned predictor: ``mu`` = best-known value, ``b`` = ``b0``."""

    name = "fallback"

    def __init__(self, b0: float = DEFAULT_B0):
        if not b0 >= B_MIN:
            raise ModelError(f"b0 must be at least {B_MIN}")
        self.b0 = float(b0)

    def supports(self, keys) -> bool:
        return True

    def predict(self, key, feats, nbrs, base, scales, rows) -> LaplaceField:
        mu = np.asarray(base, dtype=np.float64)[np.asarray(rows, dtype=np.int64)]
        return LaplaceField(mu, np.full(mu.shape, self.b0))

    @property
    def hash(self) -> int:
        digest = hashlib.blake2b(b"fallback" + struct.pack("<d", self.b0), digest_size=8).digest()
        return int.from_bytes(digest, "little")


def analytic_fallback(best_known, b0: float = DEFAULT_B0) -> LaplaceField:
    mu = np.asarray(best_known, dtype=np.float64)
    return LaplaceField(mu.copy(), np.full(mu.shape, float(b0)))


def sapa_forward(model: SapaModel, key: str, t: SparseTensor, feats, base=None, scales=None) -> LaplaceField:
    """Laplace parameters for every POV of ``t`` under variant ``key``."""
    feats = np.asarray(feats, dtype=np.float64)
    if len(feats) != len(t):
        raise ShapeError(f"{len(feats)} feature rows for {len(t)} POVs")
    nc = variant_io(key)[1] // 2
    if base is None:
        base = np.zeros((len(t), nc))
    if scales is None:
        scales = np.ones(nc)
    return model.predict(key, feats, nbr_tables(t), base, scales, np.arange(len(t)))


# --- training -------------------------------------------------------------------


@dataclass
class TrainSample:
    """One coding step of one scale with the ground truth it must predict."""

    variant: str
    feats: np.ndarray
    nbrs: dict
    base: np.ndarray
    scales: np.ndarray
    rows: np.ndarray
    targets: np.ndarray      # (len(rows), coded)
    bounds: list             # [(lo, hi)] per coded channel
    scale: int = 0

    @property
    def symbols(self) -> int:
        return self.targets.size


def make_samples(t: SparseTensor, mode: CodecMode, colorspace=None, scales=None) -> list:
    """Teacher-forced samples for every coding step of ``scales`` (default: all of them).

    The context of each step is built from scale ``s - 1`` (the exact parent
    averages) plus the groups already decoded at scale ``s``, exactly as the
    decoder would see it.
    """
    from .codec import channel_bounds, choose_colorspace

    colorspace = choose_colorspace(t.attrs, colorspace)
    if colorspace == YCOCG:
        t = t.with_attrs(rgb_to_ycocg_r(t.attrs))
    pyr = build_pyramid(t)
    channels = t.attrs.shape[1]
    mode = mode.effective(channels)
    bounds = channel_bounds(t.attrs)
    S = pyr.num_scales
    scales = range(2, S + 1) if scales is None else scales
    out = []
    for s in scales:
        link = pyr.geometry.link(s)
        state = ScaleState(link, pyr.sums[s - 1])
        truth = pyr.values[s - 1]
        nbrs = nbr_tables(pyr.geometry.tensor(s))
        for step in plan_steps(mode, channels):
            rows = step_rows(state, step)
            if len(rows):
                feats, base, sc = step_inputs(state, step, colorspace)
                tg = truth[np.ix_(rows, step.coded)]
                out.append(TrainSample(step.variant, feats, nbrs, base, sc, rows, tg,
                                       [bounds[c] for c in step.coded], s))
            state.commit(rows, step.coded, truth[np.ix_(rows, step.coded)])
    return out


def sample_bits(model: SapaModel, sample: TrainSample, params=None, pass_through: bool = False) -> ad.Var:
    out = model.forward(sample.variant, sample.feats, sample.nbrs, sample.rows, params)
    nc = sample.targets.shape[1]
    terms = []
    for j in range(nc):
        mu = ad.affine(ad.columns(out, [j]), sample.scales[j], sample.base[sample.rows, j][:, None])
        b = ad.affine(ad.softplus(ad.columns(out, [nc + j])), 1.0, B_MIN)
        lo, hi = sample.bounds[j]
        terms.append(ad.laplace_bits(mu, b, sample.targets[:, j], lo, hi, pass_through))
    return ad.total(terms)


def evaluate_loss(model, samples) -> float:
    """Total ideal code length (bits) of ``samples`` under ``model``."""
    total = 0.0
    for smp in samples:
        f = model.predict(smp.variant, smp.feats, smp.nbrs, smp.base, smp.scales, smp.rows)
        for j, (lo, hi) in enumerate(smp.bounds):
            total += estimate_bits(f.mu[:, j], f.b[:, j], smp.targets[:, j], lo, hi)
    return total


@dataclass
class Trainer:
    """Adam over the weights of a :class:`SapaModel` (updated in place)."""

    model: SapaModel
    lr: float = 1e-2
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    pass_through: bool = True
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, batch) -> float:
        batch = list(batch)
        if not batch:
            return 0.0
        model = self.model
        params = {}
        for smp in batch:
            if smp.variant not in params:
                params[smp.variant] = [(ad.Param(w), ad.Param(b)) for w, b in model.layers[smp.variant]]
        loss = ad.total([sample_bits(model, smp, params, self.pass_through) for smp in batch])
        value = float(loss.value)
        if not math.isfinite(value):
            raise TrainingDivergenceError(f"non-finite loss {value}")
        ad.backward(loss)
        grads = [(key, i, j, p.grad) for key, ls in params.items() for i, pair in enumerate(ls)
                 for j, p in enumerate(pair) if p.grad is not None]
        if not all(np.all(np.isfinite(g)) for *_, g in grads):
            raise TrainingDivergenceError("non-finite gradient")
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for key, i, j, g in grads:
            name = (key, i, j)
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            target = model.layers[key][i][j]
            target -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        model.round_weights()
        return value


def train_step(model: SapaModel, batch, lr: float = 1e-2, trainer: Trainer | None = None) -> tuple:
    """One Adam step on ``batch``; returns ``(model, loss_bits)`` with the loss before the update."""
    if trainer is None:
        trainer = Trainer(model, lr=lr)
    trainer.lr = lr
    return trainer.model, trainer.step(batch)


def train(model: SapaModel, samples, steps: int, lr: float = 1e-2, batch: int = 8, seed: int = 0,
          log=None, final_lr: float = 0.1) -> list:
    """Run ``steps`` Adam steps; returns the per-step losses (bits, before each update).

    The learning rate follows a cosine decay from ``lr`` to ``final_lr * lr``.

    Batches are stratified by variant: variants are visited in a shuffled
    round-robin and each contributes one random sample, so every stage and
    color context is updated at a similar rate.
    """
    rng = np.random.default_rng(seed)
    trainer = Trainer(model, lr=lr)
    by_variant = {}
    for smp in samples:
        by_variant.setdefault(smp.variant, []).append(smp)
    keys = sorted(by_variant)
    losses = []
    if not keys:
        return losses
    queue = []
    for i in range(steps):
        pick = []
        while len(pick) < min(batch, len(keys)):
            if not queue:
                queue = [keys[j] for j in rng.permutation(len(keys))]
            key = queue.pop()
            if key in pick:
                queue.insert(0, key)
                continue
            pick.append(key)
        chosen = [by_variant[k][rng.integers(len(by_variant[k]))] for k in sorted(pick)]
        frac = i / max(steps - 1, 1)
        trainer.lr = lr * (final_lr + (1 - final_lr) * 0.5 * (1 + math.cos(math.pi * frac)))
        losses.append(trainer.step(chosen))
        if log is not None:
            log(i, losses[-1])
    return losses

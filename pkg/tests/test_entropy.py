import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpac.entropy import (OK, SENTINEL_BITS, TOTAL, UNIFORM_CUM, RangeDecoder, RangeEncoder,
                          decode_laplace, decode_uniform_stream, encode_laplace, encode_uniform_stream,
                          quantize_cdf)
from mpac.errors import CorruptStreamError, ModelError, RangeError
from mpac.laplace import B_MIN, laplace_table


def test_quantize_examples():
    assert quantize_cdf(np.full(4, 0.25)).tolist() == [0, 16384, 32768, 49152, 65536]
    assert quantize_cdf([1.0]).tolist() == [0, 65536]


def test_quantize_rejects_bad_input():
    with pytest.raises(ModelError):
        quantize_cdf([0.5, 0.0, 0.5])
    with pytest.raises(ModelError):
        quantize_cdf([0.5, 0.6])
    with pytest.raises(ModelError):
        quantize_cdf([])


@given(st.lists(st.floats(2.0 ** -16, 1.0), min_size=1, max_size=600))
def test_quantize_properties(w):
    p = np.array(w) / np.sum(w)
    p = np.maximum(p, 2.0 ** -16)
    p /= p.sum()
    if abs(p.sum() - 1) > 2.0 ** -20:
        return
    cum = quantize_cdf(p)
    q = np.diff(cum)
    assert cum[0] == 0 and cum[-1] == TOTAL and q.min() >= 1
    # largest remainder never moves a symbol more than one slot from its share, except to give it one
    assert np.all(np.abs(q - p * TOTAL) < 1 + len(p) * 2.0 ** -4 + 1)


def test_certain_symbol_costs_nothing():
    one = quantize_cdf([1.0])
    empty = RangeEncoder()
    base = len(empty.finish())
    enc = RangeEncoder()
    for _ in range(1000):
        enc.encode_symbol(one, 0)
    assert len(enc.finish()) == base


def test_fair_coin_length():
    rng = np.random.default_rng(0)
    cdf = quantize_cdf([0.5, 0.5])
    bits = rng.integers(0, 2, 1000)
    enc = RangeEncoder()
    for s in bits:
        enc.encode_symbol(cdf, int(s))
    data = enc.finish()
    assert 125 <= len(data) <= 135
    dec = RangeDecoder(data)
    assert [dec.decode_symbol(cdf) for _ in bits] == bits.tolist()
    dec.finish()


def test_adversarial_min_max_alternation():
    p = np.full(512, 2.0 ** -16)
    p[0] = 1 - p[1:].sum()
    cdf = quantize_cdf(p)
    syms = [0, 511] * 500 + [511] * 50 + [0] * 50
    enc = RangeEncoder(sentinel=True)
    for s in syms:
        enc.encode_symbol(cdf, s)
    data = enc.finish()
    dec = RangeDecoder(data, sentinel=True)
    assert [dec.decode_symbol(cdf) for _ in syms] == syms
    dec.finish()


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 300))
def test_random_cdf_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    cdfs, syms = [], []
    for _ in range(n):
        a = int(rng.integers(1, 40))
        p = rng.dirichlet(np.full(a, 0.3)) + 2.0 ** -16
        cdfs.append(quantize_cdf(p / p.sum()))
        syms.append(int(rng.integers(a)))
    enc = RangeEncoder(sentinel=True)
    for c, s in zip(cdfs, syms):
        enc.encode_symbol(c, s)
    data = enc.finish()
    dec = RangeDecoder(data, sentinel=True)
    assert [dec.decode_symbol(c) for c in cdfs] == syms
    dec.finish()


def test_uniform_residues():
    enc = RangeEncoder()
    for _ in range(100):
        enc.encode_uniform(1, 0)
    assert len(enc.finish()) == len(RangeEncoder().finish())
    with pytest.raises(RangeError):
        RangeEncoder().encode_uniform(3, 3)
    with pytest.raises(RangeError):
        RangeEncoder().encode_uniform(9, 0)
    rng = np.random.default_rng(1)
    ks = np.full(4000, 4)
    rs = rng.integers(0, 4, 4000)
    data, bits = encode_uniform_stream(ks, rs, UNIFORM_CUM)
    assert bits == 8000
    assert 8000 + SENTINEL_BITS <= 8 * len(data) <= 8000 + SENTINEL_BITS + 40


@given(st.integers(0, 2 ** 32 - 1))
def test_mixed_k_residue_stream(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 2000))
    ks = rng.integers(1, 9, n)
    rs = (rng.random(n) * ks).astype(np.int64)
    data, bits = encode_uniform_stream(ks, rs, UNIFORM_CUM)
    # 2**16 does not split evenly for k in {3, 5, 6, 7}, so the exact cost uses the quantised slots
    cost = sum(-np.log2((UNIFORM_CUM[k, r + 1] - UNIFORM_CUM[k, r]) / TOTAL) for k, r in zip(ks, rs) if k > 1)
    assert bits == pytest.approx(cost)
    assert bits == pytest.approx(np.log2(ks).sum(), rel=1e-4)
    status, out = decode_uniform_stream(data, ks, UNIFORM_CUM)
    assert status == OK and np.array_equal(out[ks > 1], rs[ks > 1])


def laplace_stream(rng, n, lo=-255, hi=255):
    mu = rng.uniform(lo - 20, hi + 20, n)
    b = np.exp(rng.uniform(np.log(B_MIN), np.log(80), n))
    x = np.clip(np.round(mu + rng.laplace(0, b * rng.choice([1, 1, 1, 20], n))), lo, hi).astype(np.int64)
    return mu, b, x


def test_laplace_streams_million_symbols():
    rng = np.random.default_rng(2)
    total = 0
    while total < 1_000_000:
        n = int(rng.integers(1, 60_000))
        lo = int(rng.integers(-255, 100))
        hi = lo + int(rng.integers(0, 400))
        mu, b, x = laplace_stream(rng, n, lo, hi)
        data, bits_p, bits_q = encode_laplace(mu, b, lo, hi, x)
        status, out, k = decode_laplace(data, mu, b, lo, hi, n)
        assert status == OK and k == n and np.array_equal(out, x)
        assert 8 * len(data) >= bits_q + SENTINEL_BITS
        total += n


def test_laplace_estimate_matches_coded_length():
    rng = np.random.default_rng(3)
    for n in (10, 1000, 20_000):
        mu, b, x = laplace_stream(rng, n)
        data, bits_p, bits_q = encode_laplace(mu, b, -255, 255, x)
        p = laplace_table(mu, b, -255, 255)[np.arange(n), x + 255]
        assert bits_p == pytest.approx(-np.log2(p).sum(), rel=1e-9)
        assert len(data) <= 1.02 * bits_p / 8 + 64
        # 32 flush bits, 8 sentinel bits, and the 32-bit coder's truncation loss
        assert 8 * len(data) <= bits_q + 40 + 2e-3 * n


def test_truncation_and_garbage_are_detected():
    rng = np.random.default_rng(4)
    mu, b, x = laplace_stream(rng, 500)
    data, _, _ = encode_laplace(mu, b, -255, 255, x)
    for cut in range(1, 6):
        status, out, k = decode_laplace(data[:-cut], mu, b, -255, 255, 500)
        assert status != OK
    status, _, _ = decode_laplace(np.append(data, np.uint8(0)), mu, b, -255, 255, 500)
    assert status != OK
    dec = RangeDecoder(bytes(data[:-2]), sentinel=True)
    with pytest.raises(CorruptStreamError):
        cdfs = [quantize_cdf(np.full(4, 0.25))] * 10_000
        for c in cdfs:
            dec.decode_symbol(c)
        dec.finish()

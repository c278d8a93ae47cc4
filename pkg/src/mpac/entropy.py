"""Range coder with 16-bit quantised CDFs.

The coder keeps a 32-bit range and a 33-bit low register; carries are
propagated through a pending-byte counter, so the range never has to be
artificially shrunk.  The leading byte (always zero) is not written and the
flush emits a single byte, which the decoder pads with zeros.  A decoder
for a valid stream therefore reads exactly ``len(payload) + 3`` bytes.

Hot loops (Laplace streams, residue streams) run in numba; the small
:class:`RangeEncoder` / :class:`RangeDecoder` classes expose the same
machine symbol by symbol.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .errors import CorruptStreamError, ModelError, RangeError
from .laplace import P_MIN, floored_window

PREC = 16
TOTAL = 1 << PREC
TOP = 1 << 24
DECODER_PAD = 3
SENTINEL = 0xA5  # coded as one of 256 equiprobable symbols at the end of every stream
SENTINEL_BITS = 8

# decoder status codes returned by the numba kernels
OK, ERR_TARGET, ERR_EXHAUSTED, ERR_SENTINEL, ERR_LENGTH, ERR_MODEL = range(6)
_STATUS_TEXT = {
    ERR_TARGET: "CDF desync (target outside the coding interval)",
    ERR_EXHAUSTED: "stream exhausted",
    ERR_SENTINEL: "end-of-stream sentinel mismatch",
    ERR_LENGTH: "trailing bytes after end of stream",
    ERR_MODEL: "invalid probability model",
}


# --- quantisation ------------------------------------------------------------

@nb.njit(cache=True)
def _quantize(p, z, n_tail, q):
    """Largest-remainder allocation of ``TOTAL`` slots to ``p / z``.

    ``n_tail`` extra symbols (outside ``p``) are known to receive one slot
    each.  Every symbol gets at least one slot.
    """
    n = len(p)
    frac = np.empty(n)
    used = n_tail
    ncand = 0
    for i in range(n):
        t = p[i] / z * TOTAL
        f = math.floor(t)
        if f >= 1.0:
            q[i] = int(f)
            frac[i] = t - f
            ncand += 1
        else:
            q[i] = 1
            frac[i] = -1.0
        used += q[i]
    d = TOTAL - used
    if d == 0:
        return
    if d > 0:
        order = np.argsort(-frac, kind="mergesort")
        for j in range(n):
            if d == 0:
                break
            i = order[j]
            if frac[i] < 0.0:
                break
            q[i] += 1
            d -= 1
        if d != 0:
            # cannot happen for normalised input; spread the rest round-robin
            j = 0
            while d > 0:
                q[order[j % n]] += 1
                d -= 1
                j += 1
        return
    key = np.where(frac < 0.0, 2.0, frac)
    order = np.argsort(key, kind="mergesort")
    while d < 0:
        moved = False
        for j in range(n):
            i = order[j]
            if q[i] > 1:
                q[i] -= 1
                d += 1
                moved = True
                if d == 0:
                    break
        if not moved:
            break


def quantize_cdf(p) -> np.ndarray:
    """Integer CDF ``cum`` (length ``len(p) + 1``, ``cum[-1] == 2**16``) for probabilities ``p``."""
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0 or p.size > TOTAL:
        raise ModelError(f"alphabet size {p.size} not in [1, {TOTAL}]")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise ModelError("zero or invalid probability")
    if abs(p.sum() - 1.0) > 2.0 ** -20:
        raise ModelError(f"probabilities sum to {p.sum()!r}")
    q = np.empty(p.size, dtype=np.int64)
    _quantize(p, 1.0, 0, q)
    if q.sum() != TOTAL or q.min() < 1:
        raise ModelError("CDF quantisation failed")
    cum = np.zeros(p.size + 1, dtype=np.int64)
    np.cumsum(q, out=cum[1:])
    return cum


def _uniform_table():
    tab = np.zeros((9, 10), dtype=np.int64)
    for k in range(1, 9):
        tab[k, : k + 1] = quantize_cdf(np.full(k, 1.0 / k))
    return tab


UNIFORM_CUM = _uniform_table()


# --- coder core ----------------------------------------------------------------
# encoder state: low, range, cache, cache_size, pos (pos starts at -1: the first byte is dropped)
# decoder state: code, range, pos

@nb.njit(cache=True)
def _enc_init(st):
    st[0] = 0
    st[1] = 0xFFFFFFFF
    st[2] = 0
    st[3] = 1
    st[4] = -1


@nb.njit(cache=True)
def _shift_low(st, buf):
    low = st[0]
    if low < 0xFF000000 or low >= 0x100000000:
        carry = low >> 32
        temp = st[2]
        while True:
            pos = st[4]
            if pos >= 0:
                buf[pos] = (temp + carry) & 0xFF
            st[4] = pos + 1
            temp = 0xFF
            st[3] -= 1
            if st[3] == 0:
                break
        st[2] = (low >> 24) & 0xFF
    st[3] += 1
    st[0] = (low & 0xFFFFFF) << 8


@nb.njit(cache=True)
def _enc_put(st, buf, start, size):
    r = st[1] >> PREC
    st[0] += r * start
    st[1] = r * size
    while st[1] < TOP:
        st[1] <<= 8
        _shift_low(st, buf)


@nb.njit(cache=True)
def _enc_finish(st, buf):
    st[0] = (st[0] + 0xFFFFFF) & ~np.int64(0xFFFFFF)
    _shift_low(st, buf)
    _shift_low(st, buf)
    return st[4]


@nb.njit(cache=True)
def _dec_byte(st, data):
    pos = st[2]
    st[2] = pos + 1
    if pos < len(data):
        return np.int64(data[pos])
    return np.int64(0)


@nb.njit(cache=True)
def _dec_init(st, data):
    st[0] = 0
    st[1] = 0xFFFFFFFF
    st[2] = 0
    for _ in range(4):
        st[0] = (st[0] << 8) | _dec_byte(st, data)


@nb.njit(cache=True)
def _dec_target(st):
    return st[0] // (st[1] >> PREC)


@nb.njit(cache=True)
def _dec_take(st, data, start, size):
    r = st[1] >> PREC
    st[0] -= r * start
    st[1] = r * size
    while st[1] < TOP:
        st[0] = ((st[0] << 8) | _dec_byte(st, data)) & 0xFFFFFFFF
        st[1] <<= 8
    if st[2] > len(data) + DECODER_PAD:
        return ERR_EXHAUSTED
    return OK


@nb.njit(cache=True)
def _dec_finish(st, data):
    v = _dec_target(st)
    if v >> 8 != SENTINEL:
        return ERR_SENTINEL
    s = _dec_take(st, data, SENTINEL << 8, 256)
    if s != OK:
        return s
    if st[2] != len(data) + DECODER_PAD:
        return ERR_LENGTH
    return OK


# --- Laplace streams -------------------------------------------------------------

@nb.njit(cache=True)
def _locate(x, lo, w0, w1, q):
    """(start, size) of symbol ``x`` given window frequencies ``q``."""
    if x < w0:
        return x - lo, 1
    base = w0 - lo
    if x > w1:
        tot = 0
        for i in range(w1 - w0 + 1):
            tot += q[i]
        return base + tot + (x - w1 - 1), 1
    for i in range(x - w0):
        base += q[i]
    return base, q[x - w0]


@nb.njit(cache=True)
def encode_laplace(mu, b, lo, hi, syms):
    """Encode ``syms`` under per-symbol Laplace models; returns (bytes, ideal bits, quantised bits)."""
    n = len(syms)
    a = hi - lo + 1
    buf = np.zeros(2 * n + 16, dtype=np.uint8)
    st = np.zeros(5, dtype=np.int64)
    pw = np.empty(a)
    q = np.empty(a, dtype=np.int64)
    _enc_init(st)
    bits_p = 0.0
    bits_q = 0.0
    for i in range(n):
        w0, w1, z = floored_window(mu[i], b[i], lo, hi, pw)
        w = w1 - w0 + 1
        _quantize(pw[:w], z, a - w, q)
        x = syms[i]
        start, size = _locate(x, lo, w0, w1, q)
        if w0 <= x <= w1:
            bits_p -= math.log2(pw[x - w0] / z)
        else:
            bits_p -= math.log2(P_MIN / z)
        bits_q -= math.log2(size / TOTAL)
        _enc_put(st, buf, start, size)
    _enc_put(st, buf, SENTINEL << 8, 256)
    nbytes = _enc_finish(st, buf)
    return buf[:nbytes].copy(), bits_p, bits_q


@nb.njit(cache=True)
def decode_laplace(data, mu, b, lo, hi, n):
    """Inverse of :func:`encode_laplace`; returns (status, symbols, count decoded)."""
    a = hi - lo + 1
    out = np.zeros(n, dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    pw = np.empty(a)
    q = np.empty(a, dtype=np.int64)
    _dec_init(st, data)
    for i in range(n):
        w0, w1, z = floored_window(mu[i], b[i], lo, hi, pw)
        w = w1 - w0 + 1
        _quantize(pw[:w], z, a - w, q)
        v = _dec_target(st)
        if v >= TOTAL:
            return ERR_TARGET, out, i
        below = w0 - lo
        if v < below:
            x = lo + v
            start = v
            size = 1
        else:
            start = below
            x = w0
            size = -1
            for j in range(w):
                if v < start + q[j]:
                    size = q[j]
                    x = w0 + j
                    break
                start += q[j]
            if size < 0:
                x = w1 + 1 + (v - start)
                size = 1
                start = v
        out[i] = x
        s = _dec_take(st, data, start, size)
        if s != OK:
            return s, out, i
    return _dec_finish(st, data), out, n


# --- uniform residue streams -------------------------------------------------------

@nb.njit(cache=True)
def encode_uniform_stream(ks, rs, table):
    n = len(ks)
    buf = np.zeros(2 * n + 16, dtype=np.uint8)
    st = np.zeros(5, dtype=np.int64)
    _enc_init(st)
    bits = 0.0
    for i in range(n):
        k = ks[i]
        if k <= 1:
            continue
        r = rs[i]
        start = table[k, r]
        size = table[k, r + 1] - start
        bits -= math.log2(size / TOTAL)
        _enc_put(st, buf, start, size)
    _enc_put(st, buf, SENTINEL << 8, 256)
    nbytes = _enc_finish(st, buf)
    return buf[:nbytes].copy(), bits


@nb.njit(cache=True)
def decode_uniform_stream(data, ks, table):
    n = len(ks)
    out = np.zeros(n, dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    _dec_init(st, data)
    for i in range(n):
        k = ks[i]
        if k <= 1:
            continue
        v = _dec_target(st)
        r = 0
        while r < k and table[k, r + 1] <= v:
            r += 1
        if r >= k:
            return ERR_TARGET, out
        out[i] = r
        s = _dec_take(st, data, table[k, r], table[k, r + 1] - table[k, r])
        if s != OK:
            return s, out
    return _dec_finish(st, data), out


def check_status(status: int, location=None) -> None:
    if status != OK:
        raise CorruptStreamError(_STATUS_TEXT.get(status, f"decoder status {status}"), location)


# --- symbol-at-a-time interface -------------------------------------------------------

class RangeEncoder:
    """Symbol-by-symbol encoder over explicit quantised CDFs.

    >>> enc = RangeEncoder()
    >>> enc.encode_symbol(quantize_cdf([0.5, 0.5]), 1)
    >>> data = enc.finish()
    """

    def __init__(self, sentinel: bool = False):
        self._st = np.zeros(5, dtype=np.int64)
        self._buf = np.zeros(64, dtype=np.uint8)
        self._sentinel = sentinel
        self._done = False
        _enc_init(self._st)

    def _reserve(self):
        # a put may flush every pending carry byte (st[3]) plus a few fresh ones
        need = int(self._st[4] + self._st[3]) + 8
        if need >= len(self._buf):
            self._buf = np.concatenate([self._buf, np.zeros(max(need, len(self._buf)), dtype=np.uint8)])

    def encode_freq(self, start: int, size: int) -> None:
        if size < 1 or start < 0 or start + size > TOTAL:
            raise ModelError(f"invalid interval [{start}, {start + size})")
        self._reserve()
        _enc_put(self._st, self._buf, int(start), int(size))

    def encode_symbol(self, cdf, s: int) -> None:
        if not 0 <= s < len(cdf) - 1:
            raise RangeError(f"symbol {s} outside alphabet of {len(cdf) - 1}")
        self.encode_freq(int(cdf[s]), int(cdf[s + 1] - cdf[s]))

    def encode_uniform(self, k: int, r: int) -> None:
        if not 1 <= k <= 8:
            raise RangeError(f"k must be in [1, 8], got {k}")
        if not 0 <= r < k:
            raise RangeError(f"residue {r} outside [0, {k})")
        if k > 1:
            self.encode_symbol(UNIFORM_CUM[k, : k + 1], r)

    def finish(self) -> bytes:
        if self._done:
            raise RuntimeError("encoder already finished")
        if self._sentinel:
            self.encode_freq(SENTINEL << 8, 256)
        self._reserve()
        n = _enc_finish(self._st, self._buf)
        self._done = True
        return bytes(self._buf[:n])


class RangeDecoder:
    def __init__(self, data: bytes, sentinel: bool = False):
        self._data = np.frombuffer(bytes(data), dtype=np.uint8)
        self._st = np.zeros(3, dtype=np.int64)
        self._sentinel = sentinel
        _dec_init(self._st, self._data)

    def decode_symbol(self, cdf) -> int:
        v = int(_dec_target(self._st))
        if v >= TOTAL:
            check_status(ERR_TARGET)
        s = int(np.searchsorted(cdf, v, side="right")) - 1
        check_status(_dec_take(self._st, self._data, int(cdf[s]), int(cdf[s + 1] - cdf[s])))
        return s

    def decode_uniform(self, k: int) -> int:
        if not 1 <= k <= 8:
            raise RangeError(f"k must be in [1, 8], got {k}")
        if k == 1:
            return 0
        return self.decode_symbol(UNIFORM_CUM[k, : k + 1])

    def finish(self) -> None:
        """Verify the end of the stream (sentinel and exact length)."""
        if self._sentinel:
            check_status(_dec_finish(self._st, self._data))
        elif self._st[2] != len(self._data) + DECODER_PAD:
            check_status(ERR_LENGTH)

    @property
    def bytes_read(self) -> int:
        return int(self._st[2])

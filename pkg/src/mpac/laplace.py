"""Discretised Laplace probabilities over a bounded integer alphabet.

``p(x) = F(x + 1/2) - F(x - 1/2)`` where ``F`` is the Laplace CDF with
location ``mu`` and scale ``b``.  The two boundary symbols absorb the tail
mass, every probability is floored at ``P_MIN`` and the vector renormalised.
The scalar kernels here are shared with the range coder (numba) so encoder,
decoder and bit estimates evaluate the same expression.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

B_MIN = 0.01
P_MIN = 2.0 ** -16
MU_CLAMP = float(1 << 20)
# beyond this many scales from mu a symbol's mass is certainly below P_MIN
WINDOW_SCALES = math.log(0.5 / P_MIN) + 1.0


@nb.njit(cache=True)
def _mass(x, lo, hi, mu, b):
    a = x - 0.5
    c = x + 0.5
    a_inf = x == lo
    c_inf = x == hi
    if not a_inf and a >= mu:
        up = 0.0 if c_inf else math.exp(-(c - mu) / b)
        return 0.5 * (math.exp(-(a - mu) / b) - up)
    if not c_inf and c <= mu:
        dn = 0.0 if a_inf else math.exp((a - mu) / b)
        return 0.5 * (math.exp((c - mu) / b) - dn)
    la = 0.0 if a_inf else 0.5 * math.exp((a - mu) / b)
    uc = 0.0 if c_inf else 0.5 * math.exp(-(c - mu) / b)
    return 1.0 - la - uc


@nb.njit(cache=True)
def clamp_mu(mu, lo, hi):
    if mu < lo - MU_CLAMP:
        return lo - MU_CLAMP
    if mu > hi + MU_CLAMP:
        return hi + MU_CLAMP
    return mu


@nb.njit(cache=True)
def window(mu, b, lo, hi):
    """Symbol range outside of which every floored probability equals ``P_MIN``."""
    margin = 0.5 + b * WINDOW_SCALES
    w0 = math.floor(mu - margin)
    w1 = math.ceil(mu + margin)
    w0 = min(max(w0, lo), hi)
    w1 = max(min(w1, hi), lo)
    return int(w0), int(w1)


@nb.njit(cache=True)
def floored_window(mu, b, lo, hi, out):
    """Fill ``out[:w1-w0+1]`` with floored masses; return ``(w0, w1, Z)``.

    ``Z`` is the renormaliser over the full alphabet (symbols outside the
    window contribute ``P_MIN`` each).
    """
    mu = clamp_mu(mu, lo, hi)
    w0, w1 = window(mu, b, lo, hi)
    z = 0.0
    for x in range(w0, w1 + 1):
        p = _mass(x, lo, hi, mu, b)
        if p < P_MIN:
            p = P_MIN
        out[x - w0] = p
        z += p
    z += (hi - lo + 1 - (w1 - w0 + 1)) * P_MIN
    return w0, w1, z


def _check_params(mu, b):
    mu = np.asarray(mu, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(b))):
        from .errors import ModelError
        raise ModelError("non-finite Laplace parameters")
    return mu, b


def raw_mass_table(mu, b, lo: int, hi: int):
    """Unfloored tail-folded masses, shape ``(N, hi - lo + 1)``."""
    mu, b = _check_params(mu, b)
    mu = np.clip(mu, lo - MU_CLAMP, hi + MU_CLAMP).reshape(-1, 1)
    b = b.reshape(-1, 1)
    x = np.arange(lo, hi + 1, dtype=np.float64)[None, :]
    a = x - 0.5
    c = x + 0.5
    a_inf = np.zeros(x.shape, dtype=bool)
    c_inf = np.zeros(x.shape, dtype=bool)
    a_inf[0, 0] = True
    c_inf[0, -1] = True
    with np.errstate(over="ignore"):
        ea_up = np.where(a_inf, 0.0, np.exp(-np.maximum(a - mu, 0.0) / b))      # P(X > a) * 2 for a >= mu
        ec_up = np.where(c_inf, 0.0, np.exp(-np.maximum(c - mu, 0.0) / b))
        ea_dn = np.where(a_inf, 0.0, np.exp(np.minimum(a - mu, 0.0) / b))       # P(X < a) * 2 for a <= mu
        ec_dn = np.where(c_inf, 0.0, np.exp(np.minimum(c - mu, 0.0) / b))
    above = ~a_inf & (a >= mu)
    below = ~above & ~c_inf & (c <= mu)
    mid = ~above & ~below
    p = np.empty(np.broadcast(a, mu).shape)
    p[:] = 0.5 * (ec_dn - ea_dn)
    p = np.where(above, 0.5 * (ea_up - ec_up), p)
    la = np.where(a_inf, 0.0, 0.5 * ea_dn)
    uc = np.where(c_inf, 0.0, 0.5 * ec_up)
    p = np.where(mid, 1.0 - la - uc, p)
    return p


def laplace_table(mu, b, lo: int, hi: int) -> np.ndarray:
    """Floored, renormalised probabilities for every symbol of ``[lo, hi]``."""
    p = np.maximum(raw_mass_table(mu, b, lo, hi), P_MIN)
    return p / p.sum(axis=1, keepdims=True)


def laplace_prob(mu: float, b: float, x: int, alphabet) -> float:
    """Probability of integer symbol ``x`` under a discretised Laplace(mu, b)."""
    lo, hi = (int(v) for v in alphabet)
    if not lo <= x <= hi:
        from .errors import RangeError
        raise RangeError(f"symbol {x} outside alphabet [{lo}, {hi}]")
    return float(laplace_table([mu], [b], lo, hi)[0, x - lo])


def symbol_probs(mu, b, x, lo: int, hi: int) -> np.ndarray:
    """Floored, renormalised probability of each ``x[i]`` under ``(mu[i], b[i])``."""
    x = np.asarray(x, dtype=np.int64).ravel()
    t = laplace_table(np.ravel(mu), np.ravel(b), lo, hi)
    return t[np.arange(len(x)), x - lo]


def estimate_bits(mu, b, symbols, lo: int, hi: int) -> float:
    """Ideal code length ``sum(-log2 p)`` of ``symbols`` in bits."""
    symbols = np.asarray(symbols).ravel()
    if symbols.size == 0:
        return 0.0
    return float(-np.log2(symbol_probs(mu, b, symbols, lo, hi)).sum())


def _tail_log_grads(mu, b, x, lo, hi):
    """Derivatives of ``-ln p_raw(x)`` for symbols in a tail, computed in log space."""
    a = x - 0.5
    c = x + 0.5
    upper = a >= mu
    d = np.where(upper, a - mu, mu - c)   # distance from mu to the near edge, >= 0
    edge = np.where(upper, x == hi, x == lo)
    # -ln p = ln 2 + d/b - ln(1 - e^{-1/b}) inside the alphabet, ln 2 + d/b at the folded boundary
    e = np.exp(-1.0 / b)
    corr = np.where(edge, 0.0, e / (-np.expm1(-1.0 / b)) / (b * b))
    g_mu = np.where(upper, -1.0, 1.0) / b
    g_b = -d / (b * b) + corr
    return g_mu, g_b


def nll_and_grads(mu, b, x, lo: int, hi: int, pass_through: bool = False):
    """Per-symbol ``-log2 p(x)`` plus its derivatives with respect to ``mu`` and ``b``.

    The floor ``max(p, P_MIN)`` is treated as a constant where it is active,
    so floored symbols contribute no gradient through their own mass.  With
    ``pass_through`` a floored target instead receives the gradient of its
    unfloored mass (the floor is bypassed whenever the gradient would raise
    ``p``), which keeps the optimiser from getting stuck once a prediction
    has drifted far away from its target.
    """
    mu = np.clip(np.asarray(mu, dtype=np.float64).ravel(), lo - MU_CLAMP, hi + MU_CLAMP)
    b = np.asarray(b, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.int64).ravel()
    n = len(x)
    raw = raw_mass_table(mu, b, lo, hi)
    # CDF at the A+1 interval edges with derivatives; the outer edges are constant 0 and 1
    edges = np.arange(lo, hi + 2, dtype=np.float64)[None, :] - 0.5
    m = mu[:, None]
    bb = b[:, None]
    d = edges - m
    e = np.exp(-np.abs(d) / bb)
    pdf = e / (2 * bb)
    dF_dmu = -pdf
    dF_db = -pdf * d / bb
    dF_dmu[:, 0] = dF_dmu[:, -1] = 0.0
    dF_db[:, 0] = dF_db[:, -1] = 0.0
    dp_dmu = dF_dmu[:, 1:] - dF_dmu[:, :-1]
    dp_db = dF_db[:, 1:] - dF_db[:, :-1]
    live = raw > P_MIN
    pf = np.where(live, raw, P_MIN)
    z = pf.sum(axis=1)
    dz_dmu = np.where(live, dp_dmu, 0.0).sum(axis=1)
    dz_db = np.where(live, dp_db, 0.0).sum(axis=1)
    rows = np.arange(n)
    col = x - lo
    px = pf[rows, col]
    lx = live[rows, col]
    ln2 = math.log(2.0)
    nll = (np.log(z) - np.log(px)) / ln2
    t_mu = np.where(lx, -dp_dmu[rows, col] / px, 0.0)
    t_b = np.where(lx, -dp_db[rows, col] / px, 0.0)
    if pass_through and not lx.all():
        dead = ~lx
        pm, pb = _tail_log_grads(mu[dead], b[dead], x[dead].astype(np.float64), lo, hi)
        t_mu[dead] = pm
        t_b[dead] = pb
    g_mu = (dz_dmu / z + t_mu) / ln2
    g_b = (dz_db / z + t_b) / ln2
    return nll, g_mu, g_b

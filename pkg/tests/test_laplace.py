import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpac.errors import RangeError
from mpac.laplace import (B_MIN, P_MIN, estimate_bits, laplace_prob, laplace_table, nll_and_grads,
                          raw_mass_table)

mus = st.floats(-300, 300, allow_nan=False)
bs = st.floats(B_MIN, 200, allow_nan=False)


def test_closed_form_center():
    assert raw_mass_table([0.0], [1.0], -1000, 1000)[0, 1000] == pytest.approx(1 - math.exp(-0.5), rel=1e-12)
    assert raw_mass_table([5.0], [2.0], -255, 255)[0, 260] == pytest.approx(1 - math.exp(-0.25), rel=1e-12)
    # floored symbols take a little mass away after renormalisation
    assert laplace_prob(0.0, 1.0, 0, (-20, 20)) == pytest.approx(1 - math.exp(-0.5), rel=1e-3)
    wide = laplace_prob(0.0, 1.0, 0, (-1000, 1000))
    assert wide == pytest.approx((1 - math.exp(-0.5)) / (1 + 1980 * P_MIN), rel=1e-3)


def test_symmetry_about_integer_mu():
    for d in range(1, 20):
        assert laplace_prob(3.0, 4.0, 3 + d, (-200, 200)) == pytest.approx(laplace_prob(3.0, 4.0, 3 - d, (-200, 200)),
                                                                         rel=1e-12)


def test_tails_fold_into_edges():
    raw = raw_mass_table([0.0], [1.0], -2, 2)[0]
    assert raw[0] == pytest.approx(0.5 * math.exp(-1.5))
    assert raw[-1] == pytest.approx(0.5 * math.exp(-1.5))
    assert raw.sum() == pytest.approx(1.0, abs=1e-15)


def test_out_of_alphabet_symbol():
    with pytest.raises(RangeError):
        laplace_prob(0.0, 1.0, 5, (0, 4))


def test_mass_sums_to_one_for_random_params():
    rng = np.random.default_rng(0)
    mu = rng.uniform(-400, 400, 10_000)
    b = np.exp(rng.uniform(np.log(B_MIN), np.log(300), 10_000))
    t = laplace_table(mu, b, -255, 255)
    assert np.abs(t.sum(axis=1) - 1).max() < 2.0 ** -20
    assert t.min() > 0


@given(mus, bs, st.integers(-5, 5), st.integers(0, 40))
def test_floor_and_monotone_cdf(mu, b, lo, width):
    hi = lo + width
    p = laplace_table([mu], [b], lo, hi)[0]
    cdf = np.cumsum(p)
    assert np.all(np.diff(cdf) > 0) and cdf[0] > 0
    assert p.min() >= P_MIN / (1 + (width + 1) * P_MIN) * (1 - 1e-12)


def test_estimate_bits_examples():
    # two-symbol alphabet with mu centered between: p = 0.5 each
    assert estimate_bits(np.full(8, 0.5), np.full(8, 1.0), np.zeros(8, int), 0, 1) == pytest.approx(8.0)
    assert estimate_bits([], [], [], 0, 1) == 0.0


def test_floored_symbol_costs_sixteen_bits_before_renormalisation():
    # far-away target under a narrow law sits on the floor; after renormalisation it is -log2(P_MIN / Z)
    p = laplace_table([0.0], [B_MIN], -100, 100)[0]
    z = 1 + 200 * P_MIN  # the center keeps ~1, every other symbol is floored
    assert -np.log2(p[200]) == pytest.approx(16 + np.log2(z), abs=1e-9)


def test_constant_prediction_costs_almost_nothing():
    bits = estimate_bits(np.full(100, 7.0), np.full(100, B_MIN), np.full(100, 7), 0, 255)
    assert bits / 100 < 0.01


@given(mus, st.floats(0.05, 100), st.integers(-255, 255))
def test_nll_gradients_match_finite_differences(mu, b, x):
    lo, hi = -255, 255
    nll, g_mu, g_b = nll_and_grads([mu], [b], [x], lo, hi)
    assert nll[0] == pytest.approx(-math.log2(laplace_table([mu], [b], lo, hi)[0, x - lo]), rel=1e-9)
    h = 1e-6 * max(1.0, abs(mu))
    fd_mu = (nll_and_grads([mu + h], [b], [x], lo, hi)[0][0] - nll_and_grads([mu - h], [b], [x], lo, hi)[0][0]) / (2 * h)
    hb = 1e-6 * b
    fd_b = (nll_and_grads([mu], [b + hb], [x], lo, hi)[0][0] - nll_and_grads([mu], [b - hb], [x], lo, hi)[0][0]) / (2 * hb)
    # kinks where a mass crosses the floor are rare; allow for them by comparing with a loose absolute term
    assert g_mu[0] == pytest.approx(fd_mu, rel=1e-4, abs=1e-4)
    assert g_b[0] == pytest.approx(fd_b, rel=1e-4, abs=1e-4)


def test_pass_through_gives_gradient_on_floored_targets():
    _, g_mu, g_b = nll_and_grads([0.0], [0.5], [100], -255, 255)
    assert abs(g_mu[0]) < 1e-6
    _, g_mu, g_b = nll_and_grads([0.0], [0.5], [100], -255, 255, pass_through=True)
    assert g_mu[0] < 0 and g_b[0] < 0   # move mu toward the target and widen the law

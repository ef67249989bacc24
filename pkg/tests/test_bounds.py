import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibmht.bounds import (
    BISECTION_TOL,
    BoundParams,
    binary_entropy,
    delta_i,
    delta_i_envelope,
    lower_conf_bound,
    p_value,
    plugin_mi,
    theta,
)
from ibmht.errors import EmptyHistogram, OutOfRange
from ibmht.prob import Histogram2D

# Reference numbers produced by a standalone script with no package imports.
H_005 = 0.1985152433458726
THETA_01_1000_2X2 = 0.09941471141243939
RAW_01_2X2 = 0.6504763444710233
LN_140 = 4.941642422609304
PLUGIN_2112 = 0.056633012265132426


def raw_oracle(th, su, sv):
    """Vectorized piecewise bound, written independently of the package."""
    th = np.asarray(th, dtype=float)
    x = th / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        hx = np.where((x > 0) & (x < 1), -x * np.log(x) - (1 - x) * np.log(1 - x), 0.0)
    first = x * np.log((su * sv - 1) * (su - 1) * (sv - 1)) + 3 * hx
    return np.where(th <= 2 - 2 / su, first, np.log(su))


def envelope_oracle(th_grid, su, sv):
    """Running max over a dense grid, capped at log min(U, V)."""
    return np.minimum(np.maximum.accumulate(raw_oracle(th_grid, su, sv)), np.log(min(su, sv)))


def theta_oracle(eps, n, su, sv):
    return np.sqrt(2 / n * (np.log(2.0 ** (su * sv) - 2) - np.log(eps)))


# --- frozen values ----------------------------------------------------------


def test_binary_entropy_values():
    assert binary_entropy(0.5) == pytest.approx(math.log(2), abs=1e-15)
    assert binary_entropy(0.5, unit="bits") == pytest.approx(1.0, abs=1e-15)
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    assert binary_entropy(0.05) == pytest.approx(H_005, abs=1e-15)
    with pytest.raises(OutOfRange):
        binary_entropy(1.5)


def test_theta_value_and_errors():
    p = BoundParams(1000, (2, 2))
    assert theta(0.1, p) == pytest.approx(THETA_01_1000_2X2, abs=1e-15)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(OutOfRange):
            theta(bad, p)


def test_theta_large_alphabet_is_finite():
    # 2**(100*100) overflows a float; the log form must not
    p = BoundParams(10**6, (100, 100))
    expected = math.sqrt(2e-6 * (10000 * math.log(2) - math.log(0.05)))
    assert theta(0.05, p) == pytest.approx(expected, rel=1e-12)


def test_delta_i_values():
    p = BoundParams(100, (2, 2))
    assert delta_i(0.1, p) == pytest.approx(RAW_01_2X2, abs=1e-15)
    assert delta_i(0.0, p) == 0.0
    # second branch: th > 2 - 2/U
    assert delta_i(1.5, p) == pytest.approx(math.log(2), abs=1e-15)
    p8 = BoundParams(100, (8, 4))
    assert delta_i(1.9, p8) == pytest.approx(math.log(8), abs=1e-15)
    assert delta_i(1.5, p8) == pytest.approx(float(raw_oracle(1.5, 8, 4)), abs=1e-15)
    assert math.log((4 * 4 - 1) * 3 * 3) == pytest.approx(math.log(135), abs=0)
    assert math.log(140) == pytest.approx(LN_140, abs=1e-15)


def test_plugin_mi_value():
    hist = Histogram2D(np.array([[2, 1], [1, 2]]))
    assert plugin_mi(hist) == pytest.approx(PLUGIN_2112, abs=1e-15)
    assert plugin_mi(hist, "bits") == pytest.approx(PLUGIN_2112 / math.log(2), abs=1e-15)
    with pytest.raises(EmptyHistogram):
        plugin_mi(Histogram2D(np.zeros((2, 2), dtype=int)))


# --- envelope properties ---------------------------------------------------


@pytest.mark.parametrize("sizes", [(2, 2), (2, 3), (3, 2), (4, 4), (8, 4), (4, 8), (10, 3)])
def test_envelope_matches_dense_oracle(sizes):
    su, sv = sizes
    grid = np.linspace(0, 2.5, 10_001)
    params = BoundParams(10, sizes)
    env = np.array([delta_i_envelope(t, params) for t in grid])
    raw = np.array([delta_i(t, params) for t in grid])
    assert np.all(np.diff(env) >= 0)
    assert np.all(env >= np.minimum(raw, math.log(min(sizes))) - 1e-15)
    assert np.all(env <= math.log(min(sizes)) + 1e-15)
    # dense running max may undershoot the exact sup by at most one grid step of slope
    oracle = envelope_oracle(grid, su, sv)
    assert np.all(env >= oracle - 1e-12)
    assert np.max(env - oracle) < 5e-3


@given(
    su=st.integers(2, 12),
    sv=st.integers(2, 12),
    a=st.floats(0, 3),
    b=st.floats(0, 3),
)
@settings(max_examples=200, deadline=None)
def test_envelope_monotone(su, sv, a, b):
    p = BoundParams(10, (su, sv))
    lo, hi = sorted((a, b))
    assert delta_i_envelope(lo, p) <= delta_i_envelope(hi, p)


def test_envelope_units():
    p_n, p_b = BoundParams(10, (4, 4)), BoundParams(10, (4, 4), "bits")
    assert delta_i_envelope(0.3, p_b) == pytest.approx(delta_i_envelope(0.3, p_n) / math.log(2), abs=1e-15)


# --- lower bound and p-values ----------------------------------------------


def test_lower_conf_bound():
    p = BoundParams(1000, (2, 2))
    expected = 0.5 - float(envelope_oracle(np.linspace(0, THETA_01_1000_2X2, 2), 2, 2)[-1])
    assert lower_conf_bound(0.5, 0.1, p) == pytest.approx(expected, abs=1e-12)


@given(
    est=st.floats(0, 1.5),
    alpha=st.floats(0, 1),
    n=st.integers(10, 10**7),
    su=st.integers(2, 6),
    sv=st.integers(2, 6),
    e1=st.floats(1e-12, 1 - 1e-9),
    e2=st.floats(1e-12, 1 - 1e-9),
)
@settings(max_examples=300, deadline=None)
def test_rejection_monotone_in_eps(est, alpha, n, su, sv, e1, e2):
    p = BoundParams(n, (su, sv))
    lo, hi = sorted((e1, e2))
    if lower_conf_bound(est, lo, p) > alpha:
        assert lower_conf_bound(est, hi, p) > alpha


@given(
    a=st.floats(0, 1),
    b=st.floats(0, 1),
    alpha=st.floats(0, 0.5),
    n=st.integers(100, 10**7),
)
@settings(max_examples=200, deadline=None)
def test_p_value_nonincreasing_in_estimate(a, b, alpha, n):
    p = BoundParams(n, (4, 4))
    lo, hi = sorted((a, b))
    assert p_value(hi, alpha, p) <= p_value(lo, alpha, p) + BISECTION_TOL


def test_p_value_is_one_without_evidence():
    assert p_value(0.0, 0.05, BoundParams(10**5, (2, 2))) == 1.0
    # alpha above log min(U,V) cannot be certified
    assert p_value(math.log(2), 0.7, BoundParams(10**9, (2, 2))) == 1.0


def _grid_bracket(est, alpha, n, sizes):
    su, sv = sizes
    eps = np.concatenate([np.logspace(-300, -1, 60_000), np.linspace(0.1, 1, 90_001)[1:]])
    th = theta_oracle(eps, n, su, sv)
    dense = np.linspace(0, max(th.max(), 2.5), 400_001)
    env_dense = envelope_oracle(dense, su, sv)
    env = np.interp(th, dense, env_dense)
    ok = est - env > alpha
    first = int(np.argmax(ok))
    assert ok[first], "predicate never holds on the grid"
    return (eps[first - 1] if first else 0.0), eps[first]


@pytest.mark.parametrize(
    "est,alpha,n,sizes",
    [
        (math.log(2), 0.05, 10**5, (2, 2)),
        (0.16, 0.05, 10**5, (2, 2)),
        (0.40, 0.10, 10**5, (4, 4)),
        (0.30, 0.15, 10**6, (4, 4)),
        (0.23, 0.05, 10**5, (4, 4)),
        (0.14, 0.05, 10**6, (8, 4)),
    ],
)
def test_p_value_matches_grid_infimum(est, alpha, n, sizes):
    lo, hi = _grid_bracket(est, alpha, n, sizes)
    p = p_value(est, alpha, BoundParams(n, sizes))
    assert lo - 1e-12 <= p <= hi + BISECTION_TOL
    assert lower_conf_bound(est, min(p, 1 - 1e-12), BoundParams(n, sizes)) > alpha or p == 1.0


def test_p_value_bits_consistent():
    pn = p_value(0.2, 0.05, BoundParams(10**5, (2, 2)))
    pb = p_value(0.2 / math.log(2), 0.05 / math.log(2), BoundParams(10**5, (2, 2), "bits"))
    assert pn == pytest.approx(pb, abs=1e-9)


def test_p_value_validates():
    with pytest.raises(OutOfRange):
        p_value(0.1, -0.1, BoundParams(10, (2, 2)))
    with pytest.raises(OutOfRange):
        p_value(float("nan"), 0.1, BoundParams(10, (2, 2)))
    with pytest.raises(OutOfRange):
        BoundParams(0, (2, 2))

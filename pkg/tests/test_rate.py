import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relaynet.measures import GriddedMeasure, Partition, Window
from relaynet.rate import (
    entropy_pair,
    event_rate,
    ldp_slope,
    path_cost,
    relative_entropy,
    scalar_rate_dp,
    segment_log_mean,
)

from oracles import zero_target_grid_oracle


# ---------------------------------------------------------------- pointwise entropy

def test_entropy_pair_diagonal():
    assert entropy_pair(0.7, 0.7) == pytest.approx(0.0, abs=1e-16)


def test_entropy_pair_zero_first_argument():
    assert entropy_pair(0.0, 2.5) == 2.5
    assert entropy_pair(0.0, 0.0) == 0.0


def test_entropy_pair_value():
    assert entropy_pair(2.0, 1.0) == pytest.approx(2 * np.log(2) - 1, abs=1e-12)


def test_entropy_pair_infinite_against_zero():
    assert entropy_pair(0.1, 0.0) == np.inf


def test_entropy_pair_rejects_negative():
    with pytest.raises(ValueError):
        entropy_pair(-1.0, 1.0)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(1e-3, 10))
def test_entropy_pair_nonnegative_and_convex(x1, x2, y):
    assert entropy_pair(x1, y) >= -1e-12
    mid = entropy_pair(0.5 * (x1 + x2), y)
    assert mid <= 0.5 * (entropy_pair(x1, y) + entropy_pair(x2, y)) + 1e-9


# ---------------------------------------------------------------- relative entropy

def _grid(mass):
    return GriddedMeasure(np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0]), Partition.single(Window.unit(1)),
                          np.asarray(mass, dtype=float).reshape(2, 1, 1))


def test_relative_entropy_self():
    mu = _grid([0.3, 0.7])
    assert relative_entropy(mu, mu) == 0.0


def test_relative_entropy_scaled():
    mu = _grid([0.3, 0.7])
    c = 2.5
    assert relative_entropy(mu.scaled(c), mu) == pytest.approx(c * np.log(c) - c + 1, rel=1e-12)


def test_relative_entropy_null_cell():
    assert relative_entropy(_grid([0.3, 0.1]), _grid([0.3, 0.0])) == np.inf


@given(st.lists(st.floats(0, 5), min_size=2, max_size=2), st.lists(st.floats(0.01, 5), min_size=2, max_size=2))
def test_relative_entropy_nonnegative(a, b):
    val = relative_entropy(_grid(a), _grid(b))
    assert val >= -1e-12
    if np.allclose(a, b, rtol=0, atol=0):
        assert val == 0


# ---------------------------------------------------------------- segment log mean

@pytest.mark.parametrize("a, b", [(0.2, 0.7), (0.3, 0.3 + 1e-6), (0.0, 0.5), (1e-3, 1.0)])
def test_segment_log_mean_against_quadrature(a, b):
    from scipy.integrate import quad

    ref = quad(np.log, a, b)[0] / (b - a)
    assert segment_log_mean(a, b) == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_segment_log_mean_degenerate():
    assert segment_log_mean(0.0, 0.0) == -np.inf
    assert segment_log_mean(0.4, 0.4) == pytest.approx(np.log(0.4))


# ---------------------------------------------------------------- path cost and rate DP

def test_path_cost_fluid_path_is_near_zero():
    t = np.linspace(0, 1, 2001)
    beta = 1 - np.exp(-t)
    assert path_cost(beta, t - beta) < 1e-6


def test_rate_fluid_target():
    rp = scalar_rate_dp(lambda t: t - (1 - np.exp(-t)), 400, 400)
    assert 0 <= rp.value <= 5e-3
    assert not rp.infinite


def test_rate_zero_target_matches_grid_oracle():
    oracle, _ = zero_target_grid_oracle(20, 10)
    assert scalar_rate_dp(lambda t: 0 * t, 400, 400).value == pytest.approx(oracle, abs=1e-3)


def test_rate_full_frustration_target_is_finite_and_costly():
    # the busy path can leave zero at once, so h(1 | beta) stays integrable
    rp = scalar_rate_dp(lambda t: t, 200, 200)
    assert np.isfinite(rp.value) and rp.value > 0.3


def test_rate_rejects_decreasing_target():
    with pytest.raises(ValueError):
        scalar_rate_dp(np.array([0.0, 0.2, 0.1]), 10, 2)


def test_rate_json_schema():
    rp = scalar_rate_dp(lambda t: 0.1 * t, 40, 20)
    obj = json.loads(rp.to_json())
    assert {"value", "grid", "argmin_path_csv"} <= set(obj)
    lines = obj["argmin_path_csv"].splitlines()
    assert lines[0] == "time,beta" and len(lines) == 22


@pytest.mark.parametrize("target", [
    lambda t: 0.2 * t,
    lambda t: t - (1 - np.exp(-t)),
    lambda t: 0.3 * t ** 2,
])
def test_rate_dp_refinement(target):
    values = [scalar_rate_dp(target, g, g, polish=False).dp_value for g in (25, 50, 100, 200)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_rate_optimizer_is_admissible():
    rp = scalar_rate_dp(lambda t: 0.25 * t, 100, 100)
    assert rp.beta[0] == 0 and rp.beta[-1] <= 1
    assert np.all(np.diff(rp.beta) >= -1e-15)
    assert path_cost(rp.beta, rp.target) == pytest.approx(rp.value, rel=1e-12)


# ---------------------------------------------------------------- event rate

def test_event_rate_below_fluid_level_is_zero():
    assert event_rate(0.2, 200).value == pytest.approx(0.0, abs=1e-6)


def test_event_rate_monotone_in_level():
    vals = [event_rate(a, 200).value for a in (0.37, 0.4, 0.45, 0.5, 0.55)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_event_rate_agrees_with_path_rate():
    ev = event_rate(0.5, 200)
    assert ev.gamma[-1] == pytest.approx(0.5)
    rp = scalar_rate_dp(ev.gamma, 400, 200)
    assert rp.value == pytest.approx(ev.value, abs=1e-4)


# ---------------------------------------------------------------- slope

def test_slope_exponential():
    lam = np.array([10.0, 20.0, 40.0])
    assert ldp_slope(lam, np.exp(-0.3 * lam)) == pytest.approx(0.3)


def test_slope_constant_probability():
    assert ldp_slope([1.0, 2.0, 3.0], [0.2, 0.2, 0.2]) == pytest.approx(0.0, abs=1e-12)


def test_slope_zero_probability_raises():
    with pytest.raises(ValueError):
        ldp_slope([1.0, 2.0], [0.1, 0.0])

"""Harmonized scale optimization.

Oracles: a bisection root finder for the balance point, and measured
quantization error of uniform samples pushed through the applied grids.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmoq.errors import ConfigError
from harmoq.quantizer import QuantizerConfig, fake_quantize, theoretical_mse
from harmoq.scaling import (SCALE_MAX, SCALE_MIN, BoundarySet, applied_configs,
                            apply_scale, component_mse, optimal_scale,
                            scale_validity_interval)


def bisect_balance(theta, bits_a, bits_w, lo=1e-3, hi=1e3, iters=200) -> float:
    """Root of MSE_x(s) - MSE_w(s), which is strictly decreasing in s."""
    def gap(s):
        return (component_mse("act", s, theta, bits_a)
                - component_mse("wt", s, theta, bits_w))
    assert gap(lo) > 0 > gap(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def boundary_sets(draw):
    a_x = draw(st.floats(-5, 5))
    a_w = draw(st.floats(-5, 5))
    g_x = draw(st.floats(0.011, 10))
    g_w = draw(st.floats(0.011, 10))
    return BoundarySet(a_x, a_x + g_x, a_w, a_w + g_w)


thetas = st.composite(boundary_sets)()


def test_component_mse_matches_unscaled_theory():
    theta = BoundarySet(-0.3, 1.1, -0.8, 0.6)
    for side, a, b, bits in (("act", -0.3, 1.1, 4), ("wt", -0.8, 0.6, 3)):
        want = theoretical_mse(QuantizerConfig(bits, a, b))
        assert component_mse(side, 1.0, theta, bits) == pytest.approx(want, rel=1e-14)


def test_component_mse_hand_value():
    # span 2 at 2 bits: step 2/3, uniform model (2/3)^2 / 12 = 4/108
    theta = BoundarySet(-1.0, 1.0, -1.0, 1.0)
    assert component_mse("act", 1.0, theta, 2) == pytest.approx(4.0 / 108.0, rel=1e-15)
    assert component_mse("wt", 1.0, theta, 2) == pytest.approx(4.0 / 108.0, rel=1e-15)


def test_doubling_scale_trades_error_exactly():
    theta = BoundarySet(-0.2, 0.9, -1.3, 0.4)
    act1 = component_mse("act", 1.0, theta, 4)
    wt1 = component_mse("wt", 1.0, theta, 4)
    assert component_mse("act", 2.0, theta, 4) == pytest.approx(act1 / 4.0, rel=1e-14)
    assert component_mse("wt", 2.0, theta, 4) == pytest.approx(wt1 * 4.0, rel=1e-14)


def test_component_mse_equals_applied_grid_theory():
    theta = BoundarySet(-0.7, 1.9, -0.25, 0.35)
    for s in (0.3, 1.0, 4.7):
        act, wt = applied_configs(theta, s, 5, 3)
        assert component_mse("act", s, theta, 5) == pytest.approx(
            theoretical_mse(act), rel=1e-12)
        assert component_mse("wt", s, theta, 3) == pytest.approx(
            theoretical_mse(wt), rel=1e-12)


def test_component_mse_matches_measured_error():
    rng = np.random.default_rng(21)
    theta = BoundarySet(-1.0, 1.0, -0.5, 0.5)
    s = 2.0
    act, wt = applied_configs(theta, s, 4, 4)
    x = rng.uniform(theta.alpha_x, theta.beta_x, size=10 ** 6) / s
    w = rng.uniform(theta.alpha_w, theta.beta_w, size=10 ** 6) * s
    mse_x = float(np.mean((fake_quantize(x, act) - x) ** 2))
    mse_w = float(np.mean((fake_quantize(w, wt) - w) ** 2))
    assert mse_x == pytest.approx(component_mse("act", s, theta, 4), rel=0.03)
    assert mse_w == pytest.approx(component_mse("wt", s, theta, 4), rel=0.03)


def test_optimal_scale_hand_values():
    same = BoundarySet(-1.0, 1.0, -1.0, 1.0)
    assert optimal_scale(same, 4, 4) == 1.0
    wide_acts = BoundarySet(-2.0, 2.0, -0.5, 0.5)
    assert optimal_scale(wide_acts, 4, 4) == pytest.approx(2.0, rel=1e-15)
    # raw balance sqrt(34/0.1) = sqrt(340) ~ 18.44 exceeds the cap
    extreme = BoundarySet(-17.0, 17.0, -0.05, 0.05)
    assert optimal_scale(extreme, 4, 4) == SCALE_MAX


def test_balance_identity_at_interior_optimum():
    rng = np.random.default_rng(22)
    for _ in range(50):
        a_x = rng.uniform(-2, 2)
        a_w = rng.uniform(-2, 2)
        theta = BoundarySet(a_x, a_x + rng.uniform(0.5, 3),
                            a_w, a_w + rng.uniform(0.5, 3))
        bits_a = int(rng.integers(2, 9))
        bits_w = int(rng.integers(2, 9))
        s = optimal_scale(theta, bits_a, bits_w)
        if s in (SCALE_MIN, SCALE_MAX):
            continue
        mx = component_mse("act", s, theta, bits_a)
        mw = component_mse("wt", s, theta, bits_w)
        assert abs(mx - mw) <= 1e-12 * max(mx, mw)


def test_optimal_scale_ties_bisection_oracle():
    rng = np.random.default_rng(23)
    checked = 0
    while checked < 20:
        a_x = rng.uniform(-2, 2)
        a_w = rng.uniform(-2, 2)
        theta = BoundarySet(a_x, a_x + rng.uniform(0.3, 4),
                            a_w, a_w + rng.uniform(0.3, 4))
        bits_a = int(rng.integers(2, 9))
        bits_w = int(rng.integers(2, 9))
        s = optimal_scale(theta, bits_a, bits_w)
        if s in (SCALE_MIN, SCALE_MAX):
            continue
        root = bisect_balance(theta, bits_a, bits_w)
        assert s == pytest.approx(root, rel=1e-10)
        checked += 1


def test_clamped_scale_is_feasible_minimizer():
    # total model error a/s^2 + b s^2 is convex, so when the balance
    # point falls outside the feasible interval the nearer endpoint wins
    theta = BoundarySet(-17.0, 17.0, -0.05, 0.05)
    s = optimal_scale(theta, 4, 4)
    lo, hi = scale_validity_interval(theta)
    total = (component_mse("act", s, theta, 4)
             + component_mse("wt", s, theta, 4))
    for cand in np.linspace(lo, hi, 500):
        cand_total = (component_mse("act", float(cand), theta, 4)
                      + component_mse("wt", float(cand), theta, 4))
        assert total <= cand_total + 1e-15


def test_validity_interval_values():
    wide = BoundarySet(-1.0, 1.0, -1.0, 1.0)
    assert scale_validity_interval(wide) == (SCALE_MIN, SCALE_MAX)
    thin_w = BoundarySet(-1.0, 1.0, 0.0, 0.02)
    lo, hi = scale_validity_interval(thin_w)
    assert lo == pytest.approx(0.5, rel=1e-15)
    assert hi == SCALE_MAX
    thin_x = BoundarySet(0.0, 0.02, -1.0, 1.0)
    lo, hi = scale_validity_interval(thin_x)
    assert lo == SCALE_MIN
    assert hi == pytest.approx(2.0, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(thetas)
def test_unit_scale_always_valid(theta):
    lo, hi = scale_validity_interval(theta)
    assert lo <= 1.0 <= hi


@settings(max_examples=100, deadline=None)
@given(thetas, st.integers(2, 8), st.integers(2, 8))
def test_optimal_scale_stays_feasible(theta, bits_a, bits_w):
    s = optimal_scale(theta, bits_a, bits_w)
    lo, hi = scale_validity_interval(theta)
    assert lo <= s <= hi


def test_apply_scale_identity_and_factor():
    rng = np.random.default_rng(24)
    w = rng.standard_normal((3, 4))
    x = rng.standard_normal((5, 4))
    w1, x1 = apply_scale(w, x, 1.0)
    assert np.array_equal(w1, w) and np.array_equal(x1, x)
    w2, x2 = apply_scale(w, x, 2.0)
    assert np.array_equal(w2, 2.0 * w) and np.array_equal(x2, x / 2.0)
    with pytest.raises(ConfigError):
        apply_scale(w, x, 0.0)
    with pytest.raises(ConfigError):
        apply_scale(w, x, -1.0)


def test_scaled_quantization_commutes_with_grid():
    # quantizing x/s on bounds (a/s, b/s) is the s-fold shrink of
    # quantizing x on (a, b): same index, linearly mapped grid
    rng = np.random.default_rng(25)
    x = rng.uniform(-2.5, 2.5, size=4000)
    base = QuantizerConfig(3, -1.0, 1.5)
    for s in (0.25, 3.0):
        scaled = QuantizerConfig(3, base.alpha / s, base.beta / s)
        got = fake_quantize(x / s, scaled)
        want = fake_quantize(x, base) / s
        assert np.allclose(got, want, rtol=1e-12, atol=1e-15)


def test_applied_configs_transforms_bounds():
    theta = BoundarySet(-0.4, 1.2, -0.9, 0.3)
    act, wt = applied_configs(theta, 4.0, 6, 2)
    assert act.bits == 6 and wt.bits == 2
    assert act.alpha == pytest.approx(-0.1) and act.beta == pytest.approx(0.3)
    assert wt.alpha == pytest.approx(-3.6) and wt.beta == pytest.approx(1.2)


def test_boundary_set_validation_and_roundtrip():
    with pytest.raises(ConfigError):
        BoundarySet(0.0, 0.005, -1.0, 1.0)
    with pytest.raises(ConfigError):
        BoundarySet(-1.0, 1.0, 0.5, 0.2)
    with pytest.raises(ConfigError):
        BoundarySet(-np.inf, 1.0, -1.0, 1.0)
    theta = BoundarySet(-0.4, 1.2, -0.9, 0.3)
    assert BoundarySet.from_array(theta.to_array()) == theta


def test_component_mse_validation():
    theta = BoundarySet(-1.0, 1.0, -1.0, 1.0)
    with pytest.raises(ConfigError):
        component_mse("weights", 1.0, theta, 4)
    with pytest.raises(ConfigError):
        component_mse("act", 0.0, theta, 4)

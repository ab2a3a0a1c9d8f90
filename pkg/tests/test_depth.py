"""Depth recursions, normalized limits, pole fitting, surrogate families."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ntk_kit import (
    DualSeries,
    InvalidRegime,
    NormalizationUndefined,
    NumericalFailure,
    estimate_pole_order,
    f_alpha_iterate,
    f_alpha_sandwich,
    iterate_dual,
    normalized_trace,
    ntk_closed_form,
    ntk_recursion,
    piecewise_linear_iterate,
    piecewise_linear_limit,
    preset,
    psi_infinity,
    psi_trace_estimate,
)

CUBIC = preset("corollary_d", 2)


def naive_ntk(dual, z, depth):
    """Reference recursion in plain python floats."""
    v = float(z)
    K = float(z)
    for _ in range(depth):
        vn = float(dual(v))
        K = vn + K * float(dual.deriv(v))
        v = vn
    return K


# ---------------------------------------------------------------------------
# recursion vs closed form vs naive oracle
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "name,d", [("corollary_d", 1), ("corollary_d", 2), ("relu", None), ("normalized_sine", None)]
)
def test_recursion_matches_naive_loop(name, d):
    dual = preset(name, d)
    for z in (0.0, 0.17, 0.5, 0.93, 1.0):
        for L in (0, 1, 3, 17):
            got = ntk_recursion(dual, z, L)
            want = naive_ntk(dual, z, L)
            assert got == pytest.approx(want, rel=1e-13, abs=1e-300)


def test_closed_form_equals_recursion():
    rng = np.random.default_rng(7)
    duals = [
        preset("corollary_d", 1),
        preset("corollary_d", 2),
        preset("corollary_d", 4),
        preset("hermite2"),
        preset("relu"),
        preset("normalized_erf"),
        preset("linear"),
    ]
    for _ in range(200):
        dual = duals[rng.integers(len(duals))]
        z = float(rng.uniform(0.0, 1.0))
        L = int(rng.integers(1, 41))
        a = ntk_recursion(dual, z, L)
        b = ntk_closed_form(dual, z, L)
        assert abs(a - b) <= 1e-10 * max(abs(a), abs(b), 1e-300)


def test_ntk_at_one_is_geometric_sum():
    # K_L(1) = sum of bprime**i, i = 0..L
    for name, d, L in [("corollary_d", 2, 12), ("relu", None, 40), ("hermite2", None, 9)]:
        dual = preset(name, d)
        want = sum(dual.bprime**i for i in range(L + 1))
        assert ntk_recursion(dual, 1.0, L) == pytest.approx(want, rel=1e-12)


def test_iterate_dual_array_and_depth_zero():
    zs = np.array([0.0, 0.4, 1.0])
    assert np.array_equal(iterate_dual(CUBIC, zs, 0), zs)
    out = iterate_dual(CUBIC, zs, 3)
    assert out.shape == (3,)
    assert out[0] == 0.0 and abs(out[2] - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        iterate_dual(CUBIC, 0.5, -1)
    with pytest.raises(ValueError):
        iterate_dual(CUBIC, 1.5, 3)


@given(
    st.floats(min_value=0.0, max_value=1.0),
    st.integers(min_value=1, max_value=60),
)
def test_iterates_stay_bounded_and_monotone_in_depth(z, depth):
    """An increasing map's orbit is monotone; all orbits live in [0, 1]."""
    traj = [float(iterate_dual(CUBIC, z, L)) for L in range(depth + 1)]
    arr = np.asarray(traj)
    assert np.all(arr >= -1e-15) and np.all(arr <= 1.0 + 1e-12)
    d = np.diff(arr)
    assert np.all(d <= 1e-12) or np.all(d >= -1e-12)


# ---------------------------------------------------------------------------
# normalized traces and the depth-infinity limit
# ---------------------------------------------------------------------------


def test_trace_shapes_and_depth_zero_row():
    tr = normalized_trace(CUBIC, 0.5, 64)
    assert tr.iterates.shape == (65,)
    assert tr.normalized_nngp[0] == 0.5 and tr.normalized_ntk[0] == 0.5
    assert np.array_equal(tr.depths, np.arange(65))


def test_trace_requires_linear_mass():
    with pytest.raises(NormalizationUndefined):
        normalized_trace(preset("hermite2"), 0.5, 4)


def test_normalized_composite_converges_geometrically():
    # successive N gaps shrink by roughly the linear coefficient each depth
    tr = normalized_trace(CUBIC, 0.5, 60)
    N = tr.normalized_nngp
    gaps = np.abs(np.diff(N))
    assert gaps[40] <= 1e-14  # long converged
    nz = gaps[:12]
    assert np.all(nz[1:] <= 0.75 * nz[:-1] + 1e-16)


def test_tangent_trace_converges_harmonically_to_composite_limit():
    """P approaches the same limit as N, but only like 1/depth."""
    z = 0.5
    limit = psi_infinity(CUBIC, z)
    tr = normalized_trace(CUBIC, z, 2000)
    P = tr.normalized_ntk
    assert abs(tr.normalized_nngp[-1] - limit) <= 1e-13
    # harmonic residue: (P_L - limit) * (L + 1) settles to a constant
    c1 = (P[1000] - limit) * 1001
    c2 = (P[2000] - limit) * 2001
    assert abs(c1 - c2) <= 0.01 * abs(c1)
    # the documented speed: half the depth leaves about twice the residue
    assert 1.8 <= (P[1000] - limit) / (P[2000] - limit) <= 2.2
    # relative Cauchy gap at this depth pair sits near 5.8e-4, far above the
    # geometric composite's
    rel_gap = abs(P[2000] - P[1000]) / P[1000]
    assert 1e-4 <= rel_gap <= 1e-3


def test_psi_infinity_agrees_with_deep_composite():
    for z in (0.1, 0.5, 0.9, 0.99):
        deep = normalized_trace(CUBIC, z, 3000).normalized_nngp[-1]
        assert psi_infinity(CUBIC, z) == pytest.approx(deep, rel=1e-12)


def test_psi_infinity_pole_and_shapes():
    assert psi_infinity(CUBIC, 1.0) == np.inf
    out = psi_infinity(CUBIC, np.array([0.3, 1.0, 0.7]))
    assert out.shape == (3,)
    assert np.isinf(out[1]) and np.all(np.isfinite(out[[0, 2]]))
    assert psi_infinity(CUBIC, 0.0) == 0.0


def test_psi_infinity_rejects_wrong_regimes():
    with pytest.raises(InvalidRegime):
        psi_infinity(preset("relu"), 0.5)
    with pytest.raises(NormalizationUndefined):
        psi_infinity(preset("hermite2"), 0.5)


def test_psi_infinity_closed_form_dual_path():
    # non-series duals take the masked-loop branch; same product, same limit
    sine = preset("normalized_sine")
    for z in (0.2, 0.8):
        deep = normalized_trace(sine, z, 4000).normalized_nngp[-1]
        assert psi_infinity(sine, z) == pytest.approx(deep, rel=1e-11)


def test_psi_trace_estimate_reports_saturation():
    # near the pole the 1/depth rate cannot reach a 1e-10 gap by the cap
    val, gap, used = psi_trace_estimate(CUBIC, 0.99, gap_tol=1e-10, max_depth=20_000)
    assert used == 20_000
    assert gap > 1e-10
    ref = psi_infinity(CUBIC, 0.99)
    assert abs(val - ref) / ref <= 0.01
    # away from the pole a loose tolerance is reachable
    val2, gap2, used2 = psi_trace_estimate(CUBIC, 0.3, gap_tol=1e-8, max_depth=100_000)
    assert used2 < 100_000 and gap2 < 1e-8
    assert abs(val2 - psi_infinity(CUBIC, 0.3)) <= 1e-4
    with pytest.raises(ValueError):
        psi_trace_estimate(CUBIC, 1.0)


# ---------------------------------------------------------------------------
# pole-order estimation
# ---------------------------------------------------------------------------


def test_pole_fit_exact_power_law_is_recovered():
    fit = estimate_pole_order(lambda z: (1.0 - z) ** -1.7, base=2.0)
    # rounding 1 - b*eps at eps=1e-6 costs ~1e-10 in the smallest-scale order
    assert abs(fit.order_hat - 1.7) <= 1e-9
    assert all(abs(r - 1.7) <= 1e-9 for r in fit.raw_orders)
    fit = estimate_pole_order(lambda z: 3.0 * (1.0 - z) ** -0.25, base=3.0)
    assert abs(fit.order_hat - 0.25) <= 1e-10


def test_pole_fit_corollary_duals_within_ten_percent():
    for d in (2, 4):
        dual = preset("corollary_d", d)
        fit = estimate_pole_order(lambda z: psi_infinity(dual, z))
        assert abs(fit.order_hat - d / 2.0) <= 0.1 * (d / 2.0)


def test_pole_fit_input_validation():
    with pytest.raises(ValueError):
        estimate_pole_order(lambda z: 1.0, base=1.0)
    with pytest.raises(ValueError):
        estimate_pole_order(lambda z: 1.0, eps_grid=(1e-2,))
    with pytest.raises(ValueError):
        estimate_pole_order(lambda z: 1.0, base=2.0, eps_grid=(0.6, 1e-3))
    with pytest.raises(NumericalFailure):
        estimate_pole_order(lambda z: -1.0, base=2.0)
    with pytest.raises(NumericalFailure):
        estimate_pole_order(lambda z: float("nan"), base=2.0)


# ---------------------------------------------------------------------------
# piecewise-linear two-slope map
# ---------------------------------------------------------------------------


def test_piecewise_limit_matches_description():
    a, b = 0.5, 1.5
    c = (b - 1.0) / (b - a)
    zs = np.linspace(0.0, c, 20)
    assert np.array_equal(piecewise_linear_limit(a, b, zs), zs)  # flat below corner
    zs = np.linspace(0.0, 0.999, 200)
    lim = piecewise_linear_limit(a, b, zs)
    assert np.all(lim >= zs - 1e-12)
    assert piecewise_linear_limit(a, b, 1.0) == np.inf


def test_piecewise_limit_is_reached_at_finite_depth():
    a, b = 0.5, 1.5
    for z in (0.6, 0.9, 1.0 - 1e-5):
        lim = piecewise_linear_limit(a, b, z)
        it = piecewise_linear_iterate(a, b, z, 70) * a**-70.0
        assert it == pytest.approx(lim, rel=1e-8)


def test_piecewise_fit_telescopes_exactly_at_matching_base():
    # probing with the map's own expansion ratio cancels the staircase exactly
    a, b = 0.5, 1.5
    fit = estimate_pole_order(
        lambda z: piecewise_linear_limit(a, b, z), base=b, eps_grid=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    )
    want = -math.log(a) / math.log(b)
    assert all(abs(r - want) <= 1e-9 for r in fit.raw_orders)
    assert abs(fit.order_hat - want) <= 1e-9


def test_piecewise_fit_off_base_still_close():
    a, b = 0.5, 1.5
    fit = estimate_pole_order(lambda z: piecewise_linear_limit(a, b, z), base=2.0)
    want = -math.log(a) / math.log(b)
    # staircase wobble: single-scale orders oscillate around the true slope
    assert abs(fit.order_hat - want) <= 0.05 * want


def test_piecewise_validation():
    with pytest.raises(ValueError):
        piecewise_linear_limit(1.2, 1.5, 0.5)
    with pytest.raises(ValueError):
        piecewise_linear_iterate(0.5, 0.9, 0.5, 3)


# ---------------------------------------------------------------------------
# resolvent-power surrogate family
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("alpha", [1.05, 1.2])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_f_alpha_iterates_inside_sandwich(alpha, d):
    zs = np.linspace(0.05, 0.95, 10)
    lower, upper = f_alpha_sandwich(alpha, d, zs)
    it = f_alpha_iterate(alpha, d, zs, 4000, normalized=True)
    assert np.all(it >= lower - 1e-10)
    assert np.all(it <= upper + 1e-10)
    assert np.all(lower <= upper + 1e-15)


def test_f_alpha_near_one_approaches_resolvent_power():
    z = 0.5
    for d, tol in ((1, 0.02), (2, 0.02)):
        it = float(f_alpha_iterate(1.01, d, z, 4000, normalized=True))
        target = z / (1.0 - z) ** d
        assert abs(it - target) / target <= tol


def test_f_alpha_d3_bias_is_real():
    # at alpha = 1.01 the d=3 limit misses the resolvent cube by ~3%:
    # the per-step normalization bias compounds with d
    it = float(f_alpha_iterate(1.01, 3, 0.5, 4000, normalized=True))
    target = 0.5 / 0.5**3
    assert 0.02 < abs(it - target) / target < 0.05


def test_f_alpha_unnormalized_collapses():
    out = f_alpha_iterate(1.2, 2, np.array([0.3, 0.6]), 500, normalized=False)
    assert np.all(out < 1e-6)


def test_f_alpha_validation():
    with pytest.raises(ValueError):
        f_alpha_iterate(0.99, 2, 0.5, 10)
    with pytest.raises(ValueError):
        f_alpha_sandwich(1.2, 0, 0.5)

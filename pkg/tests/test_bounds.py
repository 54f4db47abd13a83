import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from corrmac.bounds import (ChannelBudget, c_d_for_u, c_d_for_vj, lower_bound_u_asymptotic,
                            lower_bound_u_finite_n, lower_bound_u_terms, lower_bound_vj,
                            mmse_observation, observation_factor, per_source_bound,
                            piecewise_lower_bound_u, product_bound, product_constant)
from corrmac.errors import InvalidParameter
from corrmac.source import SourceConfig

# 6/(pi e) and its cube to 16 digits (mpmath)
SIX_OVER_PI_E = 0.7025979782918299
SIX_OVER_PI_E_CUBED = 0.3468332195555517


def brute_force(M, rho, snr, family="uniform", K=1, N=math.inf):
    best, arg = -1.0, None
    for s in range(M + 1):
        c = 1.0 if family == "gaussian" else (6 / (math.pi * math.e)) ** (s + 1)
        obs = 1.0 if s == 0 else (1 - rho**2) / (1 + (s - 1) * rho**2)
        x = (M - s) * snr
        ch = math.exp(-2 * x) if math.isinf(N) else (1 + K * x / N) ** (-2 * N / K)
        if c * obs * ch > best:
            best, arg = c * obs * ch, s
    return best, arg


def test_c_d_constants():
    assert c_d_for_u("gaussian", 5) == 1.0
    assert c_d_for_u("uniform", 0) == pytest.approx(SIX_OVER_PI_E, rel=1e-15)
    assert c_d_for_u("uniform", 2) == pytest.approx(SIX_OVER_PI_E_CUBED, rel=1e-15)
    with pytest.raises(InvalidParameter):
        c_d_for_u("uniform", -1)


def test_finite_n_matches_enumeration():
    cfg = SourceConfig(3, 0.9, K=1)
    rep = lower_bound_u_finite_n(cfg, ChannelBudget(2.0, 1.0, 100))
    val, arg = brute_force(3, 0.9, 2.0, N=100)
    assert rep.value == pytest.approx(val, rel=1e-14)
    assert rep.argmax_subset_size == arg
    assert rep.constant_used == c_d_for_u("uniform", arg)


def test_rho_one_only_empty_subset_survives():
    cfg = SourceConfig(4, 1.0)
    terms = lower_bound_u_terms(cfg, ChannelBudget(0.3, 1.0, 50))
    assert np.all(terms[1:] == 0.0)
    assert terms[0] == pytest.approx(SIX_OVER_PI_E * (1 + 4 * 0.3 / 50) ** (-100))


def test_zero_energy_attained_at_empty_subset():
    for fam in ("uniform", "gaussian"):
        rep = lower_bound_u_asymptotic(SourceConfig(5, 0.7, fam), 0.0)
        assert rep.argmax_subset_size == 0
        assert rep.value == c_d_for_u(fam, 0)


def test_rho_zero_uncorrelated_observations():
    # observations carry no noise reduction, so the side-information branch is C_D(|S|=M)
    rep = lower_bound_u_asymptotic(SourceConfig(3, 0.0), 0.4)
    expected = max(c_d_for_u("uniform", 0) * math.exp(-2.4), c_d_for_u("uniform", 3))
    assert rep.value == pytest.approx(expected, rel=1e-14)
    assert rep.argmax_subset_size == 3


@pytest.mark.parametrize("snr", np.linspace(0.1, 5, 50))
def test_piecewise_matches_enumeration_m4(snr):
    cfg = SourceConfig(4, 0.99)
    value, regime = piecewise_lower_bound_u(cfg, snr)
    val, arg = brute_force(4, 0.99, snr)
    assert value == pytest.approx(val, rel=1e-12)
    assert regime == arg


def test_regime_condition_single_sensor():
    # with one sensor, 1 - rho^2 <= exp(-2E/N0) selects the channel-limited branch
    cfg = SourceConfig(1, 0.6)
    snr = 0.1
    assert 1 - 0.36 <= math.exp(-2 * snr)
    value, regime = piecewise_lower_bound_u(cfg, snr)
    assert regime == 0 and value == pytest.approx(SIX_OVER_PI_E * math.exp(-2 * snr))


def test_regime_condition_not_sufficient_for_several_sensors():
    # the same condition does not pin the channel-limited branch once M > 1
    rho = math.sqrt(1 - 1e-5)
    cfg = SourceConfig(2, rho)
    assert 1 - rho**2 <= math.exp(-2 * 5.0)
    rep = lower_bound_u_asymptotic(cfg, 5.0)
    assert rep.argmax_subset_size == 2
    assert rep.value > SIX_OVER_PI_E * math.exp(-2 * 2 * 5.0)


@given(st.integers(1, 16), st.floats(0, 0.999999), st.floats(0, 10))
def test_argmax_is_an_endpoint(M, rho, snr):
    rep = lower_bound_u_asymptotic(SourceConfig(M, rho), snr)
    terms = lower_bound_u_terms(SourceConfig(M, rho), ChannelBudget(snr))
    assert rep.value == terms.max()
    assert terms.max() == pytest.approx(max(terms[0], terms[-1]), rel=1e-12)


@given(st.integers(1, 8), st.floats(0, 0.999), st.floats(0, 8), st.floats(0.001, 2))
def test_bound_non_increasing_in_energy(M, rho, snr, d):
    cfg = SourceConfig(M, rho)
    assert lower_bound_u_asymptotic(cfg, snr + d).value <= lower_bound_u_asymptotic(cfg, snr).value
    b1 = lower_bound_u_finite_n(cfg, ChannelBudget(snr, 1.0, 20)).value
    b2 = lower_bound_u_finite_n(cfg, ChannelBudget(snr + d, 1.0, 20)).value
    assert b2 <= b1


@given(st.integers(1, 8), st.floats(0.05, 0.95), st.floats(0, 5))
def test_bound_continuous_in_rho(M, rho, snr):
    f = lambda r: lower_bound_u_asymptotic(SourceConfig(M, r), snr).value
    assert f(rho + 1e-9) == pytest.approx(f(rho), rel=1e-6, abs=1e-12)


@pytest.mark.parametrize("M,rho,snr", [(2, 0.9, 0.5), (4, 0.99, 1.0), (8, 0.5, 2.0)])
def test_finite_n_converges_to_asymptotic(M, rho, snr):
    cfg = SourceConfig(M, rho)
    n = 1e9 * M * max(snr, 1.0)
    fin = lower_bound_u_finite_n(cfg, ChannelBudget(snr, 1.0, n)).value
    asym = lower_bound_u_asymptotic(cfg, snr).value
    assert abs(fin - asym) / asym < 1e-6


def test_observation_limited_regime_scales_with_m():
    # Gaussian family at high energy: the bound is the observation MMSE
    rho = 0.8
    vals = [lower_bound_u_asymptotic(SourceConfig(M, rho, "gaussian"), 20.0) for M in (1, 2, 4, 8)]
    for M, rep in zip((1, 2, 4, 8), vals):
        assert rep.argmax_subset_size == M
        assert rep.value == pytest.approx((1 - rho**2) / (1 + (M - 1) * rho**2), rel=1e-12)
        assert rep.value == pytest.approx(mmse_observation(M, rho), rel=1e-12)


def test_mmse_examples():
    assert mmse_observation(3, 1.0) == 0.0
    assert mmse_observation(1, 0.3) == pytest.approx(1 - 0.09)
    assert mmse_observation(10, 0.5) == pytest.approx(0.23076923076923078, rel=1e-14)
    with pytest.raises(InvalidParameter):
        mmse_observation(0, 0.5)


def test_observation_factor_empty_subset():
    assert observation_factor(0, 0.99) == 1.0
    assert observation_factor(1, 0.6) == pytest.approx(0.64)


def test_vj_gaussian_examples():
    cfg = SourceConfig(3, 0.0, "gaussian")
    rep = lower_bound_vj(cfg, ChannelBudget(0.0), 0)
    assert rep.value == 2.0  # vacuous, reported as is
    cfg = SourceConfig(3, 1.0, "gaussian")
    assert lower_bound_vj(cfg, ChannelBudget(1.0), 1).value == 0.0
    with pytest.raises(InvalidParameter):
        lower_bound_vj(cfg, ChannelBudget(1.0), 3)


def test_vj_uniform_constant_against_appendix_form():
    # the appendix writes the constant through mutual-information terms; with
    # 12^|S| (1-rho^2)^|S| it must reduce to the closed form used in the code
    r, s = sp.symbols("r s", positive=True)
    pe = sp.pi * sp.E
    g = 1 + (s - 1) * r**2
    appendix = 12 * (72 * r**2 * (1 - r**2) / pe + 12**s * (1 - r**2) ** s) / (
        (2 * pe) ** (s + 1) * (1 - r**2) ** (s - 1) * g)
    main = (12**3 * r**2 * (1 - r**2) ** (2 - s) / ((2 * pe) ** (s + 2) * g)
            + (6 / pe) ** (s + 1) * (1 - r**2) / g)
    for sv in range(0, 6):
        for rv in (sp.Rational(1, 5), sp.Rational(4, 5), sp.Rational(99, 100)):
            a = float(appendix.subs({s: sv, r: rv}))
            b = float(main.subs({s: sv, r: rv}))
            assert a == pytest.approx(b, rel=1e-13)
            assert c_d_for_vj("uniform", sv, float(rv)) == pytest.approx(b, rel=1e-12)


def test_vj_uniform_example():
    cfg = SourceConfig(2, 0.8)
    rep = lower_bound_vj(cfg, ChannelBudget(1.0), 1)
    const = 12**3 * 0.64 * 0.36 / (2 * math.pi * math.e) ** 3 + (6 / (math.pi * math.e)) ** 2 * 0.36
    assert rep.constant_used == pytest.approx(const, rel=1e-13)
    assert rep.value == pytest.approx(const * math.exp(-2.0), rel=1e-13)


def test_product_constants():
    assert product_constant("gaussian", 4, 0.0) == 1.0
    cfg = SourceConfig(3, 0.0, "gaussian")
    assert product_bound(cfg, ChannelBudget(0.5)).value == pytest.approx(math.exp(-3.0))
    direct = ((math.sqrt(12 * 0.25) + 12 * 0.75) / (2 * math.pi * math.e)) ** 2
    assert product_constant("uniform", 2, 0.5) == pytest.approx(direct, rel=1e-12)
    assert product_constant("uniform", 2, 0.5) == pytest.approx(0.3948359963992243, rel=1e-12)
    # (1-r2)^M (1 + M r2/(1-r2)) for the Gaussian family
    r2 = 0.81
    assert product_constant("gaussian", 3, 0.9) == pytest.approx((1 - r2) ** 3 * (1 + 3 * r2 / (1 - r2)))


@pytest.mark.parametrize("M", [1, 2, 5, 16])
def test_per_source_exponent_independent_of_m(M):
    cfg = SourceConfig(M, 0.9)
    e = np.linspace(1, 40, 9)
    y = np.log([per_source_bound(cfg, ChannelBudget(x)) for x in e])
    slope = np.polyfit(e, y, 1)[0]
    assert abs(slope + 2.0) < 1e-9


def test_per_source_is_root_of_product():
    cfg = SourceConfig(4, 0.7)
    bud = ChannelBudget(0.8, 1.0, 30)
    assert per_source_bound(cfg, bud) == pytest.approx(product_bound(cfg, bud).value ** 0.25, rel=1e-12)


def test_budget_validation():
    with pytest.raises(InvalidParameter):
        ChannelBudget(-1.0)
    with pytest.raises(InvalidParameter):
        ChannelBudget(1.0, 0.0)
    with pytest.raises(InvalidParameter):
        ChannelBudget(1.0, 1.0, 0.5)
    rep = lower_bound_u_asymptotic(SourceConfig(2, 0.1), 0.0)
    assert rep.clipped == min(rep.value, 1.0)

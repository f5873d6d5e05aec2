import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ballistic_annihilation.constants import (
    alpha0,
    alpha_star,
    beta_k,
    c_gamma,
    eta_p,
    j0_index,
    kappa_bounds,
    kappa_gamma,
    lower_bound_factor,
    mu_alpha,
    p_star,
    rho_k,
    rho_k_closed_form_d3,
    threshold_report,
)
from ballistic_annihilation.core import AngularLaw, ModelParams

P3 = ModelParams(d=3, gamma=1.0)

# frozen from an independent 30-digit mpmath quadrature of the angular integral
RHO_REF = {
    2: {0.5: 1.2732395447351627, 1.5: 0.84882636315677512, 2: 0.75, 3: 0.625},
    4: {0.5: 1.3581221810508402, 1.5: 0.77606981774333726, 2: 0.625, 3: 0.4375},
    5: {0.5: 1.3714285714285714, 1.5: 0.7619047619047619, 2: 0.6, 3: 0.4},
}


def test_rho_examples_d3():
    assert rho_k(1, P3) == pytest.approx(1.0, abs=1e-12)
    assert rho_k(1.5, P3) == pytest.approx(0.8, abs=1e-12)
    assert rho_k(0.5, P3) == pytest.approx(4 / 3, abs=1e-12)
    for d in (2, 3, 4, 7):
        assert rho_k(0, ModelParams(d=d)) == 2.0


@pytest.mark.parametrize("k", [0, 0.5, 1, 1.5, 2, 3])
def test_rho_quadrature_matches_closed_form(k):
    assert abs(rho_k(k, P3) - rho_k_closed_form_d3(k)) <= 1e-10


@pytest.mark.parametrize("d", sorted(RHO_REF))
def test_rho_other_dimensions(d):
    p = ModelParams(d=d)
    for k, ref in RHO_REF[d].items():
        assert rho_k(k, p) == pytest.approx(ref, abs=1e-10)
    assert rho_k(1, p) == pytest.approx(1.0, abs=1e-12)


def test_rho_strictly_decreasing_above_one():
    for d in (2, 3, 5):
        p = ModelParams(d=d)
        vals = [rho_k(1 + 0.25 * i, p) for i in range(20)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_rho_requires_normalized_law():
    p = ModelParams(angular=AngularLaw(norm=2.0))
    with pytest.raises(ValueError, match="not normalized"):
        rho_k(1, p)


def test_alpha0_values():
    assert alpha0(P3) == pytest.approx(2 / 7, abs=1e-12)
    # rho_{5/4} = 8/9 from the closed form
    assert alpha0(ModelParams(gamma=0.5)) == pytest.approx(4 / 13, abs=1e-12)


def test_alpha_star_values():
    a, j0, k0 = alpha_star(P3)
    assert a == pytest.approx(0.25, abs=1e-12) and j0 == 1 and k0 == 0.5
    a, j0, k0 = alpha_star(ModelParams(gamma=2 / 3))
    assert a == pytest.approx(1 / 6, abs=1e-12) and j0 == 2 and k0 == pytest.approx(2 / 3)


@given(st.floats(0.01, 1.0))
def test_j0_bracket(g):
    j0 = j0_index(g)
    assert j0 * g / 2 < 1 + 1e-12
    assert (j0 + 1) * g / 2 >= 1 - 1e-12
    if g < 1.99:
        assert rho_k(j0 * g / 2, ModelParams(gamma=g)) > 1


def test_maxwellian_thresholds_rejected():
    with pytest.raises(ValueError, match="Maxwellian case"):
        alpha_star(ModelParams(gamma=0.0))
    with pytest.raises(ValueError, match="Maxwellian case"):
        alpha0(ModelParams(gamma=0.0))


def test_p_star_values():
    assert p_star(0.25, 3) == pytest.approx(3.0, rel=1e-14)
    assert p_star(1 / 6, 3) is None
    assert p_star(1 / 5, 3) is None
    assert p_star(0.4, 3) == pytest.approx(1.2, rel=1e-14)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            p_star(bad, 3)


@given(st.floats(0.201, 0.999), st.integers(2, 6))
def test_p_star_above_one_iff_alpha_below_half(a, d):
    ps = p_star(a, d)
    if a <= 1 / (d + 2):
        assert ps is None
    elif abs(a - 0.5) > 1e-9:
        assert (ps > 1) == (a < 0.5)


def test_eta_p_values():
    assert eta_p(2, 0.25, 3) == pytest.approx(0.25, abs=1e-15)
    assert eta_p(3.7, 0.0, 3) == 3.7
    assert eta_p(p_star(0.3, 3), 0.3, 3) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(1.001, 20), st.floats(0.001, 0.999), st.integers(2, 6))
def test_eta_p_sign(p, a, d):
    lhs = eta_p(p, a, d) > 0
    margin = a * d - p * (a * d + 2 * a - 1)
    if abs(margin) > 1e-9:
        assert lhs == (margin > 0)


def test_beta_k_values():
    assert beta_k(1.5, 0.0, P3) == pytest.approx(rho_k(1.5, P3))
    assert beta_k(0.5, 0.25, P3) == pytest.approx(1.0, abs=1e-12)
    assert beta_k(1.5, 2 / 7, P3) == pytest.approx(4 / 7, abs=1e-12)


def test_kappa_gamma_one():
    # beta_{1/2}(0.1) = 1.2
    assert kappa_bounds(0.1, P3) == [pytest.approx(math.sqrt(0.2 / 2.2 * 1.5), abs=1e-12)]
    assert math.sqrt(0.2 / 2.2 * 1.5) == pytest.approx(0.36927, abs=1e-5)


def test_kappa_recursion_two_levels():
    # frozen from 30-digit arithmetic on the closed-form angular constants
    k = kappa_bounds(0.05, ModelParams(gamma=2 / 3))
    assert k == [pytest.approx(0.19309621783071232, abs=1e-10), pytest.approx(0.21275038153123604, abs=1e-10)]


def test_kappa_at_threshold_fails():
    with pytest.raises(ValueError, match="lower-bound propagation unavailable"):
        kappa_bounds(0.25, P3)


def test_threshold_report_d3():
    rep = threshold_report(P3)
    assert rep.alpha0 == pytest.approx(2 / 7, abs=1e-12)
    assert rep.alpha_star == pytest.approx(0.25, abs=1e-12)
    assert rep.alpha_bar == pytest.approx(0.25, abs=1e-12)
    assert rep.alpha_underbar == pytest.approx(0.25, abs=1e-12)
    assert rep.alpha_underbar == min(rep.alpha0, rep.alpha_bar)
    assert rep.p_star is None  # alpha = 0
    assert rep.to_dict()["rho"]["1.5"] == pytest.approx(0.8)
    rep = threshold_report(P3.replace(alpha=0.25))
    assert rep.p_star == pytest.approx(3.0)


def test_c_gamma_and_kappa_gamma_inequalities():
    import numpy as np

    x = np.geomspace(1e-4, 1e4, 401)
    X, Y = np.meshgrid(x, x)
    for g in (0.25, 0.5, 1.0):
        c = c_gamma(g)
        assert np.all((X**2 + Y**2) ** (g / 2) >= c * (X**g + Y**g) * (1 - 1e-12))
        k = kappa_gamma(g)
        assert k == pytest.approx(1.0, abs=1e-12)
        assert np.all(1 + x**g >= k * (1 + x * x) ** (g / 2) * (1 - 1e-12))
    assert c_gamma(1.0) == pytest.approx(1 / math.sqrt(2))


def test_lower_bound_factor_gamma_one():
    assert lower_bound_factor(0.1, P3) == pytest.approx(math.sqrt(1 / 11), abs=1e-12)


def test_mu_alpha():
    # (c_1 kappa_1 / 2) * sqrt(1/11) with c_1 = 1/sqrt(2), kappa_1 = 1
    assert mu_alpha(0.1, P3, 1.0) == pytest.approx(0.10660035817780522, rel=1e-12)
    assert mu_alpha(0.1, P3, 1e-6) == pytest.approx(2e-6 * mu_alpha(0.1, P3, 5e-7) / 1e-6, rel=1e-9)
    big = mu_alpha(0.1, P3, 100.0)
    assert big == pytest.approx(c_gamma(1) / 2) and big == mu_alpha(0.1, P3, 50.0)
    with pytest.raises(ValueError):
        mu_alpha(0.3, P3, 1.0)

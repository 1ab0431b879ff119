import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from laydown import constants as cst
from laydown import potential as pot
from laydown.errors import InfeasibleError, PreconditionError
from laydown.kinetic import GridCfg, make_grid


def test_closed_forms_against_rational_oracle():
    # D = 1, C_V = 1, Lambda = 2 evaluated in exact arithmetic
    D, Lam, CV = Fraction(1), Fraction(2), Fraction(1)
    g2 = (Lam / 2) / (1 + Lam / 2)
    l2 = CV + D / 2
    den = g2**2 + 2 * g2 + l2**2
    e1 = 2 * D * g2 / den
    xi0 = D * g2**2 / (2 * den)
    assert cst.gamma2_mac(2.0) == pytest.approx(float(g2), abs=1e-15)
    assert cst.lambda2(1.0, 1.0) == pytest.approx(float(l2), abs=1e-15)
    assert cst.eps1(1.0, 0.5, 1.5) == pytest.approx(float(e1), abs=1e-15)
    assert float(e1) == pytest.approx(1 / 3.5)
    assert cst.xi(0.0, 1.0, 0.5, cst.lambda1(1.0), 1.5) == pytest.approx(float(xi0), abs=1e-15)
    assert float(xi0) == pytest.approx(1 / 28)
    assert cst.lambda1(1.0) == pytest.approx((1 / math.sqrt(2) + math.sqrt(2)) / 2, abs=1e-15)


def test_kappa0_rate_bounded_case():
    hc = cst.hypo_constants(pot.PotentialSpec.family(1.0, 1.0), 1.0, 0.0, 2.0, 1.0)
    assert hc.gamma1 == pytest.approx(4 * hc.xi / (1 + hc.eps1))
    assert hc.lambda_kappa == pytest.approx(hc.gamma1 / 2) and hc.lambda_kappa > 0
    assert hc.gamma2_gronwall == pytest.approx(hc.eps1 * hc.gamma2_mac)


@given(Lam=st.floats(0.05, 50), CV=st.floats(0.05, 50), D=st.floats(0.05, 50))
def test_eps1_below_min_D_one(Lam, CV, D):
    g2 = cst.gamma2_mac(Lam)
    e = cst.eps1(D, g2, cst.lambda2(CV, D))
    assert 0 < e < min(D, 1.0)


@given(Lam=st.floats(0.2, 10), CV=st.floats(0.2, 10), u=st.floats(0.0, 5.0))
def test_kappa_max_is_the_xi_threshold(Lam, CV, u):
    D = 1.0
    g2, l1, l2 = cst.gamma2_mac(Lam), cst.lambda1(CV), cst.lambda2(CV, D)
    km = cst.kappa_max(D, g2, l1, l2, u)
    for k in np.linspace(0, 2 * km, 21):
        if abs(k - km) < 1e-9 * km:
            continue
        assert (cst.xi(k, D, g2, l1, l2) > k * u / 4) == (k < km)


def test_bounded_case_infeasible_above_kappa_max():
    p = pot.PotentialSpec.family(1.0, 1.0)
    km = cst.hypo_constants(p, 1.0, 0.0, 2.0, 1.0).kappa_max
    cst.hypo_constants(p, 1.0, 0.5 * km, 2.0, 1.0)
    with pytest.raises(InfeasibleError, match="kappa_max"):
        cst.hypo_constants(p, 1.0, 1.01 * km, 2.0, 1.0)


def test_unbounded_requires_kappa_below_third(family2):
    with pytest.raises(PreconditionError):
        cst.hypo_constants(family2, 1.0, 0.4, 2.0, 1.0)


@pytest.mark.parametrize("omega", [1.0, 2.0])
def test_gaussian_spectral_gap(omega):
    p = pot.normalize_potential(pot.PotentialSpec.quadratic(omega))
    lam = cst.estimate_spectral_gap(p, GridCfg(64, 64, 4))
    assert lam == pytest.approx(omega, rel=0.03)


def test_spectral_gap_refinement_family(family2):
    a = cst.estimate_spectral_gap(family2, GridCfg(48, 48, 4))
    b = cst.estimate_spectral_gap(family2, GridCfg(96, 96, 4))
    assert abs(a - b) <= 0.02 * b


def test_elliptic_constant_kernel_and_refinement(family2):
    g = make_grid(family2, GridCfg(48, 48, 4))
    assert cst.hessian_ratio(g, g.rho) < 1e-8
    a = cst.estimate_elliptic_constant(family2, grid=g, trials=4)
    b = cst.estimate_elliptic_constant(family2, GridCfg(96, 96, 4), trials=4)
    assert abs(a - b) <= 0.10 * b
    assert cst.estimate_elliptic_constant(family2, grid=g, trials=4) == a  # deterministic


def test_zeta_optimum_and_constraints():
    xi_k, kappa, C3, C4, c = 0.02, 0.001, 0.3, 5.0, 0.1
    z = cst._optimal_zeta(xi_k, kappa, C3, C4, c)
    assert z > C3 / c and 4 * xi_k - kappa * z * C4 > 0

    def g1(zz):
        return min(4 * xi_k - kappa * zz * C4, c - C3 / zz)

    assert g1(z) >= g1(1.01 * z) - 1e-12 and g1(z) >= g1(0.99 * z) - 1e-12


def test_zeta_empty_interval():
    with pytest.raises(InfeasibleError, match="zeta"):
        cst._optimal_zeta(0.01, 0.1, 10.0, 5.0, 0.01)


def test_c3_tail_monotone(family2):
    from laydown import weight as wt
    logc3, r_at = cst.sup_C3(wt.weight_params(0.0, 1.0), family2, 40.0)
    assert math.isfinite(logc3) and r_at < 40.0


def test_unbounded_kappa0_constants(family2):
    hc = cst.hypo_constants(family2, 1.0, 0.0, 2.0, 2.0)
    assert hc.lambda_kappa > 0 and hc.C3 is not None and hc.kappa_max > 0
    d = hc.to_dict()
    assert d["weight"]["beta"] == pytest.approx(1.625)

import itertools

import pytest
from hypothesis import given, strategies as st

from osilab import bounds
from osilab.errors import BadParams, BadTau

unit = st.floats(0.01, 1.0)


def test_implied_ose_examples():
    for tau in (0.01, 0.3, 0.99):
        assert bounds.implied_ose(5, 1.0, 0.0, tau).beta == pytest.approx(1.0)
    ose = bounds.implied_ose(3, 0.9, 0.05, 0.2)
    assert ose.beta == pytest.approx(3.075) and ose.rho == pytest.approx(0.25)
    eps, tau = 0.05, 0.3
    ose = bounds.implied_ose(2, 1 - eps, 0.0, tau)
    assert ose.beta - ose.alpha == pytest.approx(2 * eps / tau)


def test_implied_ose_bad_tau():
    for tau in (0.0, -0.1, 0.95, 1.0):
        with pytest.raises(BadTau):
            bounds.implied_ose(1, 0.5, 0.05, tau)


def test_implied_ose_monotone_on_grid():
    taus, ss, rhos = (0.1, 0.3, 0.5), (1, 2, 4), (0.0, 0.1, 0.2)
    for s, rho in itertools.product(ss, rhos):
        betas = [bounds.implied_ose(s, 0.7, rho, t).beta for t in taus]
        assert betas == sorted(betas, reverse=True)
    for t, rho in itertools.product(taus, rhos):
        betas = [bounds.implied_ose(s, 0.7, rho, t).beta for s in ss]
        assert betas == sorted(betas)
    for t, s in itertools.product(taus, ss):
        betas = [bounds.implied_ose(s, 0.7, rho, t).beta for rho in rhos]
        assert betas == sorted(betas)


def test_ose_relative_factor():
    assert bounds.ose_relative_factor(1, 1) == pytest.approx(1)
    assert bounds.ose_relative_factor(0.5, 2) == pytest.approx(2)
    assert bounds.ose_relative_factor(0.9, 3.075) == pytest.approx(1.848422, abs=1e-6)
    with pytest.raises(BadParams):
        bounds.ose_relative_factor(2, 1)


def test_ls_relative_bound():
    assert bounds.ls_relative_bound(1, 0, 0.3).factor == pytest.approx(1)
    g = bounds.ls_relative_bound(0.9, 0, 0.1)
    assert g.factor == pytest.approx(1 + 0.1 / 0.36) and g.success_prob == pytest.approx(0.9)
    assert g.squared
    eps, eta = 0.02, 0.1
    assert bounds.ls_relative_bound(1 - eps, 0, eta).factor == pytest.approx(1 + eps / (4 * (1 - eps) * eta))
    with pytest.raises(BadParams):
        bounds.ls_relative_bound(0.5, 0.5, 0.5)


def test_rsvd_relative_bound():
    assert bounds.rsvd_relative_bound(1, 0, 7, 0.2).factor == pytest.approx(1)
    g = bounds.rsvd_relative_bound(0.9, 0, 44, 0.1)
    assert g.factor == pytest.approx(1.277778, abs=1e-6) and g.success_prob == pytest.approx(0.9)
    with pytest.raises(BadParams):
        bounds.rsvd_relative_bound(0.9, 0.1, 10, 0.1)


@given(unit, st.floats(0.01, 0.99), st.integers(1, 50))
def test_ls_and_rsvd_coincide_at_zero_failure(alpha, eta, q_minus_r):
    assert bounds.ls_relative_bound(alpha, 0, eta) == bounds.rsvd_relative_bound(alpha, 0, q_minus_r, eta)


def test_lp_deterministic_bound():
    for p in (1, 1.5, 2, 7):
        assert bounds.lp_deterministic_bound(0.4, 0.4, p).factor == pytest.approx(3)
    assert bounds.lp_deterministic_bound(0.5, 2, 2).factor == pytest.approx(5)
    g = bounds.lp_deterministic_bound(0.5, 2, 1)
    assert g.factor == pytest.approx(9) and g.success_prob == 1 and not g.squared
    with pytest.raises(BadParams):
        bounds.lp_deterministic_bound(0.5, 2, 0.5)


def test_lp_probabilistic_bound():
    g = bounds.lp_probabilistic_bound_delta(1, 0.5, 1)
    assert g.factor == pytest.approx(9) and g.success_prob == pytest.approx(0.5)
    with pytest.raises(BadParams):
        bounds.lp_probabilistic_bound(1, 0, 1, 1)
    g = bounds.lp_probabilistic_bound(1, 0.05, 2, 4)
    assert g.factor == pytest.approx(5) and g.success_prob == pytest.approx(0.7)
    with pytest.raises(BadParams):
        bounds.lp_probabilistic_bound_delta(1, 0.2, 1, rho=0.15)


@given(unit, st.floats(0, 0.5), st.floats(1, 6), st.floats(2.5, 100))
def test_lp_probabilistic_factor_decreases_in_alpha(alpha, rho, p, t):
    g = bounds.lp_probabilistic_bound(alpha, rho, p, t)
    if alpha < 1:
        assert bounds.lp_probabilistic_bound(min(1, alpha * 1.5), rho, p, t).factor <= g.factor
    assert g.factor >= 3


def test_guarantee_holds_respects_squaring():
    sq = bounds.Guarantee(2.0, 0.9, squared=True)
    lin = bounds.Guarantee(2.0, 0.9, squared=False)
    assert sq.holds(1.4) and not sq.holds(1.5)
    assert lin.holds(1.9) and not lin.holds(2.1)
    with pytest.raises(BadParams):
        bounds.Guarantee(0.5, 0.9, squared=True)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockade import analytics, models, weakdrive
from blockade.errors import ConfigError


def test_optimum_at_j3_reference_values():
    plus, minus = analytics.optimal_exact(3.0, 1.0)
    assert plus.feasible and minus.feasible
    assert f"{plus.delta_e_opt:.3g}" == "0.275"
    assert f"{plus.u_opt:.3g}" == "0.0428"
    assert minus.delta_e_opt == -plus.delta_e_opt and minus.u_opt == -plus.u_opt


def test_optimum_independent_expression():
    # r2 = 0 gives U = (g^2 - 12 dE^2) / (8 dE); root-find r1 along that curve
    J, g = 3.0, 1.0

    def r1_of(de):
        u = (g**2 - 12 * de**2) / (8 * de)
        return analytics.condition_residuals(de, u, J, g)[0]
    from scipy.optimize import brentq
    de = brentq(r1_of, 0.1, 0.5, xtol=1e-15)
    plus, _ = analytics.optimal_exact(J, g)
    assert abs(de - plus.delta_e_opt) < 1e-12
    assert abs((g**2 - 12 * de**2) / (8 * de) - plus.u_opt) < 1e-12


@pytest.mark.parametrize("J", [0.5, 1 / math.sqrt(2)])
def test_infeasible_below_threshold(J):
    for p in analytics.optimal_exact(J, 1.0):
        assert not p.feasible and math.isnan(p.delta_e_opt) and math.isnan(p.u_opt)


def test_threshold_limit():
    p, _ = analytics.optimal_exact(1 / math.sqrt(2) * (1 + 1e-6), 1.0)
    assert p.feasible
    assert p.delta_e_opt < 1e-2 and p.u_opt > 10 * p.delta_e_opt


@pytest.mark.parametrize("J, g", [(0, 1), (-1, 1), (1, 0), (math.inf, 1), (math.nan, 1)])
def test_nonpositive_inputs(J, g):
    with pytest.raises(ConfigError):
        analytics.optimal_exact(J, g)
    with pytest.raises(ConfigError):
        analytics.optimal_approx(J, g)


def test_approx_values():
    p = analytics.optimal_approx(3.0, 1.0)
    assert abs(p.delta_e_opt - 0.28867513459481287) < 1e-15
    assert f"{p.u_opt:.3g}" == "0.0428"
    for J in (0.3, 2.0, 17.0):
        assert analytics.optimal_approx(J, 1.0).delta_e_opt == p.delta_e_opt
        assert analytics.optimal_approx(2 * J, 1.0).u_opt / analytics.optimal_approx(J, 1.0).u_opt == 0.25


def test_residuals_trivial():
    assert analytics.condition_residuals(0.0, 0.0, 3.0, 1.0) == (0.0, -1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(1.01, 50.0))
def test_residuals_vanish_at_optimum(gamma, ratio):
    J = ratio * gamma / math.sqrt(2)
    for p in analytics.optimal_exact(J, gamma):
        r1, r2 = analytics.condition_residuals(p.delta_e_opt, p.u_opt, J, gamma)
        # residuals are cubic in energy; compare against the natural scale
        scale = max(gamma, J) ** 2 * gamma
        assert abs(r1) < 1e-9 * scale and abs(r2) < 1e-9 * gamma**2


def test_branch_symmetry():
    plus, minus = analytics.optimal_exact(4.0, 1.3)
    for p in (plus, minus):
        r = analytics.condition_residuals(-p.delta_e_opt, -p.u_opt, 4.0, 1.3)
        assert max(map(abs, r)) < 1e-12


def test_residuals_zero_c20():
    plus, minus = analytics.optimal_exact(3.0, 1.0)
    for p in (plus, minus):
        spec = models.kerr_molecule(p.delta_e_opt, 0.0428, p.u_opt, 3.0)
        assert abs(weakdrive.c20_residual(spec)) < 1e-9


def test_asymptotic_error_decreasing():
    js = np.linspace(2, 100, 200)
    err = []
    for J in js:
        ex, _ = analytics.optimal_exact(J, 1.0)
        ap = analytics.optimal_approx(J, 1.0)
        err.append(max(abs(ap.delta_e_opt / ex.delta_e_opt - 1), abs(ap.u_opt / ex.u_opt - 1)))
    assert np.all(np.diff(err) < 0)
    ex, _ = analytics.optimal_exact(10.0, 1.0)
    ap = analytics.optimal_approx(10.0, 1.0)
    assert abs(ap.delta_e_opt / ex.delta_e_opt - 1) < 0.02
    assert abs(ap.u_opt / ex.u_opt - 1) < 0.02

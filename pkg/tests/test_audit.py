import math

import numpy as np
import pytest

from glx.audit import (FAIL, INCONCLUSIVE, PASS, audit_conditional_variance, audit_decay,
                       audit_finite_vs_infinite, certificate, conditional_variance_row,
                       kappa_link, membrane_slope_test, membrane_var_mu)
from glx.errors import ConfigError, ParameterError
from glx.green import InfiniteGreen, box_solver, finite_green
from glx.lattice import BoxDomain, DependencyRadiusPolicy
from glx.models import ModelSpec


def test_massive_d1_geometric_decay():
    t = audit_decay(ModelSpec.massive(1, 0.5), max_radius=10)
    assert t.flag == PASS and t.statistic <= -0.999
    g = np.array([InfiniteGreen(ModelSpec.massive(1, 0.5))((r,)) for r in range(8)])
    # two-term recurrence off the origin: constant step ratio g(1)/g(0) = 2 - sqrt(3)
    assert np.allclose(g[1:] / g[:-1], g[1] / g[0], rtol=1e-8)
    assert t.plateau == pytest.approx(2 - math.sqrt(3), rel=1e-8)


@pytest.mark.parametrize("model", [ModelSpec.dgff(3), ModelSpec.membrane(5), ModelSpec.massive(2, 0.3)])
def test_decay_below_origin_and_plateau(model):
    t = audit_decay(model)
    g0 = InfiniteGreen(model).at_zero()
    assert all(r["g"] < g0 for r in t.rows)
    assert t.flag == PASS


@pytest.mark.slow
def test_fractional_plateau_stable_under_doubling():
    t = audit_decay(ModelSpec.fractional(2, 1.0))
    assert t.flag == PASS and t.statistic < 0.1
    # the continuum constant for d = 2, s = 1 is 1/(2 pi)
    assert t.plateau == pytest.approx(1 / (2 * math.pi), rel=0.02)


def test_a2_massive_exponential_and_monotone():
    t = audit_finite_vs_infinite(ModelSpec.massive(1, 0.5), [32, 64, 128])
    below = [r["below"] for r in t.rows]
    assert t.flag == PASS
    # log-scale decay at a steady rate in n
    steps = np.diff(np.log(below))
    assert np.all(steps < -5) and steps[1] < steps[0]
    # g_N <= g entrywise on the diagonal
    assert all(r["diag_excess"] == 0.0 for r in t.rows)


def test_a2_dgff_diagonal_monotone():
    m = ModelSpec.dgff(3)
    g0 = InfiniteGreen(m).at_zero()
    for n in (4, 6):
        assert np.max(np.diag(finite_green(m, BoxDomain(3, n)).matrix)) <= g0


def test_a2_membrane_centre_deviation_decreasing():
    m = ModelSpec.membrane(5)
    g0 = InfiniteGreen(m).at_zero()
    vals = []
    for n in (5, 7, 9):
        dom = BoxDomain(5, n, 0.1)
        c = dom.index((n // 2,) * 5)
        e = np.zeros(dom.N)
        e[c] = 1.0
        vals.append((g0 - box_solver(m, dom)(e)[c]) * math.log(dom.N))
    assert np.all(np.diff(vals) < 0) and vals[-1] > 0


def test_a2_membrane_small_boxes_finite():
    t = audit_finite_vs_infinite(ModelSpec.membrane(5), [3, 4])
    for r in t.rows:
        assert all(np.isfinite([r["below"], r["above"], r["diag_excess"]]))


def test_a3_massive_var_mu_exponential_in_radius():
    m = ModelSpec.massive(1, 0.5)
    dom = BoxDomain(1, 64, 0.1)
    g0 = InfiniteGreen(m).at_zero()
    radii = np.arange(1, 9)
    v = [conditional_variance_row(m, dom, float(s), 1.0, g0)["sup_var_mu"] for s in radii]
    assert np.all(np.diff(v) < 0)
    assert np.corrcoef(radii, np.log(v))[0, 1] < -0.999


def test_a3_degenerate_ball_gives_zero():
    m = ModelSpec.massive(1, 0.5)
    dom = BoxDomain(1, 10, 0.1)
    row = conditional_variance_row(m, dom, 50.0, 1.0, InfiniteGreen(m).at_zero())
    assert row["sup_var_mu"] == pytest.approx(0.0, abs=1e-14)
    # DGFF d=3: (log N)^3.01 exceeds the half-side of small boxes
    with pytest.raises(ConfigError):
        audit_conditional_variance(ModelSpec.dgff(3), [4])
    t = audit_conditional_variance(ModelSpec.dgff(3), [4, 5], allow_degenerate=True)
    assert all(abs(r["sup_var_mu"]) < 1e-12 for r in t.rows)


def test_a3_massive_table_as_specified():
    # floor(log N) is 4, 4, 5: the first two rows share the same conditioning ball
    t = audit_conditional_variance(ModelSpec.massive(1, 0.5), [64, 128, 256], theta=1.0)
    sup = [r["sup_var_mu"] for r in t.rows]
    assert sup[0] == pytest.approx(sup[1], rel=1e-9)
    assert sup[2] < sup[1]
    assert t.flag == FAIL


def test_membrane_var_mu_routes_agree():
    m = ModelSpec.membrane(5)
    dom = BoxDomain(5, 5)
    c = dom.index((2,) * 5)
    for r in (1.0, 1.5, 2.0):
        membrane_var_mu(m, dom, c, r, check=True, tol=1e-8)


@pytest.mark.slow
def test_membrane_slope():
    rep = membrane_slope_test(ModelSpec.membrane(5))
    assert rep.flag == PASS and rep.slope <= -0.5
    assert np.all(np.diff(rep.var_mu) < 0)
    with pytest.raises(ParameterError):
        membrane_slope_test(ModelSpec.dgff(3))


def test_kappa_link_and_certificate():
    link = kappa_link(ModelSpec.massive(2, 0.3), [16, 32, 64])
    assert 0 < link["kappa"] <= 1
    assert link["flag"] == PASS
    cert = certificate()
    assert cert["A1"] == cert["A2"] == cert["A3"] == INCONCLUSIVE
    dec = audit_decay(ModelSpec.massive(1, 0.5))
    assert certificate(decay=dec, link=link)["A1"] == PASS

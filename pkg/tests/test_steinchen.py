import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.special import erfc
from scipy.stats import multivariate_normal, norm

from glx.errors import ParameterError, PartitionError
from glx.evt import scaling_constants
from glx.gaussian import conditional_weights, sample_field
from glx.green import InfiniteGreen, finite_green, kappa
from glx.lattice import BoxDomain
from glx.models import ModelSpec
from glx.steinchen import (BernoulliFamily, SteinChenReport, bivariate_exceed_prob, build_family,
                           compute_bounds, exceed_prob, kappa_form_bound, multivariate_tv_bound,
                           poisson_gap_bound, rectangle_prob, savage_bound, upper_orthant)


# b-terms for massive d=1 theta=0.5, delta=0.1, z=0, s_N=ceil(log n) at n=64 and n=256
SMALL_FIXTURE = (0.1593824277336515, 0.2504557431557804, 0.000921654944872799)
BIG_FIXTURE = (0.050836443538942844, 0.0989983520407938, 0.00029687610207406075)


def _tail(t):
    # erfc oracle, independent of scipy.stats
    return 0.5 * erfc(t / math.sqrt(2))


# --- univariate ------------------------------------------------------------

def test_exceed_prob_mills_example():
    e = exceed_prob(1.0, 3.0)
    assert e.value == pytest.approx(_tail(3.0), rel=1e-12)
    assert e.value == pytest.approx(0.0013499, abs=5e-8)
    assert e.lower == pytest.approx(0.0013131, abs=5e-8)
    assert e.upper == pytest.approx(0.0014773, abs=5e-8)


def test_exceed_prob_median_and_nonpositive():
    assert exceed_prob(4.0, 1e-300).value == pytest.approx(0.5)
    e = exceed_prob(1.0, -1.0)
    assert e.lower is None and e.upper is None and e.value == pytest.approx(_tail(-1.0))
    with pytest.raises(ParameterError):
        exceed_prob(0.0, 1.0)


@given(st.floats(0.1, 10.0), st.floats(1.01, 8.0))
def test_mills_bracket_contains_value(var, t):
    e = exceed_prob(var, t * math.sqrt(var))
    assert e.lower <= e.value <= e.upper


# --- bivariate -------------------------------------------------------------

def test_bivariate_independent():
    b = bivariate_exceed_prob(np.eye(2), 2.0)
    assert b.value == pytest.approx(_tail(2.0) ** 2, rel=1e-10)
    # quoted as 5.1755e-4; the value is 5.17569e-4
    assert b.value == pytest.approx(5.1755e-4, abs=5e-8)


def test_bivariate_comonotone():
    b = bivariate_exceed_prob(np.ones((2, 2)), 2.0)
    assert b.degenerate and b.savage is None
    assert b.value == pytest.approx(0.0227501, abs=1e-7)


def test_bivariate_half_correlation_oracles():
    C = np.array([[1.0, 0.5], [0.5, 1.0]])
    b = bivariate_exceed_prob(C, 2.0)
    mvn = multivariate_normal(mean=[0, 0], cov=C).cdf([-2.0, -2.0])
    dbl, _ = integrate.dblquad(lambda y, x: multivariate_normal(cov=C).pdf([x, y]),
                               2, 12, 2, 12, epsabs=1e-13)
    assert b.value == pytest.approx(dbl, abs=1e-10)
    assert b.value == pytest.approx(mvn, abs=1e-7)
    assert _tail(2.0) ** 2 < b.value < _tail(2.0)
    assert b.savage == pytest.approx(0.0071828, abs=1e-7)
    assert b.value < b.savage


@given(st.floats(-0.95, 0.95), st.floats(-3, 3), st.floats(-3, 3))
def test_upper_orthant_matches_mvn(r, h, k):
    C = [[1.0, r], [r, 1.0]]
    ref = multivariate_normal(cov=C).cdf([-h, -k])
    assert upper_orthant(h, k, r) == pytest.approx(ref, abs=2e-6)


def test_upper_orthant_axis_and_infinite():
    assert upper_orthant(0.0, 0.0, 0.3) == pytest.approx(0.25 + math.asin(0.3) / (2 * math.pi))
    assert upper_orthant(0.0, 1.0, 0.3) == pytest.approx(
        multivariate_normal(cov=[[1, .3], [.3, 1]]).cdf([0, -1]), abs=1e-7)
    assert upper_orthant(-np.inf, 1.0, 0.2) == pytest.approx(_tail(1.0))
    assert upper_orthant(np.inf, 1.0, 0.2) == 0.0


def test_rectangle_probs_sum_to_one():
    edges = [-np.inf, -0.5, 0.7, np.inf]
    tot = sum(rectangle_prob(edges[i], edges[i + 1], edges[j], edges[j + 1], 0.4)
              for i in range(3) for j in range(3))
    assert tot == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.05, 0.9), st.floats(1.0, 5.0))
def test_savage_dominates(r, u):
    C = np.array([[1.0, r], [r, 1.0]])
    b = bivariate_exceed_prob(C, u)
    assert b.value <= b.savage


def test_kappa_form_chain():
    # pair probability <= Savage <= kappa-form majorant at the level u_m(z)
    C = finite_green(ModelSpec.massive(2, 0.3), BoxDomain(2, 8)).matrix
    k = kappa(ModelSpec.massive(2, 0.3)).kappa
    g0 = InfiniteGreen(ModelSpec.massive(2, 0.3)).at_zero()
    m = 10_000
    for z in (-1.0, 0.0, 1.0):
        u = scaling_constants(g0, m).u(z)
        for j in (1, 2, 9):
            cov = C[np.ix_([0, j], [0, j])] / g0
            b = bivariate_exceed_prob(cov * g0, u)
            assert b.value <= b.savage <= kappa_form_bound(k, m, z) * 1.0001


# --- bounds ----------------------------------------------------------------

def test_poisson_gap_examples():
    rep = SteinChenReport(1.0, 0.01, 0.0, 0.0)
    assert poisson_gap_bound(rep) == pytest.approx(0.01)
    assert poisson_gap_bound(SteinChenReport(0.5, 0.005, 0.005, 0.0)) == pytest.approx(0.01)
    assert poisson_gap_bound(SteinChenReport(4.0, 0.01, 0.01, 0.0)) == pytest.approx(0.005)
    assert rep.tv_bound == pytest.approx(0.02)


def _iid_family(m, k, p_level=2.0):
    sites = np.arange(m)
    nb = [np.arange(i - i % k, i - i % k + k) for i in range(m)]
    return BernoulliFamily(sites, np.full(m, p_level), np.full(m, np.inf), np.ones(m), nb,
                           np.eye(m), p_level, var_mu=np.zeros(m), var_psi=np.ones(m))


def test_independent_family_b2_b3_vanish():
    fam = _iid_family(12, 1)
    rep = compute_bounds(fam)
    assert rep.b2 == 0.0 and rep.b3 == 0.0
    assert rep.lam == pytest.approx(12 * _tail(2.0))


def test_b1_closed_form():
    m, k = 12, 3
    rep = compute_bounds(_iid_family(m, k))
    assert rep.b1 == pytest.approx(m * k * _tail(2.0) ** 2, rel=1e-12)


def test_partition_examples():
    fam = _iid_family(12, 3)
    rep = compute_bounds(fam)
    one = multivariate_tv_bound(fam, [np.arange(12)], rep)
    lam = rep.lam
    core = 2 * rep.b1 + 2 * rep.b2 + rep.b3
    assert one.bound == pytest.approx(2 * min(1, 1.4 / math.sqrt(lam)) * core)
    two = multivariate_tv_bound(fam, [np.arange(6), np.arange(6, 12)], rep)
    assert np.allclose(two.lam_cells, lam / 2)
    assert two.bound >= one.bound
    four = multivariate_tv_bound(fam, np.array_split(np.arange(12), 4), rep)
    assert four.bound >= two.bound
    assert np.isclose(four.lam_cells.sum(), lam)
    with pytest.raises(PartitionError):
        multivariate_tv_bound(fam, [np.arange(6), np.zeros(0)], rep)
    with pytest.raises(PartitionError):
        multivariate_tv_bound(fam, [np.arange(7), np.arange(6, 12)], rep)


def test_build_family_homogeneous_lambda():
    m = ModelSpec.massive(1, 0.5)
    ev = InfiniteGreen(m)
    dom = BoxDomain(1, 64, 0.1)
    fam = build_family(m, dom, 0.0, 3.0, mode="infinite", green=ev)
    g0 = ev.at_zero()
    mN = dom.bulk_count
    u = scaling_constants(g0, mN).b
    assert fam.u == pytest.approx(u)
    assert fam.lam == pytest.approx(mN * _tail(u / math.sqrt(g0)), rel=1e-10)
    solo = build_family(m, dom, 0.0, 0.0, mode="infinite", green=ev, conditional=False)
    assert all(len(b) == 1 and b[0] == i for i, b in enumerate(solo.neighbours))


def test_lambda_tends_to_one_at_large_N():
    # N Pbar(b_N) -> 1 slowly from below: 0.926, 0.940, 0.948 at N = 1e4, 1e6, 1e8
    lam = [N * _tail(scaling_constants(1.0, N).b) for N in (1e4, 1e6, 1e8, 1e12)]
    assert np.all(np.diff(lam) > 0) and lam[-1] < 1.0
    assert lam[1] == pytest.approx(1.0, abs=0.065)


def test_massive_b_terms_decrease_with_size():
    m = ModelSpec.massive(1, 0.5)
    reps = []
    for n in (64, 256):
        dom = BoxDomain(1, n, 0.1)
        reps.append(compute_bounds(build_family(m, dom, 0.0, math.ceil(math.log(n)))))
    small, big = reps
    assert big.b1 < small.b1 and big.b2 < small.b2 and big.b3 < small.b3
    # regression fixtures, recorded from this computation
    assert small.b1 == pytest.approx(SMALL_FIXTURE[0], rel=1e-6)
    assert big.b3 == pytest.approx(BIG_FIXTURE[2], rel=1e-6)


def test_b3_routes_agree_and_nested_mc():
    m = ModelSpec.massive(1, 0.5)
    dom = BoxDomain(1, 24, 0.1)
    G = finite_green(m, dom)
    fam = build_family(m, dom, -1.0, 2.0, green=G)
    ex = compute_bounds(fam, "exact")
    he = compute_bounds(fam, "hermite")
    # the integrand has a kink, so 64-node Hermite is good to about 1%
    assert he.b3 == pytest.approx(ex.b3, rel=1e-2)
    # nested Monte Carlo: mu = E[phi_a | phi outside ball] via the T-matrix
    C = G.matrix
    a = int(fam.sites[len(fam.sites) // 2])
    i = int(np.flatnonzero(fam.sites == a)[0])
    K = np.setdiff1d(np.arange(dom.N), dom.ball_indices(a, 2.0))
    T = conditional_weights(C, K, a)
    x = np.array([f.values for f in sample_field(C, 40_000, seed=4)])
    mu = x[:, K] @ T
    p = fam.p[i]
    vals = np.abs(norm.sf((fam.u - mu) / math.sqrt(fam.var_psi[i])) - p)
    est, se = vals.mean(), vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(est - ex.per_site["b3"][i]) <= 3 * se


def test_b3_bounded_interval_vs_hermite():
    m = ModelSpec.massive(1, 0.5)
    dom = BoxDomain(1, 20, 0.1)
    fam = build_family(m, dom, 0.0, 2.0)
    fam.hi = fam.lo + 0.4
    ex = compute_bounds(fam, "exact")
    he = compute_bounds(fam, "hermite")
    assert he.b3 == pytest.approx(ex.b3, rel=1e-2)


@pytest.mark.parametrize("u,vm,vp", [(3.0, 0.3, 0.8), (2.0, 0.05, 1.0), (4.0, 0.6, 0.4)])
def test_b3_exact_matches_adaptive_quadrature(u, vm, vp):
    p = _tail(u / math.sqrt(vm + vp))
    kink = u - math.sqrt(vp) * norm.isf(p)
    f = lambda m: abs(_tail((u - m) / math.sqrt(vp)) - p) * norm.pdf(m / math.sqrt(vm)) / math.sqrt(vm)
    ref, _ = integrate.quad(f, -12 * math.sqrt(vm), 12 * math.sqrt(vm), points=[kink],
                            epsabs=1e-15, limit=500)
    fam = BernoulliFamily([0], [u], [np.inf], [vm + vp], [np.array([0])], np.eye(1), u,
                          var_mu=np.array([vm]), var_psi=np.array([vp]))
    assert compute_bounds(fam).b3 == pytest.approx(ref, rel=1e-9)


def test_unknown_b3_method():
    with pytest.raises(ParameterError):
        compute_bounds(_iid_family(3, 1), "nope")

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from glx.errors import ParameterError
from glx.evt import (MaximaSample, gumbel_cdf, ks_distance, limit_cdf, scaling_constants,
                     simulate_maxima)
from glx.gaussian import GaussianSampler
from glx.green import finite_green
from glx.lattice import BoxDomain
from glx.models import ModelSpec


def _b(g0, N):
    # direct evaluation of the centering formula
    L = math.log(N)
    return math.sqrt(g0) * (math.sqrt(2 * L) - (math.log(L) + math.log(4 * math.pi)) / (2 * math.sqrt(2 * L)))


@pytest.mark.parametrize("N,b,a", [(math.exp(10), 3.9316, 0.2543), (1e6, 4.7660, 0.2098)])
def test_scaling_examples(N, b, a):
    sc = scaling_constants(1.0, N)
    assert sc.b == pytest.approx(_b(1.0, N), rel=1e-14)
    assert sc.b == pytest.approx(b, abs=2e-4)
    assert sc.a == pytest.approx(a, abs=1e-4)
    assert sc.a == sc.g0 / sc.b


def test_scaling_g0_four_doubles_b():
    assert scaling_constants(4.0, 1e5).b == pytest.approx(2 * scaling_constants(1.0, 1e5).b, rel=1e-15)


def test_scaling_errors():
    with pytest.raises(ParameterError):
        scaling_constants(1.0, 2)
    with pytest.raises(ParameterError):
        scaling_constants(0.0, 100)


@given(st.floats(0.1, 10), st.floats(8, 1e12), st.floats(-5, 5), st.floats(0.01, 3))
def test_threshold_increasing(g0, N, z, dz):
    sc = scaling_constants(g0, N)
    assert sc.b > 0
    assert sc.u(z + dz) > sc.u(z)
    assert sc.u(0.0) == sc.b
    assert sc.z(sc.u(z)) == pytest.approx(z, abs=1e-9)


def test_limit_cdf_examples():
    assert limit_cdf(0.0) == pytest.approx(math.exp(-1))
    assert limit_cdf(0.0, 0.1, 2) == pytest.approx(0.5272924, abs=1e-7)
    assert limit_cdf(1e3, 0.1, 2) == 1.0
    assert gumbel_cdf(0.5) == limit_cdf(0.5, 0.0, 3)
    with pytest.raises(ParameterError):
        limit_cdf(0.0, 0.5, 1)


def test_ks_single_point_and_mismatch():
    assert ks_distance(np.array([0.0]), stats.norm.cdf) == pytest.approx(0.5)
    assert ks_distance(np.full(10, 100.0), stats.norm.cdf) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        ks_distance(np.zeros(0), stats.norm.cdf)


def test_ks_matches_scipy_and_self_sample():
    x = stats.gumbel_r.rvs(size=10_000, random_state=3)
    d = ks_distance(x, gumbel_cdf)
    assert d == pytest.approx(stats.kstest(x, "gumbel_r").statistic, abs=1e-12)
    # Kolmogorov 0.99 quantile for n = 1e4 is about 0.0163
    assert d < stats.kstwo.ppf(0.99, 10_000) < 0.02


def test_white_noise_maxima_gumbel(white):
    dom = BoxDomain(1, 10_000)
    s = simulate_maxima(white(dom.N), dom, "full", 10_000, seed=5, g0=1.0)
    assert s.count == 10_000 and np.all(np.isfinite(s.z))
    assert ks_distance(s, gumbel_cdf) < 0.05


def test_white_noise_bulk_shift(white):
    dom = BoxDomain(2, 100, 0.1)
    shifted = simulate_maxima(white(dom.N), dom, "bulk", 4000, seed=6, g0=1.0, rescale_count=dom.N)
    assert (ks_distance(shifted, lambda z: limit_cdf(z, 0.1, 2))
            < ks_distance(shifted, gumbel_cdf))
    own = simulate_maxima(white(dom.N), dom, "bulk", 10, seed=6, g0=1.0)
    assert own.rescale_count == dom.bulk_count


def test_maxima_determinism_and_workers():
    m = ModelSpec.massive(2, 0.3)
    dom = BoxDomain(2, 8)
    sam = GaussianSampler(finite_green(m, dom).matrix)
    a = simulate_maxima(sam, dom, "full", 1100, seed=7, g0=1.0)
    b = simulate_maxima(sam, dom, "full", 1100, seed=7, g0=1.0, workers=4)
    c = simulate_maxima(sam, dom, "full", 1100, seed=8, g0=1.0)
    assert np.array_equal(a.z, b.z)
    assert not np.array_equal(a.z, c.z)
    with pytest.raises(ParameterError):
        simulate_maxima(sam, dom, "edge", 10, seed=1, g0=1.0)

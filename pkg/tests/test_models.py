import pytest
from hypothesis import given, strategies as st

from glx.errors import ParameterError
from glx.models import ModelSpec


@pytest.mark.parametrize("kwargs,msg", [
    (dict(kind="dgff", d=2), "d>=3"),
    (dict(kind="membrane", d=4), "d>=5"),
    (dict(kind="massive", d=1, theta=1.0), "theta"),
    (dict(kind="massive", d=1), "theta"),
    (dict(kind="fractional", d=2, s=2.0), "s"),
    (dict(kind="fractional", d=1, s=1.0), "s"),
    (dict(kind="other", d=3), "unknown"),
])
def test_invalid_models(kwargs, msg):
    with pytest.raises(ParameterError, match=msg):
        ModelSpec(**kwargs)


def test_decay_power_and_label():
    assert ModelSpec.dgff(3).decay_power == 1
    assert ModelSpec.membrane(5).decay_power == 1
    assert ModelSpec.massive(2, 0.3).decay_power is None
    assert ModelSpec.fractional(2, 1.0).decay_power == 1.0
    assert ModelSpec.massive(2, 0.3).label() == "massive_d2_theta0.3"


@given(st.sampled_from(["dgff", "membrane", "massive", "fractional"]), st.integers(5, 7),
       st.floats(0.05, 0.95), st.floats(0.1, 1.9))
def test_dict_roundtrip(kind, d, theta, s):
    kw = {"massive": dict(theta=theta), "fractional": dict(s=s)}.get(kind, {})
    m = ModelSpec(kind, d, **kw)
    assert ModelSpec.from_dict(m.to_dict()) == m

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bishadow.charts import euclidean_box, flat_torus, seq_pnorm
from bishadow.errors import (ComponentMismatchError, OutOfBoxError,
                             RadiusExceededError)


def test_exp_torus_wraps():
    t1 = flat_torus(1)
    np.testing.assert_allclose(t1.exp(t1.point([0.9]), [0.2]), [0.1],
                               atol=1e-15)


def test_exp_zero_is_identity():
    t2 = flat_torus(2)
    x = t2.point([0.37, 0.91])
    np.testing.assert_array_equal(t2.exp(x, np.zeros(2)), x)
    box = euclidean_box(3)
    y = box.point([0.1, -0.5, 0.25])
    np.testing.assert_array_equal(box.exp(y, np.zeros(3)), y)


def test_exp_torus_componentwise():
    t2 = flat_torus(2)
    out = t2.exp(t2.point([0.5, 0.5]), [0.25, -0.75])
    np.testing.assert_allclose(out, [0.75, 0.75], atol=1e-15)


def test_log_shortest_representative():
    t1 = flat_torus(1)
    np.testing.assert_allclose(t1.log(t1.point([0.9]), t1.point([0.1])),
                               [0.2], atol=1e-15)
    np.testing.assert_allclose(t1.log(t1.point([0.1]), t1.point([0.4])),
                               [0.3], atol=1e-15)


def test_log_at_base_is_zero():
    t2 = flat_torus(2)
    x = t2.point([0.2, 0.8])
    np.testing.assert_array_equal(t2.log(x, x), np.zeros(2))


def test_log_outside_radius_raises():
    t1 = flat_torus(1)
    with pytest.raises(RadiusExceededError):
        t1.log(t1.point([0.0]), t1.point([0.5]))


def test_distance_wraparound():
    t1 = flat_torus(1)
    assert t1.distance(t1.point([0.1]), t1.point([0.9])) == pytest.approx(0.2)
    x = t1.point([0.3])
    assert t1.distance(x, x) == 0.0
    t2 = flat_torus(2)
    assert t2.distance(t2.point([0, 0]), t2.point([0.5, 0.5])) \
        == pytest.approx(math.sqrt(0.5))


def test_distance_dimension_mismatch():
    t2 = flat_torus(2)
    with pytest.raises(ComponentMismatchError):
        t2.distance(np.zeros(2), np.zeros(3))


def test_box_exp_leaves_box():
    box = euclidean_box(1, lo=-1.0, hi=1.0)
    with pytest.raises(OutOfBoxError):
        box.exp(box.point([0.9]), [0.5])


def test_box_tube_radius_caps_log():
    box = euclidean_box(1, lo=-10, hi=10, tube_radius=0.25)
    with pytest.raises(RadiusExceededError):
        box.log(box.point([0.0]), box.point([0.3]))


def test_seq_pnorm_examples():
    assert seq_pnorm([1, 1, 1], 1) == pytest.approx(3.0)
    assert seq_pnorm([3, 4], 2) == pytest.approx(5.0)
    assert seq_pnorm([2, 7, 5], math.inf) == 7.0
    assert seq_pnorm([], 2) == 0.0


coords = st.floats(min_value=0.0, max_value=1.0, exclude_max=True)
small_tangent = st.floats(min_value=-0.49, max_value=0.49)


@settings(max_examples=200, deadline=None)
@given(x=st.tuples(coords, coords), v=st.tuples(small_tangent, small_tangent))
def test_round_trip_and_isometry(x, v):
    t2 = flat_torus(2)
    vec = np.array(v)
    if np.linalg.norm(vec) >= t2.rho:
        vec = vec * (0.49 / (np.linalg.norm(vec) + 1e-9))
    base = t2.point(x)
    moved = t2.exp(base, vec)
    np.testing.assert_allclose(t2.log(base, moved), vec, atol=1e-14)
    assert t2.distance(moved, base) == pytest.approx(np.linalg.norm(vec),
                                                     abs=1e-14)


entries = st.lists(st.floats(min_value=0.0, max_value=1e6), min_size=1,
                   max_size=12)


@settings(max_examples=200, deadline=None)
@given(values=entries, p=st.sampled_from([1.0, 1.5, 2.0, 3.0, 7.0]))
def test_pnorm_monotone_and_equivalence(values, p):
    base = seq_pnorm(values, p)
    bumped = [v + 0.5 for v in values]
    assert seq_pnorm(bumped, p) >= base
    sup = seq_pnorm(values, math.inf)
    n = len(values)
    assert sup <= base + 1e-9 * max(1.0, sup)
    assert base <= n ** (1.0 / p) * sup + 1e-9 * max(1.0, sup)

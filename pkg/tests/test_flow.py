import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchflow.expr import parse_field
from switchflow.flow import (IntegrationError, IntegratorOptions, Manifold, composite_flow,
                             endpoint_time_jacobian, find_regular_point, flow_jacobian_ic,
                             flow_samples, free_time_jacobian, integrate, is_regular_point)

from _fields import fd_jacobian, lorenz_pair
from conftest import torus_basis

ROTATION = parse_field("-x2; x1", 2)
TIGHT = IntegratorOptions(abs_tol=1e-12, rel_tol=1e-12)


def test_rotation_exact_solution():
    for t in (0.3, 1.0, 2 * math.pi):
        end = integrate(ROTATION, [1.0, 0.0], t)
        np.testing.assert_allclose(end, [math.cos(t), math.sin(t)], atol=1e-8)


def test_rk4_agrees_with_rk45():
    u1, _ = lorenz_pair()
    a = integrate(u1, [1, 1, 1], 0.5)
    b = integrate(u1, [1, 1, 1], 0.5, opts=IntegratorOptions(method="rk4", dt=1e-4))
    np.testing.assert_allclose(a, b, rtol=1e-7)


def test_constant_field_translates_exactly():
    end = integrate(parse_field("0.5; -2", 2), [0.1, 0.2], 3.0)
    assert end.tolist() == [0.1 + 1.5, 0.2 - 6.0]


def test_samples_at_offsets():
    end, pts, _ = flow_samples(ROTATION, [1.0, 0.0], 1.0, [0.0, 0.25, 0.5])
    expect = [[math.cos(s), math.sin(s)] for s in (0.0, 0.25, 0.5)]
    np.testing.assert_allclose(pts, expect, atol=1e-8)
    np.testing.assert_allclose(end, [math.cos(1), math.sin(1)], atol=1e-8)


def test_torus_canonicalization():
    m = Manifold.torus(2)
    np.testing.assert_array_equal(m.canonicalize([1.0, -0.25]), [0.0, 0.75])
    assert m.canonicalize([-1e-20, 0.5])[0] == 0.0
    assert m.distance([0.95, 0.0], [0.05, 0.0]) == pytest.approx(0.1)
    end = composite_flow(torus_basis(2), [0, 1, 0], [0.7, 1.4, 0.6], [0.0, 0.0], m)
    np.testing.assert_allclose(end, [0.3, 0.4], atol=1e-14)
    assert np.all((end >= 0) & (end < 1))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(0.05, 0.5))
def test_semigroup(s, t):
    u1, _ = lorenz_pair()
    x = np.array([1.0, 1.0, 1.0])
    direct = integrate(u1, x, s + t)
    split = integrate(u1, integrate(u1, x, s), t)
    assert np.linalg.norm(direct - split) <= 10 * 1e-9 * max(1.0, np.linalg.norm(direct))


def test_composite_matches_tight_solution():
    u1, u2 = lorenz_pair()
    x = [1.0, 2.0, 3.0]
    a = composite_flow([u1, u2], [0, 1, 0], [0.2, 0.3, 0.1], x)
    b = composite_flow([u1, u2], [0, 1, 0], [0.2, 0.3, 0.1], x, opts=TIGHT)
    np.testing.assert_allclose(a, b, rtol=1e-7)


def test_flow_jacobian_chain_rule():
    u1, _ = lorenz_pair()
    x = np.array([1.0, 1.0, 1.0])
    s, t = 0.2, 0.3
    y = integrate(u1, x, s)
    whole = flow_jacobian_ic(u1, x, s + t)
    chained = flow_jacobian_ic(u1, y, t) @ flow_jacobian_ic(u1, x, s)
    np.testing.assert_allclose(whole, chained, rtol=1e-6, atol=1e-6 * np.abs(whole).max())
    fd = fd_jacobian(lambda z: integrate(u1, z, s + t, opts=TIGHT), x, h=1e-6)
    np.testing.assert_allclose(whole, fd, rtol=1e-5, atol=1e-5 * np.abs(whole).max())


@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_liouville_lorenz(t):
    # div u = -(sigma + 1 + b) is constant, so det J(t) = exp(-(41/3) t)
    u1, _ = lorenz_pair()
    det = np.linalg.det(flow_jacobian_ic(u1, [1.0, 1.0, 1.0], t))
    expected = math.exp(-41 / 3 * t)
    assert abs(det - expected) <= 1e-6 * expected


def test_endpoint_time_jacobian_vs_central_differences():
    u1, u2 = lorenz_pair()
    fields = [u1, u2]
    states, durs, T = [0, 1, 0, 1], [0.1, 0.15, 0.2], 0.6
    x = [1.0, 1.0, 1.0]
    jac = endpoint_time_jacobian(fields, states, durs, T, x, opts=TIGHT)

    def endpoint(d):
        return composite_flow(fields, states, list(d) + [T - sum(d)], x, opts=TIGHT)

    fd = fd_jacobian(endpoint, durs, h=1e-5)
    err = np.abs(jac - fd).max() / np.abs(fd).max()
    assert err <= 1e-5


def test_free_time_jacobian_last_column_is_field():
    u1, u2 = lorenz_pair()
    durs = [0.1, 0.2]
    jac = free_time_jacobian([u1, u2], [0, 1], durs, [1.0, 1.0, 1.0])
    end = composite_flow([u1, u2], [0, 1], durs, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(jac[:, -1], u2(end))
    fd = fd_jacobian(lambda d: composite_flow([u1, u2], [0, 1], d, [1.0, 1.0, 1.0], opts=TIGHT),
                     durs)
    np.testing.assert_allclose(jac, fd, rtol=1e-5, atol=1e-5 * np.abs(fd).max())


def test_torus_endpoint_map_is_degenerate():
    fields = torus_basis(2)
    jac = endpoint_time_jacobian(fields, [0, 1, 0], [0.2, 0.3], 1.0, [0.0, 0.0],
                                 Manifold.torus(2))
    np.testing.assert_array_equal(jac, [[0.0, -1.0], [0.0, 1.0]])
    assert is_regular_point(fields, [0, 1, 0], [0.2, 0.3], 1.0, [0, 0]) == (False, 1)
    assert find_regular_point(fields, 3, 1.0, [0, 0], Manifold.torus(2), n_draws=20,
                              seed=0) is None


def test_lorenz_regular_point_found():
    found = find_regular_point(list(lorenz_pair()), 4, 1.0, [1.0, 1.0, 1.0], seed=1)
    assert found is not None
    states, durs, rank = found
    assert rank == 3 and len(states) == 5 and sum(durs) < 1.0
    assert all(a != b for a, b in zip(states, states[1:]))


def test_blow_up_raises():
    with pytest.raises(IntegrationError) as info:
        integrate(parse_field("x1^2", 1), [1.0], 2.0)
    assert info.value.time < 1.0 + 1e-6


def test_invalid_arguments():
    with pytest.raises(ValueError):
        integrate(ROTATION, [1.0, 0.0], -1.0)
    with pytest.raises(ValueError):
        composite_flow([ROTATION], [0, 0], [1.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        IntegratorOptions(method="euler")

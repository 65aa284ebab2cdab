import io

import numpy as np
import pytest

from switchflow.density import (endpoint_histogram, occupation_histogram, reference_histogram,
                                state_occupation, tv_distance)
from switchflow.flow import Manifold
from switchflow.pdmp import SwitchingSystem, sample_endpoints, sample_path, sample_resolvents

from conftest import torus_basis

UNIT = [[0, 1], [0, 1]]


def torus_system(rates=(1.0, 1.0)):
    return SwitchingSystem.uniform(Manifold.torus(2), torus_basis(2), rates)


def paths(T, seeds, rates=(1.0, 1.0)):
    return [sample_path(torus_system(rates), [0, 0], 0, T, seed=s) for s in seeds]


def test_normalization():
    h = occupation_histogram(paths(200.0, [1]), UNIT, 20)
    probs, out = h.normalized()
    assert abs(probs.sum() + out - 1) <= 1e-12
    assert out == 0.0
    assert h.total_weight == pytest.approx(0.9 * 200.0, abs=0.011)


def test_merge_is_additive():
    a, b = paths(100.0, [1, 2])
    both = occupation_histogram([a, b], UNIT, 10)
    merged = occupation_histogram([a], UNIT, 10) + occupation_histogram([b], UNIT, 10)
    np.testing.assert_allclose(both.mass, merged.mass, rtol=1e-12)
    assert both.total_weight == pytest.approx(merged.total_weight)
    with pytest.raises(ValueError):
        merged.merge(occupation_histogram([a], UNIT, 5))


def test_out_of_box_mass_is_kept():
    pts = np.array([[0.5, 0.5], [2.0, 0.5], [1.0, 1.0], [-0.1, 0.2]])
    h = endpoint_histogram(pts, [0, 1, 0, 0], UNIT, 2, n_states=2)
    probs, out = h.normalized()
    assert out == pytest.approx(0.5)
    # the closed upper corner belongs to the last cell
    assert probs[1, 1, 0] == pytest.approx(0.5)
    assert probs.sum() + out == pytest.approx(1.0)


def test_periodic_indices_wrap():
    h = endpoint_histogram([[1.25, -0.25]], [0], UNIT, 4, n_states=1, periodic=True)
    assert h.mass[1, 3, 0] == 1.0 and h.out_of_box_weight == 0.0


def test_tv_distance_properties():
    a, b = paths(300.0, [3, 4])
    ha = occupation_histogram([a], UNIT, 10)
    hb = occupation_histogram([b], UNIT, 10)
    assert tv_distance(ha, ha) == 0.0
    assert tv_distance(ha, hb) == pytest.approx(tv_distance(hb, ha))
    assert 0 < tv_distance(ha, hb) <= 1
    point = endpoint_histogram([[0.01, 0.01]], [0], UNIT, 10, n_states=2)
    assert tv_distance(point, reference_histogram(point)) == pytest.approx(1 - 1 / 200)


def test_table_export():
    h = endpoint_histogram([[0.1, 0.6], [0.1, 0.6], [0.9, 0.9]], [0, 0, 1], UNIT, 2, n_states=2)
    buf = io.StringIO()
    h.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "state,bin_index_1,bin_index_2,mass"
    assert "1,0,1,0.66666666666666663" in lines
    assert "2,1,1,0.33333333333333331" in lines


def test_fixed_time_kernel_is_singular():
    pts, states = sample_endpoints(torus_system(), [0, 0], 0, 0.7, 2000, seed=1)
    h = endpoint_histogram(pts, states, UNIT, 20, n_states=2, periodic=True)
    assert h.occupied_cells() <= 3 * 20


def test_resolvent_kernel_spreads():
    pts, states = sample_resolvents(torus_system(), [0, 0], 0, 20000, seed=1)
    h = endpoint_histogram(pts, states, UNIT, 20, n_states=2, periodic=True)
    assert h.occupied_cells() >= 200


def test_state_occupation_matches_ctmc():
    occ = state_occupation(paths(5000.0, [7], rates=(1.0, 2.0)), burn_in=100.0)
    np.testing.assert_allclose(occ, [2 / 3, 1 / 3], atol=0.03)


@pytest.mark.slow
def test_tv_between_seeds_shrinks_with_horizon():
    means = []
    for T in (1e3, 1e4, 5e4):
        tvs = []
        for rep in range(2):
            a, b = paths(T, [100 + 2 * rep, 101 + 2 * rep])
            tvs.append(tv_distance(occupation_histogram([a], UNIT, 20),
                                   occupation_histogram([b], UNIT, 20)))
        means.append(np.mean(tvs))
    assert means[0] > means[1] > means[2]


def test_argument_checks():
    a, = paths(10.0, [1])
    with pytest.raises(ValueError):
        occupation_histogram([a], [[0, 1]], 10)
    with pytest.raises(ValueError):
        occupation_histogram([a], [[1, 0], [0, 1]], 10)
    with pytest.raises(ValueError):
        occupation_histogram([a], UNIT, 10, burn_in=20.0)
    with pytest.raises(ValueError):
        occupation_histogram([], UNIT, 10)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocdensity.data import SampleSet
from ocdensity.partition import MERGE_TOL, build_partition


def grid_for(points, h):
    return build_partition(SampleSet(np.asarray(points, dtype=float)), h)


def test_single_midpoint_sample():
    g = grid_for([0.5], 0.25)
    np.testing.assert_array_equal(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert g.data_indices.tolist() == [2]
    np.testing.assert_allclose(g.steps, 0.25)


def test_remainder_steps():
    g = grid_for([0.4], 0.25)
    np.testing.assert_allclose(g.nodes, [0, 0.25, 0.4, 0.65, 0.9, 1.0], atol=1e-15)
    np.testing.assert_allclose(g.steps, [0.25, 0.15, 0.25, 0.25, 0.10], atol=1e-15)
    assert g.data_indices.tolist() == [2]
    assert g.L == 5


def test_no_samples():
    g = build_partition(SampleSet.empty(), 0.1)
    assert g.L == 10
    assert g.data_indices.size == 0
    assert g.nodes[-1] == 1.0


def test_near_coincident_node_is_merged():
    # 3 * 0.1 misses 0.3 by a few ulps; the sample node must win
    g = grid_for([0.3], 0.1)
    assert g.nodes[g.data_indices[0]] == 0.3
    assert g.steps.min() > MERGE_TOL
    assert g.L == 10


def test_stage_shorter_than_h():
    g = grid_for([0.5, 0.5001], 0.01)
    assert g.data_indices[1] - g.data_indices[0] == 1


@pytest.mark.parametrize("h", [0.0, -0.1])
def test_bad_step(h):
    with pytest.raises(ValueError):
        grid_for([0.5], h)


def test_example1_size(example1_samples):
    g = build_partition(example1_samples, 1 / 2000)
    assert 2000 <= g.L <= 2000 + example1_samples.n_distinct


def test_cumulative_stage_counts():
    pts = [0.13, 0.5, 0.77]
    h = 0.05
    g = grid_for(pts, h)
    widths = np.diff([0.0, *pts])
    m = np.ceil(widths / h).astype(int)
    assert g.data_indices.tolist() == np.cumsum(m).tolist()


points_strategy = st.lists(
    st.floats(1e-3, 1 - 1e-3), min_size=1, max_size=30, unique=True
).map(sorted).filter(lambda p: np.all(np.diff(p) > 1e-9))


@settings(max_examples=80, deadline=None)
@given(points_strategy, st.sampled_from([0.5, 0.1, 0.03, 1 / 300]))
def test_partition_invariants(points, h):
    g = grid_for(points, h)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0
    assert np.all(g.steps > 0)
    assert np.all(g.steps <= h * (1 + 1e-12))
    assert abs(g.steps.sum() - 1.0) <= 1e-14
    assert g.nodes[g.data_indices].tobytes() == np.asarray(points).tobytes()
    assert g.L >= len(points) + 1
    assert np.all((g.data_indices >= 1) & (g.data_indices <= g.L - 1))


@settings(max_examples=40, deadline=None)
@given(points_strategy)
def test_size_bounds_when_stages_are_wide(points):
    h = 1 / 2000
    widths = np.diff([0.0, *points, 1.0])
    if widths.min() <= h:
        return
    g = grid_for(points, h)
    assert 2000 <= g.L <= 2000 + len(points)


@settings(max_examples=40, deadline=None)
@given(points_strategy, st.sampled_from([0.1, 0.02, 0.005]))
def test_halving_h_doubles_stage_counts(points, h):
    coarse, fine = grid_for(points, h), grid_for(points, h / 2)
    widths = np.diff([0.0, *points, 1.0])
    per_coarse = np.diff([0, *coarse.data_indices, coarse.L])
    per_fine = np.diff([0, *fine.data_indices, fine.L])
    wide = widths > h
    assert np.all(per_fine[wide] >= 2 * per_coarse[wide] - 1)
    # the uniform interior nodes at least double
    assert np.all(per_fine[wide] - 1 >= 2 * (per_coarse[wide] - 1))

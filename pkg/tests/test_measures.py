import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from relaynet.errors import StructureError
from relaynet.measures import (
    CellMeasure,
    GriddedMeasure,
    MarkedPointSet,
    Partition,
    StepPath,
    Window,
    modulus_of_continuity,
    prokhorov,
    sup_norm,
    total_variation,
)

masses = arrays(np.float64, 5, elements=st.floats(0, 10, allow_nan=False))


# ---------------------------------------------------------------- total variation

def test_total_variation_identical_is_zero():
    m = np.array([0.2, 0.5, 0.3])
    assert total_variation(m, m) == 0.0


def test_total_variation_disjoint_unit_atoms():
    assert total_variation([1.0, 0.0], [0.0, 1.0]) == 1.0


def test_total_variation_extra_atom():
    assert total_variation([1.0, 1.0], [1.0, 0.0]) == 1.0


def test_total_variation_is_max_of_parts():
    # positive part 3, negative part 1
    assert total_variation([4.0, 0.0], [1.0, 1.0]) == 3.0


def test_total_variation_shape_mismatch():
    with pytest.raises(StructureError):
        total_variation([1.0, 2.0], [1.0])


def test_total_variation_partition_mismatch():
    w = Window.unit(1)
    a = CellMeasure(Partition(w, (np.array([0, 0.5, 1]),)), [1.0, 0.0])
    b = CellMeasure(Partition(w, (np.array([0, 0.25, 1]),)), [1.0, 0.0])
    with pytest.raises(StructureError):
        total_variation(a, b)


@given(masses, masses, masses)
def test_total_variation_is_a_metric(a, b, c):
    assert total_variation(a, b) == pytest.approx(total_variation(b, a))
    assert total_variation(a, c) <= total_variation(a, b) + total_variation(b, c) + 1e-9
    assert (total_variation(a, b) == 0) == np.array_equal(a, b)


# ---------------------------------------------------------------- sup norm

def test_sup_norm_identical_paths():
    p = StepPath.from_increments([0.2, 0.7], [0, 0], [0.1, 0.3], 1, 1.0)
    assert sup_norm(p, p) == 0.0


def test_sup_norm_extra_jump():
    p1 = StepPath.from_increments([0.2, 0.7], [0, 1], [0.1, 0.3], 2, 1.0)
    p2 = StepPath.from_increments([0.2, 0.5, 0.7], [0, 1, 1], [0.1, 0.25, 0.3], 2, 1.0)
    assert sup_norm(p1, p2) == pytest.approx(0.25)


def test_sup_norm_zero_against_single_step():
    p1 = StepPath.constant([0.0], 1.0)
    p2 = StepPath.from_increments([0.4], [0], [2.5], 1, 1.0)
    assert sup_norm(p1, p2) == 2.5


def test_sup_norm_horizon_mismatch():
    with pytest.raises(StructureError):
        sup_norm(StepPath.constant([0.0], 1.0), StepPath.constant([0.0], 2.0))


@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 2), st.floats(0, 1)), max_size=8),
       st.lists(st.tuples(st.floats(0, 1), st.integers(0, 2), st.floats(0, 1)), max_size=8),
       st.floats(0, 1))
def test_sup_norm_dominates_pointwise_distance(j1, j2, probe):
    def build(jumps):
        if not jumps:
            return StepPath.constant(np.zeros(3), 1.0)
        t, c, m = zip(*jumps)
        return StepPath.from_increments(t, c, m, 3, 1.0)

    p1, p2 = build(j1), build(j2)
    assert sup_norm(p1, p2) >= total_variation(p1(probe), p2(probe)) - 1e-12


# ---------------------------------------------------------------- step path

def test_step_path_is_right_continuous():
    p = StepPath.from_increments([0.5], [0], [1.0], 1, 1.0)
    assert p(0.5)[0] == 1.0
    assert p.left_limit(0.5)[0] == 0.0
    assert p(0.49)[0] == 0.0


def test_step_path_csv_round_trip():
    p = StepPath.from_increments([0.1, 0.3, 0.3], [0, 1, 0], [0.2, 0.4, 0.1 / 3], 2, 1.0)
    q = StepPath.from_csv(p.to_csv(), 1.0)
    assert np.array_equal(p.times, q.times)
    assert np.array_equal(p.values, q.values)
    assert p.to_csv().splitlines()[0] == "time,cell_index,mass"


def test_step_path_requires_start_at_zero():
    with pytest.raises(StructureError):
        StepPath([0.1], [[0.0]], 1.0)


def test_increasing_flag():
    assert StepPath.from_increments([0.1, 0.2], [0, 0], [1.0, 2.0], 1, 1.0).increasing
    assert not StepPath([0.0, 0.5], [[1.0], [0.5]], 1.0).increasing


# ---------------------------------------------------------------- cell measures

def test_cell_measure_json_round_trip():
    part = Partition(Window.unit(2), (np.array([0, 0.5, 1]), np.array([0, 1.0])))
    m = CellMeasure(part, [0.25, 0.75])
    obj = json.loads(m.to_json())
    assert set(obj) == {"cells", "mass"}
    assert np.array_equal(CellMeasure.from_json(m.to_json(), part).mass, m.mass)


# ---------------------------------------------------------------- point sets and grids

def test_marked_point_set_sorts_stably():
    pts = MarkedPointSet([0.5, 0.1, 0.5], [0.1, 0.2, 0.3], [[0.0], [0.1], [0.2]], 0.5, 1.0)
    assert pts.times.tolist() == [0.1, 0.5, 0.5]
    assert pts.marks.tolist() == [0.2, 0.1, 0.3]
    assert pts.total_mass == 1.5


@pytest.mark.parametrize("kwargs", [
    dict(times=[1.5], marks=[0.5]),
    dict(times=[0.5], marks=[1.5]),
    dict(times=[0.5], marks=[0.5], weight=0.0),
])
def test_marked_point_set_rejects_out_of_domain(kwargs):
    args = dict(times=[0.5], marks=[0.5], locations=[[0.0]], weight=1.0, t_final=1.0)
    args.update(kwargs)
    with pytest.raises(ValueError):
        MarkedPointSet(**args)


def test_gridded_measure_cumulative_arrivals_linear():
    nu = GriddedMeasure.uniform(t_final=2.0, total=3.0)
    assert nu.cumulative_arrivals([0.0, 1.0, 2.0])[:, 0] == pytest.approx([0.0, 1.5, 3.0])
    assert nu.block_masses(0.5) == pytest.approx(np.full(4, 0.75))


def test_block_masses_need_integer_ratio():
    with pytest.raises(ValueError):
        GriddedMeasure.uniform().block_masses(0.3)


def test_gridded_measure_rejects_negative_mass():
    nu = GriddedMeasure.uniform()
    with pytest.raises(ValueError):
        nu.with_mass(-nu.mass)


def test_partition_locate_and_coarsening():
    w = Window.unit(1)
    fine = Partition(w, (np.linspace(0, 1, 5),))
    coarse = Partition(w, (np.array([0, 0.5, 1]),))
    assert fine.locate([[0.0], [0.25], [0.99], [1.0]]).tolist() == [0, 1, 3, 3]
    assert fine.coarsening_map(coarse).tolist() == [0, 0, 1, 1]
    with pytest.raises(StructureError):
        coarse.coarsening_map(Partition(w, (np.array([0, 0.3, 1]),)))


# ---------------------------------------------------------------- Prokhorov

LINE = np.array([[0.0], [0.3], [0.7], [2.0]])


def test_prokhorov_identical_is_zero():
    m = np.array([0.2, 0.3, 0.0, 0.5])
    assert prokhorov(m, m, LINE) == 0.0


@pytest.mark.parametrize("j, expected", [(1, 0.3), (2, 0.7), (3, 1.0)])
def test_prokhorov_two_unit_atoms(j, expected):
    a = np.zeros(4)
    b = np.zeros(4)
    a[0] = 1.0
    b[j] = 1.0
    assert prokhorov(a, b, LINE) == pytest.approx(expected)


def test_prokhorov_mass_gap():
    assert prokhorov([1.0, 0, 0, 0], [1.5, 0, 0, 0], LINE) == pytest.approx(0.5)


@given(masses, masses)
def test_prokhorov_below_total_variation(a, b):
    c = np.linspace(0, 1, 5)[:, None]
    assert prokhorov(a, b, c) <= total_variation(a, b) + 1e-9


# ---------------------------------------------------------------- modulus of continuity

def test_modulus_constant_path():
    p = StepPath.constant([0.7], 1.0)
    for delta in (0.1, 0.5, 0.9):
        assert modulus_of_continuity(p, delta) == 0.0


def test_modulus_single_interior_jump():
    p = StepPath.from_increments([0.5], [0], [1.0], 1, 1.0)
    assert modulus_of_continuity(p, 0.3) == 0.0
    # no admissible boundary at 0.5 once both pieces must exceed 0.6
    assert modulus_of_continuity(p, 0.6) == pytest.approx(1.0)


def test_modulus_two_close_jumps():
    p = StepPath.from_increments([0.10, 0.15], [0, 0], [0.1, 0.1], 1, 1.0)
    assert modulus_of_continuity(p, 0.3) == pytest.approx(0.2)


def test_modulus_requires_delta_below_horizon():
    with pytest.raises(ValueError):
        modulus_of_continuity(StepPath.constant([0.0], 1.0), 1.0)


@given(st.lists(st.tuples(st.floats(0.01, 0.99), st.floats(0.01, 0.5)), min_size=1, max_size=6))
def test_modulus_nonincreasing_as_delta_shrinks(jumps):
    t, m = zip(*jumps)
    p = StepPath.from_increments(t, [0] * len(t), m, 1, 1.0)
    values = [modulus_of_continuity(p, d) for d in (0.8, 0.4, 0.2, 0.1, 0.05)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

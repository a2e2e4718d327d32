import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relaynet.errors import ModelAssumptionError, StructureError
from relaynet.measures import GriddedMeasure, MarkedPointSet, Partition, Window
from relaynet.simulator import simulate_threshold
from relaynet.spatial import (
    KernelTable,
    augment_empirical,
    cell_choice_probabilities,
    flatten_kernel,
    flattening_error,
    normalize_kernel,
    partition_window,
    request_measure,
)


def grid(n, dim=1):
    return partition_window(Window.unit(dim), 1.0 / n)


# ---------------------------------------------------------------- partitions

def test_partition_unit_square_half():
    assert partition_window(Window.unit(2), 0.5).size == 4


def test_partition_side_equals_window():
    assert partition_window(Window.unit(1), 1.0).size == 1


def test_partition_clips_last_cell():
    p = partition_window(Window.unit(1), 0.4)
    assert p.edges[0] == pytest.approx([0.0, 0.4, 0.8, 1.0])


@given(st.floats(0.05, 2.0), st.floats(0.5, 3.0))
def test_partition_covers_window(delta, side):
    w = Window(np.zeros(1), np.array([side]))
    p = partition_window(w, delta)
    assert p.volumes.sum() == pytest.approx(side)
    assert np.all(p.volumes > 0)
    assert np.all(p.volumes <= delta + 1e-12)


# ---------------------------------------------------------------- normalization

def test_normalize_constant_kernel():
    part = grid(4)
    rm = np.array([0.1, 0.2, 0.3, 0.4]) * 2
    kn = normalize_kernel(KernelTable.constant(3.0, part, part), rm)
    assert kn.values == pytest.approx(np.full((4, 4), 1 / rm.sum()))


def test_normalize_single_relay_cell():
    xp, yp = grid(3), grid(1)
    kn = normalize_kernel(KernelTable(np.array([[1.0], [2.0], [5.0]]), xp, yp), [0.5])
    assert kn.values[:, 0] == pytest.approx(np.full(3, 2.0))


def test_normalized_rows_integrate_to_one(rng):
    part = grid(8)
    rm = rng.uniform(0.1, 1, 8)
    kn = normalize_kernel(KernelTable(rng.uniform(0.1, 3, (8, 8)), part, part), rm)
    assert np.max(np.abs(kn.values @ rm - 1)) < 1e-12


def test_normalize_zero_row_raises():
    part = grid(2)
    with pytest.raises(ModelAssumptionError):
        normalize_kernel(KernelTable(np.array([[1.0, 1.0], [0.0, 0.0]]), part, part), [1.0, 1.0])


# ---------------------------------------------------------------- flattening

def test_flatten_constant_kernel_is_constant():
    fine, coarse = grid(8), grid(2)
    rm = np.full(8, 0.125)
    kf = flatten_kernel(KernelTable.constant(1.0, fine, fine), coarse, rm)
    assert kf.values == pytest.approx(np.ones((8, 8)))


def test_flatten_preserves_cell_probabilities(rng):
    fine, coarse = grid(12), grid(3)
    rm = rng.uniform(0.1, 1, 12)
    kernel = KernelTable(rng.uniform(0, 2, (12, 12)) + 0.01, fine, fine)
    kf = flatten_kernel(kernel, coarse, rm)
    assert cell_choice_probabilities(kf, coarse) == pytest.approx(cell_choice_probabilities(kernel, coarse, rm),
                                                                  abs=1e-14)


def test_flatten_idempotent_on_cellwise_constant_kernel():
    fine, coarse = grid(4), grid(2)
    rm = np.full(4, 0.25)
    values = np.kron(np.array([[1.0, 3.0], [2.0, 0.5]]), np.ones((2, 2)))
    kernel = KernelTable(values, fine, fine)
    kn = normalize_kernel(kernel, rm)
    kf = flatten_kernel(kernel, coarse, rm)
    assert kf.values == pytest.approx(kn.values)
    assert flattening_error(kn, kf, np.full(4, 0.25), rm) == pytest.approx(0.0, abs=1e-15)


def test_flatten_with_different_reference():
    fine, coarse = grid(4), grid(2)
    rm = np.array([0.1, 0.4, 0.3, 0.2])
    rm2 = np.array([0.25, 0.25, 0.25, 0.25])
    kernel = KernelTable.from_function(lambda x, y: 1 + x + y, fine, fine)
    kf = flatten_kernel(kernel, coarse, rm, rm2)
    probs = cell_choice_probabilities(kernel, coarse, rm)
    owner = fine.coarsening_map(coarse)
    per_cell = np.zeros((4, 2))
    np.add.at(per_cell.T, owner, (kf.values * rm2).T)
    assert per_cell == pytest.approx(probs)


def test_flatten_empty_cell_with_probability_raises():
    fine, coarse = grid(4), grid(2)
    kernel = KernelTable.constant(1.0, fine, fine)
    with pytest.raises(ModelAssumptionError):
        flatten_kernel(kernel, coarse, np.full(4, 0.25), np.array([0.5, 0.5, 0.0, 0.0]))


def test_flattening_error_linear_kernel_half_cells():
    fine, coarse = grid(256), grid(2)
    rm = fine.volumes
    kernel = KernelTable.from_function(lambda x, y: y + 0 * x, fine, fine)
    err = flattening_error(normalize_kernel(kernel, rm), flatten_kernel(kernel, coarse, rm), rm, rm)
    assert err == pytest.approx(0.25, abs=1e-6)


def test_flattening_error_constant_kernel_vanishes():
    fine = grid(16)
    rm = fine.volumes
    kernel = KernelTable.constant(2.0, fine, fine)
    for n in (1, 2, 4, 8):
        err = flattening_error(normalize_kernel(kernel, rm), flatten_kernel(kernel, grid(n), rm), rm, rm)
        assert err == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("func", [
    lambda x, y: np.exp(-((x - y) ** 2) / 0.1),
    lambda x, y: 1 + np.sin(3 * x * y),
    lambda x, y: 0.5 + y ** 2,
])
def test_flattening_error_decreases_dyadically(func):
    fine = grid(64)
    rm = fine.volumes
    kernel = KernelTable.from_function(func, fine, fine)
    kn = normalize_kernel(kernel, rm)
    errs = [flattening_error(kn, flatten_kernel(kernel, grid(n), rm), rm, rm) for n in (1, 2, 4, 8, 16)]
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_cell_choice_law_matches_relay_sampling(rng):
    fine, coarse = grid(6), grid(3)
    rm = rng.uniform(0.1, 1, 6)
    kernel = KernelTable(rng.uniform(0.1, 2, (6, 6)), fine, fine)
    kn = normalize_kernel(kernel, rm)
    relay_law = kn.values * rm[None, :]
    owner = fine.coarsening_map(coarse)
    by_cell = np.stack([relay_law[:, owner == c].sum(axis=1) for c in range(3)], axis=1)
    assert np.max(np.abs(by_cell - cell_choice_probabilities(kernel, coarse, rm))) < 1e-15


# ---------------------------------------------------------------- kernel I/O

def test_kernel_csv_round_trip(tmp_path):
    part = grid(3)
    kernel = KernelTable(np.arange(9.0).reshape(3, 3) / 7, part, part)
    path = tmp_path / "k.csv"
    path.write_text(kernel.to_csv())
    assert np.array_equal(KernelTable.from_csv(path, part, part).values, kernel.values)


def test_kernel_csv_missing_file_names_path(tmp_path):
    part = grid(2)
    missing = tmp_path / "nope.csv"
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        KernelTable.from_csv(missing, part, part)


def test_kernel_shape_checked():
    with pytest.raises(StructureError):
        KernelTable(np.ones((2, 3)), grid(2), grid(2))


# ---------------------------------------------------------------- augmented empirical measure

def points(times, marks, weight=0.1):
    return MarkedPointSet(times, marks, np.zeros((len(times), 1)), weight, 1.0)


def test_augment_single_cell():
    p = points([0.2, 0.4], [0.3, 0.9])
    aug = augment_empirical([p], [1.0])
    assert aug.targets.tolist() == [0, 0]
    assert len(aug) == 2


def test_augment_preserves_mass_per_cell_and_empty_cells():
    parts = [points([0.1, 0.5], [0.2, 0.3]), points([], []), points([0.3], [0.6])]
    aug = augment_empirical(parts, [0.5, 0.2, 0.3])
    counts = np.bincount(aug.targets, minlength=3) * aug.weight
    assert counts == pytest.approx([p.total_mass for p in parts])


def test_augment_count_mismatch():
    with pytest.raises(StructureError):
        augment_empirical([points([0.1], [0.2])], [0.5, 0.5])


def test_localization_identity(rng):
    rm = np.array([0.3, 0.5, 0.2])
    parts = [points(rng.random(n), rng.random(n), 0.05) for n in (7, 11, 4)]
    aug = augment_empirical(parts, rm)
    joint = simulate_threshold(aug, rm)
    for c, p in enumerate(parts):
        alone = simulate_threshold(p.with_targets(0), [rm[c]])
        assert np.array_equal(joint.frustrated_flags[joint.choice == c], alone.frustrated_flags)


# ---------------------------------------------------------------- request measure

def test_request_measure_preserves_transmitter_mass(rng):
    part = grid(4)
    nu = GriddedMeasure.uniform(total=2.0, space=part)
    rm = rng.uniform(0.1, 1, 4)
    kernel = KernelTable(rng.uniform(0.1, 2, (4, 4)), part, part)
    req = request_measure(nu, kernel, rm)
    assert req.mass.sum(axis=3) == pytest.approx(nu.mass)
    assert req.relay.relay_mass == pytest.approx(rm)

import numpy as np
import pytest

from dsfs.exceptions import DimensionMismatch
from dsfs.oracle import (Label, Provenance, SamplePoint, bounding_box, check_feasible, label_batch,
                         labels_vector, read_samples_csv, write_samples_csv)
from conftest import in_toy_b


def test_toy_a_labels(model_a):
    res = check_feasible(model_a, [2.0])
    assert res.label is Label.FEASIBLE
    assert res.witness[0] == pytest.approx(0.0, abs=1e-9)
    assert check_feasible(model_a, [0.0]).label is Label.INFEASIBLE


def test_toy_b_coupling(model_b):
    assert not check_feasible(model_b, [1.0, 1.0]).feasible
    res = check_feasible(model_b, [1.0, -1.0])
    assert res.feasible
    np.testing.assert_allclose(model_b.p0(res.witness), [1.0, -1.0], atol=1e-9)


def test_dimension_checked(model_b):
    with pytest.raises(DimensionMismatch):
        check_feasible(model_b, [0.0])


def test_bounding_boxes(model_a, model_b):
    box = bounding_box(model_a, 0.0)
    np.testing.assert_allclose([box.lo[0], box.hi[0]], [1, 3], atol=1e-9)
    lo, hi = bounding_box(model_a, 0.1).inflated
    np.testing.assert_allclose([lo[0], hi[0]], [0.8, 3.2], atol=1e-9)
    box = bounding_box(model_b, 0.0)
    np.testing.assert_allclose(box.lo, [-1, -1], atol=1e-9)
    np.testing.assert_allclose(box.hi, [1, 1], atol=1e-9)


def test_label_batch_order_and_timing(model_a):
    out = label_batch(model_a, [[2.0], [0.0]])
    assert [s.label for s in out] == [Label.FEASIBLE, Label.INFEASIBLE]
    assert all(s.provenance is Provenance.ORACLE and s.wall_time > 0 for s in out)
    assert label_batch(model_a, []) == []


def test_label_batch_threads_match_serial(model_b, rng):
    pts = rng.uniform(-1.2, 1.2, (200, 2))
    a = labels_vector(label_batch(model_b, pts))
    b = labels_vector(label_batch(model_b, pts, n_jobs=2))
    np.testing.assert_array_equal(a, b)


def test_toy_b_monte_carlo_fraction(model_b):
    # exact area of {|x_t| <= 1, |x1 + x2| <= 1} is 4 - 2 * (1/2) = 3, i.e. 3/4 of the square
    g = np.random.default_rng(99)
    pts = g.uniform(-1, 1, (1000, 2))
    frac = labels_vector(label_batch(model_b, pts)).mean()
    sigma = np.sqrt(0.75 * 0.25 / 1000)
    assert abs(frac - 0.75) <= 3 * sigma


def _grid(lo, hi, k=101):
    return np.linspace(lo, hi, k)


def test_toy_a_grid_matches_closed_form(model_a):
    for q in _grid(0.0, 4.0, 401):
        assert check_feasible(model_a, [q]).feasible == bool(1.0 <= q <= 3.0), q


def test_toy_b_grid_matches_closed_form(model_b):
    xs = _grid(-1.3, 1.3)
    pts = np.array([(x, y) for y in xs for x in xs])
    got = labels_vector(label_batch(model_b, pts)).astype(bool)
    np.testing.assert_array_equal(got, in_toy_b(pts, 1e-9))


def test_midpoint_convexity(desk_model):
    g = np.random.default_rng(5)
    box = bounding_box(desk_model)
    pts = box.sample(g, 3000)
    feas = pts[labels_vector(label_batch(desk_model, pts)) == 1]
    i = g.integers(0, len(feas), 300)
    j = g.integers(0, len(feas), 300)
    mids = 0.5 * (feas[i] + feas[j])
    assert np.all(labels_vector(label_batch(desk_model, mids)) == 1)


def test_feasible_points_inside_uninflated_box(desk_model):
    box = bounding_box(desk_model)
    pts = box.sample(np.random.default_rng(6), 500)
    for s in label_batch(desk_model, pts):
        if s.label is Label.FEASIBLE:
            assert box.contains(s.p0, tol=1e-7)


def test_sample_point_invariants():
    with pytest.raises(ValueError):
        SamplePoint([0.0], Label.INFEASIBLE, Provenance.HULL)
    with pytest.raises(ValueError):
        SamplePoint([0.0], Label.FEASIBLE, Provenance.NONE)
    with pytest.raises(ValueError):
        SamplePoint([0.0], Label.UNLABELED, Provenance.ORACLE)


def test_samples_csv_roundtrip(tmp_path):
    pts = [SamplePoint([0.1, 0.2], Label.FEASIBLE, Provenance.HULL),
           SamplePoint([1 / 3, -2.0], Label.INFEASIBLE, Provenance.ORACLE),
           SamplePoint([5.0, 6.0])]
    path = tmp_path / "samples.csv"
    write_samples_csv(pts, path)
    assert path.read_text().splitlines()[0] == "p0_1,p0_2,label,provenance"
    back = read_samples_csv(path)
    assert [(s.label, s.provenance) for s in back] == [(s.label, s.provenance) for s in pts]
    np.testing.assert_array_equal(np.vstack([s.p0 for s in back]), np.vstack([s.p0 for s in pts]))

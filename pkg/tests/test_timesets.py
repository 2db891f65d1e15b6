import math

import numpy as np
import pytest

import obsmeas as om


def test_make_time_set_measures():
    E = om.make_time_set(1.0, [(0.0, 0.5), (0.75, 1.0)])
    assert E.measure == pytest.approx(0.75, abs=1e-15)
    merged = om.make_time_set(1.0, [(0.2, 0.4), (0.3, 0.6)])
    assert merged.intervals.shape == (1, 2)
    np.testing.assert_allclose(merged.intervals[0], [0.2, 0.6])
    assert merged.measure == pytest.approx(0.4, abs=1e-15)


def test_make_time_set_rejects_degenerate_input():
    with pytest.raises(ValueError):
        om.make_time_set(1.0, [(2.0, 3.0)])
    with pytest.raises(ValueError):
        om.make_time_set(1.0, [(0.5, 0.5)])
    with pytest.raises(ValueError):
        om.make_time_set(0.0, [(0.0, 1.0)])


def test_density_point_rules():
    assert om.density_point(om.make_time_set(1.0, [(0.0, 0.5), (0.75, 1.0)])) == 0.25
    assert om.density_point(om.make_time_set(1.0, [(0.1, 0.9)])) == 0.5
    # equal lengths break toward the earliest interval
    assert om.density_point(om.make_time_set(1.0, [(0.0, 0.3), (0.5, 0.8)])) == pytest.approx(0.15)


def test_density_point_is_interior():
    rng = np.random.default_rng(9)
    for _ in range(50):
        pts = np.sort(rng.uniform(0, 1, 6))
        try:
            E = om.make_time_set(1.0, list(zip(pts[::2], pts[1::2])))
        except ValueError:
            continue
        ell = om.density_point(E)
        assert any(a < ell < b for a, b in E.intervals)


def test_telescope_for_density_recurrence():
    E = om.make_time_set(1.0, [(0.0, 1.0)])
    seq = om.telescope_for_density(E, 0.75)
    assert seq.density_point == 0.5
    assert seq.points[0] == pytest.approx(0.75, abs=1e-15)
    assert seq.points[1] == pytest.approx(0.6875, abs=1e-15)
    ratios = seq.gaps[1:] / seq.gaps[:-1]
    np.testing.assert_allclose(ratios, 0.75, rtol=1e-14)
    assert np.all(seq.measure_fractions == 1.0)
    assert 0.0 < seq.gaps[0] <= 1.0
    # truncation at 1e-12 on distance to the anchor: ceil(log(1e-12/0.25)/log(0.75))
    expected = math.ceil(math.log(1e-12 / 0.25) / math.log(0.75))
    assert seq.points.size == expected == 92


def test_telescope_validation_and_custom_anchor():
    E = om.make_time_set(1.0, [(0.0, 0.5), (0.6, 1.0)])
    with pytest.raises(ValueError):
        om.telescope_for_density(E, 1.0)
    with pytest.raises(ValueError):
        om.telescope_for_density(E, 0.5, ell=0.55)  # not interior to E
    seq = om.telescope_for_density(E, 0.5, ell=0.45)
    assert np.all(seq.measure_fractions >= 1.0 / 3.0)
    assert seq.points[0] <= 0.5


def test_telescope_max_points_cap():
    E = om.make_time_set(1.0, [(0.0, 1.0)])
    seq = om.telescope_for_density(E, 0.9999, max_points=64)
    assert seq.points.size == 64


def test_geometric_horizon_sequence():
    seq = om.geometric_horizon_sequence(1.0, 0.75)
    np.testing.assert_allclose(seq.points[:3], [1.0, 0.75, 0.5625], rtol=1e-15)
    gap_law = seq.gaps[1:21] / seq.gaps[:20]
    np.testing.assert_allclose(gap_law, 0.75, rtol=1e-14)
    assert seq.points[-1] >= 1e-12
    assert seq.points[-1] * 0.75 < 1e-12  # next point would cross the threshold
    assert seq.density_point == 0.0


def test_intersect_measure():
    E = om.make_time_set(1.0, [(0.0, 0.5), (0.75, 1.0)])
    assert om.intersect_measure(E, 0.4, 0.8) == pytest.approx(0.15, abs=1e-15)
    assert om.intersect_measure(E, 0.55, 0.7) == 0.0
    assert om.intersect_measure(E, -1.0, 2.0) == pytest.approx(E.measure, abs=1e-15)
    with pytest.raises(ValueError):
        om.intersect_measure(E, 0.5, 0.5)


def test_intersect_measure_additive_and_monotone():
    E = om.make_time_set(2.0, [(0.1, 0.6), (0.9, 1.4), (1.7, 1.9)])
    cuts = [0.0, 0.45, 0.8, 1.3, 2.0]
    total = sum(om.intersect_measure(E, a, b) for a, b in zip(cuts, cuts[1:]))
    assert total == pytest.approx(E.measure, abs=1e-14)
    assert om.intersect_measure(E, 0.2, 0.5) <= om.intersect_measure(E, 0.1, 0.7)


def test_timeset_json_round_trip():
    E = om.make_time_set(1.5, [(0.2, 0.4), (0.9, 1.1)])
    back = om.timeset_from_dict(om.timeset_to_dict(E))
    np.testing.assert_array_equal(E.intervals, back.intervals)
    assert back.horizon == 1.5

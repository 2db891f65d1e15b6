import math

import numpy as np
import pytest
from scipy.integrate import quad

import obsmeas as om


def test_make_diagonal_scalar_semigroup():
    model = om.make_diagonal([1.0])
    u = om.semigroup_apply(model, 1.0, [1.0])
    np.testing.assert_allclose(u, [math.exp(-1.0)], rtol=1e-15)
    assert model.decay_mu == 1.0


def test_dirichlet_spectrum_and_repeated_eigenvalues():
    model = om.make_diagonal([(k * np.pi) ** 2 for k in range(1, 9)])
    assert model.eigenvalues[0] == pytest.approx(np.pi**2, rel=1e-15)
    om.make_diagonal([1.0, 1.0, 2.0])  # nondecreasing is the validity boundary


@pytest.mark.parametrize("bad", [[], [0.0, 1.0], [-1.0], [2.0, 1.0]])
def test_make_diagonal_rejects_invalid_lists(bad):
    with pytest.raises(ValueError):
        om.make_diagonal(bad)


def test_heat_window_norms():
    _, op_full = om.make_heat_1d(1, (0.0, 1.0), 32)
    e1 = np.array([1.0])
    assert np.sum((op_full.matrix @ e1) ** 2) == pytest.approx(1.0, abs=1e-10)
    _, op_half = om.make_heat_1d(1, (0.0, 0.5), 32)
    # closed form: integral of 2 sin(pi x)^2 over (0, 1/2) is exactly 1/2
    assert np.sum((op_half.matrix @ e1) ** 2) == pytest.approx(0.5, abs=1e-10)


def test_heat_window_against_high_order_quadrature():
    model, op = om.make_heat_1d(2, (0.3, 0.8), 64)
    _, op_fine = om.make_heat_1d(2, (0.3, 0.8), 128)
    assert op.matrix.shape == (64, 2)
    sv = np.linalg.svd(op.matrix, compute_uv=False)
    assert sv[-1] > 0.0
    rng = np.random.default_rng(3)
    for _ in range(5):
        f = rng.standard_normal(2)
        a = np.sum((op.matrix @ f) ** 2)
        b = np.sum((op_fine.matrix @ f) ** 2)
        np.testing.assert_allclose(a, b, rtol=1e-10)


def test_heat_window_validation():
    with pytest.raises(ValueError):
        om.make_heat_1d(0, (0.0, 1.0), 32)
    with pytest.raises(ValueError):
        om.make_heat_1d(2, (0.5, 0.5), 32)
    with pytest.raises(ValueError):
        om.make_heat_1d(2, (0.0, 1.0), 1)


def test_semigroup_law_and_validation():
    model = om.make_diagonal([1.0, 3.5, 9.0])
    rng = np.random.default_rng(11)
    u0 = rng.standard_normal(3)
    for t in (0.0, 0.3, 1.7):
        for s in (0.0, 0.5, 2.0 - t if t < 2.0 else 0.1):
            lhs = om.semigroup_apply(model, t + s, u0)
            rhs = om.semigroup_apply(model, t, om.semigroup_apply(model, s, u0))
            assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(u0)
    np.testing.assert_array_equal(om.semigroup_apply(model, 0.0, u0), u0)
    with pytest.raises(ValueError):
        om.semigroup_apply(model, -0.1, u0)


def test_decay_off_leading_modes():
    # States supported above mode m contract at least at the next rate.
    model = om.make_diagonal([1.0, 2.0, 5.0, 11.0])
    rng = np.random.default_rng(4)
    for m in range(3):
        g = np.zeros(4)
        g[m + 1 :] = rng.standard_normal(3 - m)
        for t in (0.1, 0.7, 2.0):
            bound = math.exp(-model.eigenvalues[m + 1] * t) * np.linalg.norm(g)
            assert np.linalg.norm(om.semigroup_apply(model, t, g)) <= bound * (1 + 1e-12)


def test_unitary_semigroup_isometry():
    model = om.make_diagonal([1.0], kind=om.UNITARY)
    u = om.semigroup_apply(model, np.pi, [1.0])
    np.testing.assert_allclose(u, [-1.0], atol=1e-12)
    model3 = om.make_diagonal([1.0, 2.0, 3.0], kind=om.UNITARY)
    u0 = np.array([1.0, -2.0, 0.5])
    for t in (0.0, 0.4, 3.1):
        ut = om.semigroup_apply(model3, t, u0)
        assert abs(np.linalg.norm(ut) - np.linalg.norm(u0)) <= 1e-12


def test_state_derivative_closed_forms():
    model = om.make_diagonal([2.0])
    d1 = om.state_derivative(model, 1.0, [1.0], 1)
    np.testing.assert_allclose(d1, [-2.0 * math.exp(-2.0)], rtol=1e-15)
    u0 = np.array([1.0, 0.5])
    m2 = om.make_diagonal([1.0, 4.0])
    np.testing.assert_array_equal(
        om.state_derivative(m2, 0.7, u0, 0), om.semigroup_apply(m2, 0.7, u0)
    )
    with pytest.raises(ValueError):
        om.state_derivative(m2, 0.0, u0, 1)


def test_state_derivative_against_finite_difference():
    model = om.make_diagonal([1.0, 2.0, 3.0])
    rng = np.random.default_rng(5)
    u0 = rng.standard_normal(3)
    t, h = 0.5, 1e-5
    fd = (om.state_derivative(model, t + h, u0, 3) - om.state_derivative(model, t - h, u0, 3)) / (2 * h)
    exact = om.state_derivative(model, t, u0, 4)
    np.testing.assert_allclose(exact, fd, rtol=1e-6)


def test_state_derivative_splitting_consistency():
    model = om.make_diagonal([1.0, 2.5, 7.0])
    rng = np.random.default_rng(6)
    u0 = rng.standard_normal(3)
    t = 0.9
    for m in range(1, 7):
        v = u0
        for _ in range(m):
            v = om.state_derivative(model, t / m, v, 1)
        np.testing.assert_allclose(om.state_derivative(model, t, u0, m), v, rtol=1e-9)


def test_observation_intensity():
    model = om.make_diagonal([1.0])
    op = om.ObservationOperator.identity(1)
    assert om.observation_intensity(model, op, 1.0, [1.0]) == pytest.approx(math.exp(-2.0), rel=1e-14)
    assert om.observation_intensity(model, op, 0.3, [0.0]) == 0.0


def test_observation_intensity_matches_window_integral():
    model, op = om.make_heat_1d(2, (0.3, 0.8), 64)
    u0 = np.array([1.0, 1.0])
    t = 0.1
    ut = om.semigroup_apply(model, t, u0)

    def profile_sq(x):
        return (ut[0] * np.sqrt(2) * np.sin(np.pi * x) + ut[1] * np.sqrt(2) * np.sin(2 * np.pi * x)) ** 2

    oracle, _ = quad(profile_sq, 0.3, 0.8, epsabs=1e-13, epsrel=1e-13)
    assert om.observation_intensity(model, op, t, u0) == pytest.approx(oracle, abs=1e-8)


def test_observation_operator_validation():
    with pytest.raises(ValueError):
        om.ObservationOperator(np.eye(2), operator_norm=2.0)
    with pytest.raises(ValueError):
        om.ObservationOperator(np.array([[1.0, 1.0]]), provenance="identity")
    op = om.ObservationOperator.identity(3)
    assert op.operator_norm == 1.0
    model = om.make_diagonal([1.0, 2.0])
    with pytest.raises(ValueError):
        om.observation_intensity(model, op, 0.1, [1.0, 1.0])


def test_descriptor_round_trip():
    model, op = om.make_heat_1d(4, (0.25, 0.75), 48)
    desc = om.model_to_descriptor(model, op)
    model2, op2 = om.model_from_descriptor(desc)
    np.testing.assert_array_equal(model.eigenvalues, model2.eigenvalues)
    np.testing.assert_array_equal(op.matrix, op2.matrix)
    diag = om.model_from_descriptor({"kind": "diagonal", "n": 2, "eigenvalues": [1.0, 2.0]})
    assert diag[1].provenance == "identity"
    with pytest.raises(ValueError):
        om.model_from_descriptor({"kind": "heat1d", "n": 2, "generator": "unitary"})
    with pytest.raises(ValueError):
        om.model_from_descriptor({"kind": "mystery"})

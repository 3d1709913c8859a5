import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degentrace import PRESETS
from degentrace.dynamics import (PhasePoint, derivative_flow_formula, derivative_tensor_fd, generating_residual,
                                 hamiltonian, integrate_flow, jet_comparison, linearization_at_equilibrium,
                                 period, shear_matrix, write_jet_csv)
from degentrace.errors import NonCompactOrbitError
from degentrace.model import HomogeneousForm, PotentialModel, preset_model

FREE = PotentialModel(1, name="free")


def test_equilibrium_is_fixed(quartic, radial):
    for m in (quartic, radial):
        z0 = np.concatenate([m.x0, np.zeros(m.n)])
        for t in (0.5, 3.0):
            np.testing.assert_array_equal(integrate_flow(m, z0, t).as_vector(), z0)


def test_energy_conservation(quartic):
    z = PhasePoint([1.0], [0.0])
    for t in (0.7, 5.0, -2.0):
        out = integrate_flow(quartic, z, t, tol=1e-10)
        assert abs(hamiltonian(quartic, out) - 1.0) <= 1e-10 * 2


def test_free_flow():
    out = integrate_flow(FREE, PhasePoint([0.0], [0.3]), 2.0)
    np.testing.assert_allclose(out.as_vector(), [1.2, 0.3], rtol=1e-13)


@pytest.mark.parametrize("t", [0.0, 0.1, 1.0, 3.0])
def test_linearization(quartic, t):
    jet = linearization_at_equilibrium(quartic, t)
    np.testing.assert_allclose(jet.jacobian, shear_matrix(1, t), atol=1e-8)
    assert jet.symplectic_defect < 1e-8
    assert np.linalg.det(jet.jacobian) == pytest.approx(1.0, abs=1e-8)
    if t == 0:
        assert jet.kernel.shape[1] == 2
    else:
        # fixed vectors have zero momentum component
        assert jet.kernel.shape[1] == 1 and abs(jet.kernel[1, 0]) < 1e-6


def test_linearization_two_dimensional(radial):
    jet = linearization_at_equilibrium(radial, 1.0)
    np.testing.assert_allclose(jet.jacobian, shear_matrix(2, 1.0), atol=1e-8)


def test_shear_examples():
    np.testing.assert_array_equal(shear_matrix(1, 1.0), [[1, 2], [0, 1]])
    np.testing.assert_array_equal(shear_matrix(1, 0.0), np.eye(2))


def test_derivative_formula_hand_value(quartic):
    np.testing.assert_allclose(derivative_flow_formula(quartic, 1.0, [1.0, 0.0]), [-24.0, -24.0], rtol=1e-14)
    np.testing.assert_array_equal(derivative_flow_formula(quartic, 0.0, [1.0, 0.5]), [0.0, 0.0])


@pytest.mark.parametrize("t", [1e-3, 1e-2])
def test_momentum_component_is_linear_in_t(quartic, t):
    # at xi = 0 the momentum part is -t (k-1)! grad V_k(x) to leading order
    val = derivative_flow_formula(quartic, t, [0.7, 0.0])
    assert val[1] == pytest.approx(-t * 6 * 4 * 0.7**3, rel=1e-12)


@pytest.mark.parametrize("name", ["quartic-1d", "sextic-1d", "witten-1d"])
@pytest.mark.parametrize("t", [0.5, 3.0])
@pytest.mark.parametrize("direction", [(1.0, 0.0), (0.0, 1.0), (0.6, -0.8)])
def test_formula_matches_finite_differences(name, t, direction):
    m = preset_model(name)
    row = jet_comparison(m, t, direction)
    assert row["usable"]
    diff = np.max(np.abs(row["formula_value"] - row["fd_value"]))
    scale = np.max(np.abs(row["formula_value"]))
    assert diff <= max(1e-4 * scale, row["fd_error"])


@pytest.mark.parametrize("order", [2])
def test_intermediate_orders_vanish(quartic, order):
    fd = derivative_tensor_fd(quartic, 1.0, [0.6, -0.8], order)
    assert np.max(np.abs(fd.value)) <= fd.error


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0.2, 3.0), x=st.floats(-1, 1), xi=st.floats(-1, 1))
def test_formula_is_homogeneous_in_direction(c, x, xi):
    m = preset_model("sextic-1d")
    a = derivative_flow_formula(m, 0.8, [c * x, c * xi])
    b = derivative_flow_formula(m, 0.8, [x, xi])
    np.testing.assert_allclose(a, c ** (m.k - 1) * b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_generating_function_order(name):
    m = preset_model(name)
    res = generating_residual(m, 1.0)
    assert res.order >= m.k - 0.2
    assert res.xi0_identity_error <= 1e-10 and res.xi1_identity_error <= 1e-10


def test_generating_function_is_exact_for_free_flow():
    res = generating_residual(FREE, 1.3)
    assert np.all(res.defects <= 1e-15)


def test_harmonic_period(harmonic):
    for E in (0.5, 2.0):
        assert period(harmonic, E) == pytest.approx(math.pi, rel=1e-9)


def test_quartic_period_scaling(quartic):
    # x^4: T(mu^4 E) = mu^(-1) T(E)
    t1 = period(quartic, 1.0)
    t2 = period(quartic, 16.0)
    assert t1 > 0 and math.isfinite(t1)
    assert t2 == pytest.approx(t1 / 2, rel=1e-9)


def test_unbounded_orbit_raises():
    cubic = PotentialModel(1, germ_terms=(HomogeneousForm(1, 3, {(3,): 1.0}),))
    with pytest.raises(NonCompactOrbitError):
        period(cubic, 1.0)


def test_jet_csv(tmp_path, quartic):
    rows = [jet_comparison(quartic, 1.0, d) for d in ((1.0, 0.0), (0.0, 1.0))]
    path = tmp_path / "jets.csv"
    write_jet_csv(path, rows)
    out = list(csv.reader(path.open()))
    assert out[0] == ["t", "direction", "formula_value", "fd_value", "fd_error"]
    assert out[1][1] == "1.0 0.0"

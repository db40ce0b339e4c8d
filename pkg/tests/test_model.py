import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qtherm.model import (
    IDENTITY,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SensorParams,
    build_coupling_operator,
    build_initial_state,
    build_sensor_hamiltonian,
    hamiltonian_eigensystem,
    rotate_params,
)


def rotation_matrix(phi):
    # exp(-i phi sigma_y / 2)
    return math.cos(phi / 2) * IDENTITY - 1j * math.sin(phi / 2) * SIGMA_Y


def test_pauli_algebra():
    for s in (SIGMA_X, SIGMA_Y, SIGMA_Z):
        assert np.allclose(s @ s, IDENTITY)
    assert np.allclose(SIGMA_X @ SIGMA_Y - SIGMA_Y @ SIGMA_X, 2j * SIGMA_Z)


def test_params_validation():
    with pytest.raises(ValueError):
        SensorParams(epsilon=1.0, delta=-0.5)
    with pytest.raises(ValueError):
        SensorParams(epsilon=1.0, theta=math.pi)
    with pytest.raises(ValueError):
        SensorParams(epsilon=0.0, delta=0.0)
    # pure-dephasing configuration is allowed
    SensorParams(epsilon=1.0, delta=0.0, theta=math.pi / 2)


def test_hamiltonian_spectrum():
    p = SensorParams(epsilon=0.5, delta=1.0)
    evals, evecs = hamiltonian_eigensystem(build_sensor_hamiltonian(p))
    omega = p.rabi_frequency()
    assert evals == pytest.approx([-omega / 2, omega / 2])
    assert np.allclose(evecs.conj().T @ evecs, IDENTITY)


def test_coupling_operator_limits():
    assert np.allclose(
        build_coupling_operator(SensorParams(epsilon=1.0, theta=0.0)), SIGMA_X
    )
    assert np.allclose(
        build_coupling_operator(SensorParams(epsilon=1.0, theta=math.pi / 2)),
        SIGMA_Z,
    )


def test_initial_state_is_pure_projector():
    p = SensorParams(epsilon=1.0, alpha=math.pi / 4, varphi=math.pi / 2)
    rho = build_initial_state(p)
    assert np.trace(rho) == pytest.approx(1.0)
    assert np.allclose(rho, rho.conj().T)
    assert np.allclose(rho @ rho, rho)  # pure
    # equatorial state pointing along -y
    bloch = [np.real(np.trace(rho @ s)) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)]
    assert bloch == pytest.approx([0.0, -1.0, 0.0], abs=1e-15)


def test_rotation_diagonalizes_coupling():
    p = SensorParams(epsilon=2.0, delta=1.0, theta=2 * math.pi / 3)
    rp = rotate_params(p)
    r = rotation_matrix(rp.phi)
    s_rot = r.conj().T @ build_coupling_operator(p) @ r
    assert np.allclose(s_rot, SIGMA_Z, atol=1e-15)
    h_rot = r.conj().T @ build_sensor_hamiltonian(p) @ r
    expected = 0.5 * (rp.eps_tilde * SIGMA_Z + rp.delta_tilde * SIGMA_X)
    assert np.allclose(h_rot, expected, atol=1e-15)


def test_rotated_values_at_reference_angle():
    rp = rotate_params(SensorParams(epsilon=2.0, delta=1.0, theta=2 * math.pi / 3))
    assert rp.eps_tilde == pytest.approx(2 * math.sin(2 * math.pi / 3) - 0.5)
    assert rp.delta_tilde == pytest.approx(math.sin(2 * math.pi / 3) + 1.0)


@given(
    epsilon=st.floats(-5, 5),
    delta=st.floats(0, 5),
    theta=st.floats(0, math.pi, exclude_max=True),
)
def test_rotation_preserves_gap(epsilon, delta, theta):
    if math.hypot(epsilon, delta) < 1e-6:
        return
    p = SensorParams(epsilon=epsilon, delta=delta, theta=theta)
    rp = rotate_params(p)
    assert math.hypot(rp.eps_tilde, rp.delta_tilde) == pytest.approx(
        p.rabi_frequency(), rel=1e-12
    )


@given(theta=st.floats(0, math.pi, exclude_max=True))
def test_coupling_operator_unit_eigenvalues(theta):
    s = build_coupling_operator(SensorParams(epsilon=1.0, theta=theta))
    evals = np.linalg.eigvalsh(s)
    assert evals == pytest.approx([-1.0, 1.0], abs=1e-12)

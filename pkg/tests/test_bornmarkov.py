"""Born-Markov generator: closed form vs quadrature, thermal fixed point,
and the fast/slow-reservoir comparison against the hierarchy.

The dissipative decomposition is the part history says to be paranoid about:
the detailed-balance cross term Im(zeta)*Im(kernel) lives in Xi, and dropping
it relaxes everything to T=infinity. test_dissipative_part_carries_detailed_balance
pins that down against the full Fourier transform of the series.
"""

import numpy as np
import pytest

from qtherm.bath import BathSpec, correlation_from_series, matsubara_expand
from qtherm.bornmarkov import BmGenerator, bm_propagate, bm_steady_state, build_bm_generator
from qtherm.errors import DegenerateSteadyState
from qtherm.hierarchy import build_hierarchy, propagate, sigma_z_expectation
from qtherm.model import (
    SensorParams,
    build_coupling_operator,
    build_initial_state,
    build_sensor_hamiltonian,
    hamiltonian_eigensystem,
    spost,
    spre,
)

P_DEFAULT = SensorParams(epsilon=0.5, delta=1.0, theta=3 * np.pi / 8)


def eigenbasis_populations(p, rho):
    _, vecs = hamiltonian_eigensystem(build_sensor_hamiltonian(p))
    rho_eig = vecs.conj().T @ rho @ vecs
    return np.real(np.diag(rho_eig)), rho_eig[0, 1]


def test_uncoupled_generator_is_bare_liouvillian():
    p = P_DEFAULT
    ser = matsubara_expand(BathSpec(chi=0.0, omega_c=0.8, beta=1.0), 4)
    gen = build_bm_generator(p, ser)
    h = build_sensor_hamiltonian(p)
    assert np.array_equal(gen.matrix, -1j * (spre(h) - spost(h)))
    with pytest.raises(DegenerateSteadyState):
        bm_steady_state(gen)


def test_full_kernel_matches_time_quadrature():
    # Upsilon = int_0^T C_R(t) S(-t) dt and Xi = -i int_0^T C_I(t) S(-t) dt,
    # T chosen where |C| has decayed below 1e-12, trapezoid on a fine grid.
    p = SensorParams(epsilon=2.0, delta=1.0, theta=2 * np.pi / 3)
    b = BathSpec(chi=0.3, omega_c=0.8, beta=0.95)
    ser = matsubara_expand(b, 4)
    gen = build_bm_generator(p, ser, lamb_shift=True)

    t_cut = np.log(np.sum(np.abs(ser.zeta)) / 1e-12) / ser.nu.min()
    ts = np.linspace(1e-9, t_cut, 400_001)
    c = correlation_from_series(ser, ts)

    h = build_sensor_hamiltonian(p)
    s = build_coupling_operator(p)
    evals, vecs = np.linalg.eigh(h)
    s_eig = vecs.conj().T @ s @ vecs
    omega = evals[:, None] - evals[None, :]
    phases = np.exp(-1j * omega[None, :, :] * ts[:, None, None])
    s_of_minus_t = s_eig[None, :, :] * phases

    ups_quad = np.trapezoid(c.real[:, None, None] * s_of_minus_t, ts, axis=0)
    xi_quad = -1j * np.trapezoid(c.imag[:, None, None] * s_of_minus_t, ts, axis=0)
    ups_quad = vecs @ ups_quad @ vecs.conj().T
    xi_quad = vecs @ xi_quad @ vecs.conj().T

    print("quadrature residuals:",
          np.abs(gen.upsilon - ups_quad).max(), np.abs(gen.xi - xi_quad).max())
    assert np.abs(gen.upsilon - ups_quad).max() < 1e-6
    assert np.abs(gen.xi - xi_quad).max() < 1e-6


def test_dissipative_part_carries_detailed_balance():
    # With the Lamb shift dropped, Lambda = Upsilon - Xi must reduce to
    # (1/2) gamma(-omega_mn) S_mn where gamma is the full Fourier transform
    # of the series correlation function (independent closed form).
    p = P_DEFAULT
    ser = matsubara_expand(BathSpec(chi=0.2, omega_c=0.5, beta=2.0), 30)
    gen = build_bm_generator(p, ser, lamb_shift=False)

    evals, vecs = np.linalg.eigh(build_sensor_hamiltonian(p))
    s_eig = vecs.conj().T @ build_coupling_operator(p) @ vecs
    omega = evals[:, None] - evals[None, :]

    def gamma(w):
        return 2.0 * np.sum((ser.zeta.real * ser.nu - ser.zeta.imag * w)
                            / (ser.nu ** 2 + w ** 2))

    lam = vecs.conj().T @ (gen.upsilon - gen.xi) @ vecs
    want = 0.5 * np.vectorize(gamma)(-omega) * s_eig
    assert np.abs(lam - want).max() < 1e-12
    # KMS of the series itself: emission/absorption ratio approaches e^{bO}
    Om = p.rabi_frequency()
    assert gamma(Om) > gamma(-Om) > 0


@pytest.mark.parametrize("lamb", [False, True])
def test_operator_symmetries_and_trace(lamb):
    rng = np.random.default_rng(11)
    p = SensorParams(epsilon=1.3, delta=1.0, theta=0.7, alpha=0.4, varphi=1.1)
    gen = build_bm_generator(p, matsubara_expand(BathSpec(chi=0.4, omega_c=2.0, beta=0.6), 8),
                             lamb_shift=lamb)
    assert np.abs(gen.upsilon - gen.upsilon.conj().T).max() < 1e-14
    assert np.abs(gen.xi + gen.xi.conj().T).max() < 1e-14
    # trace row of the superoperator is exactly null
    assert np.abs(np.eye(2).reshape(-1) @ gen.matrix).max() < 1e-12
    for _ in range(20):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        herm = a + a.conj().T
        image = (gen.matrix @ herm.reshape(-1)).reshape(2, 2)
        assert abs(np.trace(image)) < 1e-12
        assert np.abs(image - image.conj().T).max() < 1e-12  # Hermiticity preserved


def test_uncoupled_propagation_is_precession():
    p = SensorParams(epsilon=0.8, delta=1.0, theta=0.3)
    ser = matsubara_expand(BathSpec(chi=0.0, omega_c=1.0, beta=1.0), 2)
    gen = build_bm_generator(p, ser)
    rho0 = build_initial_state(p)
    traj = bm_propagate(gen, rho0, t_end=12.0)
    h = build_sensor_hamiltonian(p)
    evals, vecs = np.linalg.eigh(h)
    for t, rho in zip(traj.times[::40], traj.states[::40]):
        u = vecs @ np.diag(np.exp(-1j * evals * t)) @ vecs.conj().T
        assert np.abs(rho - u @ rho0 @ u.conj().T).max() < 1e-6


def test_fast_reservoir_matches_hierarchy_on_shared_series():
    # omega_c = 30*Delta: both solvers fed the *same* exponential series so
    # the comparison isolates the Born-Markov approximation itself.
    p = P_DEFAULT
    b = BathSpec(chi=0.06, omega_c=30.0, beta=0.25)
    with pytest.warns(UserWarning):
        ser = matsubara_expand(b, 4)
    rho0 = build_initial_state(p)

    traj_bm = bm_propagate(build_bm_generator(p, ser), rho0, t_end=50.0)
    state = build_hierarchy(ser, 5, rho0)
    traj_h = propagate(state, build_sensor_hamiltonian(p),
                       build_coupling_operator(p), ser, t_end=50.0)

    grid = np.linspace(0.0, 50.0, 501)
    zb = np.interp(grid, traj_bm.times, sigma_z_expectation(traj_bm))
    zh = np.interp(grid, traj_h.times, sigma_z_expectation(traj_h))
    gap = np.abs(zb - zh).max()
    print(f"fast-reservoir max |<sz>_HEOM - <sz>_BM| = {gap:.4f}")
    assert gap < 0.05


def test_slow_reservoir_deviates_from_hierarchy():
    p = P_DEFAULT
    ser = matsubara_expand(BathSpec(chi=0.06, omega_c=0.05, beta=0.25), 1)
    rho0 = build_initial_state(p)
    traj_bm = bm_propagate(build_bm_generator(p, ser), rho0, t_end=50.0)
    state = build_hierarchy(ser, 8, rho0)
    traj_h = propagate(state, build_sensor_hamiltonian(p),
                       build_coupling_operator(p), ser, t_end=50.0)
    grid = np.linspace(0.0, 50.0, 501)
    zb = np.interp(grid, traj_bm.times, sigma_z_expectation(traj_bm))
    zh = np.interp(grid, traj_h.times, sigma_z_expectation(traj_h))
    gap = np.abs(zb - zh).max()
    print(f"slow-reservoir max |<sz>_HEOM - <sz>_BM| = {gap:.4f}")
    assert gap > 0.05


def test_steady_state_is_thermal_in_eigenbasis():
    p = P_DEFAULT
    Om = p.rabi_frequency()
    # cold bath: the absorption rate is exponentially small, so the Matsubara
    # tail must be summed deep before the ratio settles (see also the module
    # docstring); the vectorized kernel makes K = 2e4 free.
    ser = matsubara_expand(BathSpec(chi=0.3, omega_c=0.5, beta=5.0), 20_000)
    pops, coh = eigenbasis_populations(p, bm_steady_state(build_bm_generator(p, ser)))
    assert abs(coh) < 1e-12
    assert pops[0] / pops[1] == pytest.approx(np.exp(5.0 * Om), rel=1e-2)

    with pytest.warns(UserWarning):
        ser_hot = matsubara_expand(BathSpec(chi=0.3, omega_c=30.0, beta=0.25), 2_000)
    pops, _ = eigenbasis_populations(p, bm_steady_state(build_bm_generator(p, ser_hot)))
    assert pops[0] / pops[1] == pytest.approx(np.exp(0.25 * Om), rel=2e-3)


def test_steady_ratio_independent_of_coupling():
    p = P_DEFAULT
    ratios = []
    for chi in (0.05, 0.1, 0.3, 0.5):
        ser = matsubara_expand(BathSpec(chi=chi, omega_c=0.5, beta=5.0), 10_000)
        pops, _ = eigenbasis_populations(p, bm_steady_state(build_bm_generator(p, ser)))
        ratios.append(pops[0] / pops[1])
    spread = max(ratios) - min(ratios)
    print("BM steady ratios over chi:", ratios, "spread", spread)
    assert spread < 1e-8


def test_propagation_metadata_reports_positivity():
    p = P_DEFAULT
    ser = matsubara_expand(BathSpec(chi=0.2, omega_c=2.0, beta=1.0), 6)
    traj = bm_propagate(build_bm_generator(p, ser), build_initial_state(p), t_end=5.0)
    md = traj.metadata
    assert md["solver"] == "bornmarkov"
    assert md["lamb_shift"] is False
    assert md["trace_error"] < 1e-12
    assert md["hermiticity_error"] < 1e-10
    # never clipped: the field may legitimately be slightly negative
    assert np.isfinite(md["min_eigenvalue"])
    assert md["min_eigenvalue"] > -0.05


def test_lamb_shift_flag_changes_the_generator():
    p = P_DEFAULT
    ser = matsubara_expand(BathSpec(chi=0.4, omega_c=0.8, beta=0.95), 12)
    bare = build_bm_generator(p, ser, lamb_shift=False)
    full = build_bm_generator(p, ser, lamb_shift=True)
    assert isinstance(bare, BmGenerator) and bare.lamb_shift_included is False
    assert full.lamb_shift_included is True
    assert not np.allclose(bare.matrix, full.matrix)
    # both preserve the trace row regardless
    assert np.abs(np.eye(2).reshape(-1) @ full.matrix).max() < 1e-12

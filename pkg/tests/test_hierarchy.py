"""Tests for the auxiliary-matrix hierarchy solver.

The heavy physics checks (published table rows, figure-level comparisons)
live in test_acceptance.py; here we pin the structure: index bookkeeping,
the right-hand side against hand-written small cases, the analytic limits
(bare Rabi precession, pure dephasing), and the solver invariants.
"""

import numpy as np
import pytest

from qtherm import hierarchy as hi
from qtherm.bath import BathSpec, dephasing_exponent, matsubara_expand
from qtherm.errors import (
    HierarchyTooLarge,
    InvalidDensity,
    NoSteadyState,
    StepInstability,
)
from qtherm.model import (
    SensorParams,
    build_coupling_operator,
    build_initial_state,
    build_sensor_hamiltonian,
    hamiltonian_eigensystem,
)

RHO_EXCITED = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)


def random_hermitian(rng, scale=1.0):
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    return scale * (a + a.conj().T) / 2


class TestIndexing:
    def test_size_examples(self):
        assert hi.hierarchy_size(0, 1) == 2
        assert hi.hierarchy_size(1, 2) == 6

    def test_size_matches_enumeration(self):
        for k, depth in [(0, 1), (1, 2), (2, 3), (3, 5)]:
            assert len(hi.enumerate_indices(k, depth)) == hi.hierarchy_size(k, depth)

    def test_canonical_order(self):
        idx = hi.enumerate_indices(1, 2)
        assert idx[0] == (0, 0)
        tiers = [sum(t) for t in idx]
        assert tiers == sorted(tiers)
        # within a tier: lexicographic
        assert idx == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]

    def test_index_helpers(self):
        nu = hi.HierarchyIndex((1, 0, 2))
        assert nu.tier == 3
        assert nu.raised(1).nu == (1, 1, 2)
        assert nu.lowered(2).nu == (1, 0, 1)
        with pytest.raises(ValueError):
            hi.HierarchyIndex((0, -1))


class TestBuildHierarchy:
    def test_initial_layout(self):
        b = BathSpec(chi=0.1, omega_c=1.0, beta=1.0)
        series = matsubara_expand(b, 1)
        state = hi.build_hierarchy(series, 2, RHO_EXCITED)
        assert len(state.indices) == 6
        assert np.array_equal(state.root, RHO_EXCITED)
        assert np.all(state.data[1:] == 0)
        assert np.array_equal(state.entry((0, 0)), RHO_EXCITED)
        assert np.array_equal(state.entry(hi.HierarchyIndex((1, 0))),
                              np.zeros((2, 2)))

    def test_cap_enforced(self):
        series = matsubara_expand(BathSpec(chi=0.1, omega_c=1.0, beta=1.0), 5)
        with pytest.raises(HierarchyTooLarge):
            hi.build_hierarchy(series, 10, RHO_EXCITED, max_indices=100)

    def test_bad_density_rejected(self):
        series = matsubara_expand(BathSpec(chi=0.1, omega_c=1.0, beta=1.0), 0)
        with pytest.raises(InvalidDensity):
            hi.build_hierarchy(series, 1, 2.0 * RHO_EXCITED)
        skew = np.array([[0.5, 0.1], [0.3, 0.5]], dtype=complex)
        with pytest.raises(InvalidDensity):
            hi.build_hierarchy(series, 1, skew)
        with pytest.raises(ValueError):
            hi.build_hierarchy(series, 0, RHO_EXCITED)


class TestRhs:
    def setup_method(self):
        self.params = SensorParams(epsilon=0.6, delta=1.0, theta=2.0)
        self.h = build_sensor_hamiltonian(self.params)
        self.s = build_coupling_operator(self.params)
        self.bath = BathSpec(chi=0.2, omega_c=0.8, beta=2.0)

    def test_hand_written_two_level_hierarchy(self):
        # k_max=0, L=1: two auxiliaries rho_(0), rho_(1) and closure above
        series = matsubara_expand(self.bath, 0)
        z, nu = series.zeta[0], series.nu[0]
        rng = np.random.default_rng(11)
        state = hi.build_hierarchy(series, 1, RHO_EXCITED)
        state.data[0] = random_hermitian(rng)
        state.data[1] = random_hermitian(rng)
        dot = hi.hierarchy_rhs(state, self.h, self.s, series)
        r0, r1 = state.data[0], state.data[1]
        want0 = -1j * (self.h @ r0 - r0 @ self.h) \
            - 1j * (self.s @ r1 - r1 @ self.s)
        want1 = -1j * (self.h @ r1 - r1 @ self.h) - nu * r1 \
            - 1j * (z * self.s @ r0 - np.conj(z) * r0 @ self.s)
        assert np.max(np.abs(dot.data[0] - want0)) < 1e-14
        assert np.max(np.abs(dot.data[1] - want1)) < 1e-14

    def test_decoupled_root_is_von_neumann(self):
        series = matsubara_expand(BathSpec(chi=0.0, omega_c=1.0, beta=1.0), 0)
        state = hi.build_hierarchy(series, 1, RHO_EXCITED)
        dot = hi.hierarchy_rhs(state, self.h, self.s, series)
        want = -1j * (self.h @ RHO_EXCITED - RHO_EXCITED @ self.h)
        assert np.max(np.abs(dot.root - want)) < 1e-14

    def test_hermiticity_structure_preserved(self):
        # all-Hermitian auxiliaries have all-Hermitian derivatives
        series = matsubara_expand(self.bath, 2)
        state = hi.build_hierarchy(series, 3, RHO_EXCITED)
        rng = np.random.default_rng(5)
        for i in range(len(state.indices)):
            state.data[i] = random_hermitian(rng)
        dot = hi.hierarchy_rhs(state, self.h, self.s, series)
        skew = np.max(np.abs(dot.data - np.conj(np.transpose(dot.data, (0, 2, 1)))))
        assert skew < 1e-13

    def test_root_derivative_traceless(self):
        series = matsubara_expand(self.bath, 1)
        state = hi.build_hierarchy(series, 2, RHO_EXCITED)
        rng = np.random.default_rng(6)
        state.data[:] = rng.standard_normal(state.data.shape) \
            + 1j * rng.standard_normal(state.data.shape)
        dot = hi.hierarchy_rhs(state, self.h, self.s, series)
        assert abs(np.trace(dot.root)) < 1e-13

    def test_truncation_mismatch_rejected(self):
        series2 = matsubara_expand(self.bath, 2)
        series3 = matsubara_expand(self.bath, 3)
        state = hi.build_hierarchy(series2, 2, RHO_EXCITED)
        with pytest.raises(ValueError, match="truncation"):
            hi.hierarchy_rhs(state, self.h, self.s, series3)


class TestPropagate:
    def test_bare_rabi_oscillation(self):
        p = SensorParams(epsilon=0.0, delta=1.0, theta=0.0)
        series = matsubara_expand(BathSpec(chi=0.0, omega_c=1.0, beta=1.0), 0)
        state = hi.build_hierarchy(series, 1, RHO_EXCITED)
        traj = hi.propagate(state, build_sensor_hamiltonian(p),
                            build_coupling_operator(p), series, t_end=10.0)
        sz = hi.sigma_z_expectation(traj)
        assert np.max(np.abs(sz - np.cos(traj.times))) < 5e-6
        assert traj.metadata["trace_error"] < 1e-8
        assert traj.metadata["hermiticity_error"] < 1e-10

    def test_pure_dephasing_oracle_short(self):
        # tunneling off, coupling along z: coherence decays as e^{-Gamma(t)}
        p = SensorParams(epsilon=1.0, delta=0.0, theta=np.pi / 2)
        b = BathSpec(chi=0.05, omega_c=1.0, beta=0.25)
        series = matsubara_expand(b, 4)
        state = hi.build_hierarchy(series, 8, build_initial_state(p))
        traj = hi.propagate(state, build_sensor_hamiltonian(p),
                            build_coupling_operator(p), series, t_end=1.5)
        for t, rho in zip(traj.times[1::40], traj.states[1::40]):
            ref = 0.5 * np.exp(-dephasing_exponent(b, float(t)))
            assert abs(abs(rho[0, 1]) - ref) < 1e-3
        pops = np.real(traj.states[:, 0, 0])
        assert np.max(np.abs(pops - pops[0])) < 1e-8

    def test_positivity_on_converged_run(self):
        p = SensorParams(epsilon=1.0, delta=1.0, theta=1.0)
        b = BathSpec(chi=0.1, omega_c=1.0, beta=1.0)
        series = matsubara_expand(b, 3)
        state = hi.build_hierarchy(series, 5, build_initial_state(p))
        traj = hi.propagate(state, build_sensor_hamiltonian(p),
                            build_coupling_operator(p), series, t_end=8.0)
        for rho in traj.states:
            assert np.linalg.eigvalsh(rho).min() >= -1e-7

    def test_bitwise_determinism(self):
        p = SensorParams(epsilon=0.7, delta=1.0, theta=2.5)
        b = BathSpec(chi=0.15, omega_c=0.9, beta=0.8)
        series = matsubara_expand(b, 2)

        def run():
            state = hi.build_hierarchy(series, 4, build_initial_state(p))
            return hi.propagate(state, build_sensor_hamiltonian(p),
                                build_coupling_operator(p), series, t_end=4.0)

        a, b_ = run(), run()
        assert np.array_equal(a.states, b_.states)
        assert np.array_equal(a.times, b_.times)

    def test_divergent_step_detected(self):
        p = SensorParams(epsilon=1.0, delta=1.0, theta=1.0)
        b = BathSpec(chi=0.3, omega_c=1.0, beta=0.5)
        series = matsubara_expand(b, 2)
        state = hi.build_hierarchy(series, 4, build_initial_state(p))
        with pytest.raises(StepInstability):
            hi.propagate(state, build_sensor_hamiltonian(p),
                         build_coupling_operator(p), series,
                         t_end=50.0, dt=1.0, self_check=False)


class TestSteadyState:
    def test_weak_coupling_approaches_gibbs(self):
        # hot bath: the Matsubara tail is tame and relaxation is quick
        p = SensorParams(epsilon=1.0, delta=1.0, theta=2 * np.pi / 3)
        beta = 0.5
        b = BathSpec(chi=0.05, omega_c=1.0, beta=beta)
        series = matsubara_expand(b, 6)
        state = hi.build_hierarchy(series, 4, build_initial_state(p))
        h = build_sensor_hamiltonian(p)
        rho_ss = hi.steady_state(state, h, build_coupling_operator(p), series,
                                 t_max=4000.0)
        evals, evecs = hamiltonian_eigensystem(h)
        pops = np.real(np.diag(evecs.conj().T @ rho_ss @ evecs))
        gibbs = np.exp(beta * p.rabi_frequency())
        assert pops[0] / pops[1] == pytest.approx(gibbs, rel=0.03)

    def test_unitary_case_never_settles(self):
        p = SensorParams(epsilon=0.0, delta=1.0, theta=0.0)
        series = matsubara_expand(BathSpec(chi=0.0, omega_c=1.0, beta=1.0), 0)
        state = hi.build_hierarchy(series, 1, RHO_EXCITED)
        with pytest.raises(NoSteadyState):
            hi.steady_state(state, build_sensor_hamiltonian(p),
                            build_coupling_operator(p), series, t_max=100.0)

    def test_settle_time_reported(self):
        p = SensorParams(epsilon=1.0, delta=1.0, theta=1.5)
        b = BathSpec(chi=0.2, omega_c=1.0, beta=0.5)
        series = matsubara_expand(b, 3)
        state = hi.build_hierarchy(series, 4, build_initial_state(p))
        rho_ss, t_settle = hi.steady_state(
            state, build_sensor_hamiltonian(p), build_coupling_operator(p),
            series, return_time=True)
        assert t_settle > 0
        assert abs(np.trace(rho_ss) - 1.0) < 1e-8


class TestObservables:
    def test_sigma_z_initial_value_balanced_state(self):
        p = SensorParams(epsilon=1.0, delta=0.5, theta=0.3, alpha=np.pi / 4)
        rho0 = build_initial_state(p)
        traj = hi.Trajectory(times=np.array([0.0]), states=rho0[None, :, :])
        assert abs(hi.sigma_z_expectation(traj)[0]) < 1e-14

    def test_bare_precession_pattern(self):
        # eps=0: H = (delta/2) sigma_x rotates the Bloch vector in the y-z plane
        p = SensorParams(epsilon=0.0, delta=1.0, theta=0.0, alpha=np.pi / 3,
                         varphi=1.1)
        rho0 = build_initial_state(p)
        rz0 = np.real(np.trace(rho0 @ np.diag([1.0, -1.0])))
        sy = np.array([[0, -1j], [1j, 0]])
        ry0 = np.real(np.trace(rho0 @ sy))
        series = matsubara_expand(BathSpec(chi=0.0, omega_c=1.0, beta=1.0), 0)
        state = hi.build_hierarchy(series, 1, rho0)
        traj = hi.propagate(state, build_sensor_hamiltonian(p),
                            build_coupling_operator(p), series, t_end=7.0)
        sz = hi.sigma_z_expectation(traj)
        want = rz0 * np.cos(traj.times) + ry0 * np.sin(traj.times)
        assert np.max(np.abs(sz - want)) < 1e-5

    def test_imaginary_part_guard(self):
        bad = np.array([[[0.5, 0.0], [0.0, 0.5 + 1e-6j]]])
        traj = hi.Trajectory(times=np.array([0.0]), states=bad)
        with pytest.raises(InvalidDensity):
            hi.sigma_z_expectation(traj)


class TestConvergenceSweep:
    def test_decoupled_converges_at_depth_one(self):
        p = SensorParams(epsilon=0.5, delta=1.0, theta=0.8)
        b = BathSpec(chi=0.0, omega_c=1.0, beta=1.0)
        report = hi.convergence_sweep(p, b, build_initial_state(p), t_end=5.0,
                                      depths=[1, 2], k_maxes=[0])
        assert report.converged
        assert report.entries[0]["deviation"] is None
        assert report.entries[1]["deviation"] < 1e-12

    def test_fast_reservoir_converges_shallow(self):
        # hot, fast reservoir at weak coupling: depth 4 already sits on the plateau
        p = SensorParams(epsilon=0.5, delta=1.0, theta=0.0)
        b = BathSpec(chi=0.06, omega_c=10.0, beta=0.06)
        report = hi.convergence_sweep(p, b, build_initial_state(p), t_end=8.0,
                                      depths=[2, 4, 6], k_maxes=[1])
        print("fast-reservoir ladder:", report.entries)
        assert report.converged
        assert report.entries[-1]["deviation"] < 1e-4

    def test_empty_range_rejected(self):
        p = SensorParams(epsilon=0.5, delta=1.0, theta=0.8)
        b = BathSpec(chi=0.1, omega_c=1.0, beta=1.0)
        with pytest.raises(ValueError):
            hi.convergence_sweep(p, b, RHO_EXCITED, 1.0, [], [0])


class TestSuggestKMax:
    def test_decoupled_needs_nothing(self):
        p = SensorParams(epsilon=1.0, delta=1.0, theta=1.0)
        assert hi.suggest_k_max(p, BathSpec(chi=0.0, omega_c=1.0, beta=1.0)) == 0

    def test_colder_needs_more_terms(self):
        p = SensorParams(epsilon=1.0, delta=1.0, theta=1.0)
        hot = hi.suggest_k_max(p, BathSpec(chi=0.1, omega_c=1.0, beta=0.25))
        cold = hi.suggest_k_max(p, BathSpec(chi=0.1, omega_c=1.0, beta=5.0))
        assert hot >= 1
        assert cold > hot

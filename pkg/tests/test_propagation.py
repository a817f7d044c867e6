import numpy as np
import pytest

from adiaphase import phases as ph
from adiaphase.errors import NotCyclic, SectionSingular
from adiaphase.models import constant_model, rotation_model, two_level_pulse
from adiaphase.propagation import build_local_section, evolution_operator, propagate
from adiaphase.spectral import TimeGrid, track_eigensystem

from helpers import pulse, ratios, tracked, trajectory

O1 = ph.O1_WINDOW


def section_angles(section, eig):
    phi, x = eig.phi, section.section
    cos = np.abs(np.einsum("ki,ki->k", phi.conj(), x)) / (
        np.linalg.norm(phi, axis=1) * np.linalg.norm(x, axis=1))
    return np.arccos(np.clip(cos, 0.0, 1.0))


class TestPropagate:
    def test_initial_state_exact(self):
        psi0 = np.array([0.3 + 0.1j, -0.7])
        tr = propagate(pulse(1.0), 50.0, psi0, TimeGrid(200))
        np.testing.assert_array_equal(tr.psi[0], psi0)

    def test_constant_diagonal(self):
        lam = np.array([0.7, -0.2 - 0.3j])
        grid = TimeGrid(200)
        T = 30.0
        tr = propagate(constant_model(np.diag(lam)), T, [1, 0], grid)
        exact = np.exp(-1j * T * lam[0] * grid.points)
        np.testing.assert_allclose(tr.psi[:, 0], exact, atol=1e-9)
        np.testing.assert_allclose(tr.psi[:, 1], 0, atol=1e-15)

    def test_pure_resonance_decay(self):
        grid = TimeGrid(400)
        T = 100.0
        tr = propagate(two_level_pulse(w0=0.0), T, [0, 1], grid)
        np.testing.assert_allclose(tr.log_norms, -T * 0.5 * grid.points, atol=1e-8)

    def test_deep_decay_kept_finite(self):
        # the norm reaches e^-1000, below the smallest double, through the log scale
        tr = propagate(two_level_pulse(w0=0.0), 2000.0, [0, 1], TimeGrid(200))
        assert tr.log_norms[-1] == pytest.approx(-1000.0, rel=1e-9)
        assert np.all(np.isfinite(tr.states))

    @pytest.mark.parametrize("w0", [0.5, 1.0, 4.0])
    def test_norm_monotone(self, w0):
        tr = trajectory(w0, 100.0)
        n = tr.norms
        tol = tr.integrator_tolerance
        assert np.all(n <= n[0] * (1 + 10 * tol))
        assert np.all(np.diff(tr.log_norms) <= 10 * tol)

    def test_tolerance_convergence(self):
        model, grid, psi0 = pulse(1.0), TimeGrid(200), tracked(1.0).phi[0]
        ref = propagate(model, 100.0, psi0, grid, tol=1e-13, atol=1e-14).psi
        errs = [np.max(np.abs(propagate(model, 100.0, psi0, grid, tol=t).psi - ref)) for t in (1e-6, 1e-9)]
        assert errs[1] < errs[0]
        assert errs[1] < 1e-7

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            propagate(pulse(1.0), -1.0, [1, 0], TimeGrid(10))
        with pytest.raises(ValueError):
            propagate(pulse(1.0), 1.0, [1, 0, 0], TimeGrid(10))
        with pytest.raises(ValueError):
            propagate(pulse(1.0), 1.0, [0, 0], TimeGrid(10))

    def test_adiabatic_scaling_w0_05(self):
        """Example as stated: the w0 = 0.5 path crosses exceptional points, see README known failures."""
        eig = tracked(0.5)
        errs = [ph.adiabatic_error(trajectory(0.5, T), eig, "spectral")[-1] for T in (100.0, 200.0)]
        r = errs[1] / errs[0]
        assert O1[0] <= r <= O1[1], f"ratio {r:.3f} outside {O1}"

    def test_adiabatic_scaling_w0_1(self):
        eig = tracked(1.0)
        sups = [np.max(ph.adiabatic_error(trajectory(1.0, T), eig, "spectral")) for T in (200.0, 400.0, 800.0)]
        for r in ratios(sups):
            assert O1[0] <= r <= O1[1]


class TestEvolutionOperator:
    def test_constant_diagonal(self):
        lam = np.array([1.0, -0.5j])
        grid = TimeGrid(100)
        U = evolution_operator(constant_model(np.diag(lam)), 20.0, grid).operators
        for k in (0, 37, 100):
            np.testing.assert_allclose(U[k], np.diag(np.exp(-1j * 20 * lam * grid.points[k])), atol=1e-9)

    def test_refined_grid_consistent(self):
        tol = 1e-10
        coarse = evolution_operator(pulse(1.0), 100.0, TimeGrid(200), tol).operators
        fine = evolution_operator(pulse(1.0), 100.0, TimeGrid(400), tol).operators[::2]
        assert np.max(np.linalg.norm(coarse - fine, axis=(1, 2))) <= 10 * tol * 100

    def test_columns_match_propagate(self):
        U = evolution_operator(pulse(1.0), 100.0, TimeGrid(200)).operators
        psi0 = np.array([0.6, 0.8j])
        psi = propagate(pulse(1.0), 100.0, psi0, TimeGrid(200)).psi
        assert np.max(np.abs(U @ psi0 - psi)) <= 1e-8

    @pytest.mark.parametrize("w0", [0.5, 1.0, 4.0])
    def test_contraction(self, w0):
        ev = evolution_operator(pulse(w0), 200.0, TimeGrid(400))
        assert np.max(np.linalg.norm(ev.operators, ord=2, axis=(1, 2))) <= 1 + 10 * ev.integrator_tolerance

    def test_intertwining_scaling(self):
        eig = tracked(1.0, 500)
        Ps = eig.projectors("spectral")
        sups = []
        for T in (200.0, 400.0, 800.0):
            U = evolution_operator(pulse(1.0), T, TimeGrid(500)).operators
            sups.append(np.max(np.linalg.norm(U @ Ps[0] - Ps @ U, axis=(1, 2))
                               / np.linalg.norm(U, ord=2, axis=(1, 2))))
        for r in ratios(sups):
            assert O1[0] <= r <= O1[1]


class TestLocalSection:
    def test_stationary_constant(self):
        H = np.array([[0.5, 0.2], [0.2, -0.3j]])
        model = constant_model(H)
        eig = track_eigensystem(model, TimeGrid(200), 1, "perturbative")
        T = 40.0
        sec = build_local_section(propagate(model, T, eig.phi[0], TimeGrid(200)), eig)
        np.testing.assert_allclose(sec.section, np.tile(eig.phi[0], (201, 1)), atol=1e-8)
        np.testing.assert_allclose(sec.f, np.exp(1j * T * eig.lam[0] * sec.grid.points), rtol=1e-8)
        assert sec.cyclicity_residual <= 1e-8
        assert sec.mu == pytest.approx(np.exp(-1j * T * eig.lam[0]), rel=1e-8)

    def test_decoupled_bound_state(self):
        eig = tracked(0.0)
        assert abs(eig.phi[0, 1]) < 1e-15
        sec = build_local_section(propagate(pulse(0.0), 300.0, [1, 0], TimeGrid(2000)), eig)
        np.testing.assert_allclose(sec.section, np.tile([1, 0], (2001, 1)), atol=1e-12)
        assert sec.mu == pytest.approx(1.0, abs=1e-12)
        assert sec.f[0] == 1.0

    def test_closure_reported(self):
        sec = build_local_section(trajectory(1.0, 200.0), tracked(1.0))
        assert sec.closure_residual <= sec.cyclicity_residual + 1e-12
        assert 0 < sec.cyclicity_residual < 0.1
        np.testing.assert_array_equal(sec.section[0], trajectory(1.0, 200.0).psi[0])

    def test_section_derivative_matches_differences(self):
        sec = build_local_section(trajectory(1.0, 100.0), tracked(1.0))
        fd = np.gradient(sec.section, sec.grid.h, axis=0, edge_order=2)
        assert np.max(np.abs(fd - sec.section_dot)[5:-5]) <= 1e-2 * np.max(np.abs(sec.section_dot))

    def test_not_cyclic(self):
        model = rotation_model(angle=1.0)
        eig = track_eigensystem(model, TimeGrid(100), 1)
        tr = propagate(model, 10.0, eig.phi[0], TimeGrid(100))
        with pytest.raises(NotCyclic):
            build_local_section(tr, eig)
        assert build_local_section(tr, eig, allow_noncyclic=True).cyclicity_residual > 0

    def test_section_singular(self):
        eig = tracked(0.0)
        # psi stays on the resonance level, orthogonal to the followed bound state
        tr = propagate(pulse(0.0), 10.0, [0, 1], TimeGrid(2000))
        with pytest.raises(SectionSingular) as info:
            build_local_section(tr, eig)
        assert info.value.s == 0.0

    def test_section_angle_w0_05(self):
        """Example as stated: the w0 = 0.5 path crosses exceptional points, see README known failures."""
        eig = tracked(0.5)
        sups = [np.max(section_angles(build_local_section(trajectory(0.5, T), eig), eig)) for T in (400.0, 800.0)]
        r = sups[1] / sups[0]
        assert O1[0] <= r <= O1[1], f"ratio {r:.3f} outside {O1}"

    def test_section_angle_w0_1(self):
        eig = tracked(1.0)
        sups = [np.max(section_angles(build_local_section(trajectory(1.0, T), eig), eig))
                for T in (200.0, 400.0, 800.0)]
        for r in ratios(sups):
            assert O1[0] <= r <= O1[1]

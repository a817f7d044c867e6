"""Shared fixtures-by-cache and independent oracles for the test suite."""

from functools import lru_cache

import numpy as np

from adiaphase import phases as ph
from adiaphase.models import matrix_table_model, rotation_model, two_level_pulse
from adiaphase.propagation import propagate
from adiaphase.spectral import TimeGrid, track_eigensystem

PULSE_DEFAULTS = dict(gamma=1.0, s0=0.5, sigma=0.16)


@lru_cache(maxsize=None)
def pulse(w0: float):
    return two_level_pulse(w0=w0, **PULSE_DEFAULTS)


@lru_cache(maxsize=None)
def tracked(w0: float, n_steps: int = 2000, method: str = "perturbative", level: int = 1):
    return track_eigensystem(pulse(w0), TimeGrid(n_steps), level, derivative_method=method)


@lru_cache(maxsize=None)
def trajectory(w0: float, T: float, start: str = "phi", n_steps: int = 2000, tol: float = 1e-10):
    """Propagated state from ``phi_a(0)`` or from the superadiabatic ``phi_a^(1)(0)``."""
    eig = tracked(w0, n_steps)
    psi0 = eig.phi[0] if start == "phi" else ph.superadiabatic_system(eig, T).phi1[0]
    return propagate(pulse(w0), T, psi0, TimeGrid(n_steps), tol=tol)


@lru_cache(maxsize=None)
def hermitian_pulse():
    """Real symmetric two-level model with a Gaussian coupling (Hermitian control)."""
    from adiaphase.models import GaussianEntry
    return matrix_table_model(2, [GaussianEntry(0, 0, 1.0), GaussianEntry(1, 1, -1.0),
                                  GaussianEntry(0, 1, 0.8, 0.5, 0.02), GaussianEntry(1, 0, 0.8, 0.5, 0.02)])


@lru_cache(maxsize=None)
def hermitian_tracked(n_steps: int = 2000, method: str = "finite_difference"):
    return track_eigensystem(hermitian_pulse(), TimeGrid(n_steps), 1, derivative_method=method)


@lru_cache(maxsize=None)
def rotation_tracked(n_steps: int = 2000):
    return track_eigensystem(rotation_model(), TimeGrid(n_steps), 0)


# -- closed-form oracle for the two-level pulse -----------------------------------

def closed_form(s, w0, gamma=1.0, s0=0.5, sigma=0.16):
    """Eigenvalue of the followed level and the deviation, from the 2x2 characteristic polynomial.

    ``lambda = -i gamma/4 + sqrt(Omega^2 - gamma^2/16)`` (principal root) with
    right vector ``(Omega, lambda)``. The matrix is complex symmetric, so the
    left vector is proportional to its conjugate and
    ``<phi*|dphi> = phi^T dphi / phi^T phi``.
    """
    s = np.asarray(s, dtype=float)
    om = w0 * gamma * np.exp(-(s - s0) ** 2 / (2 * sigma))
    dom = -(s - s0) / sigma * om
    root = np.sqrt((om ** 2 - gamma ** 2 / 16).astype(complex))
    lam = -0.25j * gamma + root
    dlam = om * dom / root
    phi = np.stack([om + 0j, lam], axis=-1)
    dphi = np.stack([dom + 0j, dlam], axis=-1)
    spectral = np.sum(phi * dphi, -1) / np.sum(phi * phi, -1)
    orthogonal = np.sum(phi.conj() * dphi, -1) / np.sum(np.abs(phi) ** 2, -1)
    return lam, spectral - orthogonal, 2 * np.abs(root)


def ratios(values):
    return [b / a for a, b in zip(values, values[1:])]

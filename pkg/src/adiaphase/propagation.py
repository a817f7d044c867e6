"""Finite-T integration of ``(i/T) dpsi/ds = H(s) psi`` (hbar = 1).

The integrator is an embedded Dormand-Prince 5(4) pair. Steps are clipped so
that every analysis-grid point is hit exactly, which gives grid output
without interpolation. Error control is relative to the current norm of the
state (``atol`` acts on the state rescaled to unit norm), so the exponential
decay of dissipative dynamics does not let an absolute floor swamp the
solution. Samples are stored as ``states[k] * exp(log_scale[k])`` with
``states`` kept at order-one magnitude, because ``exp(-T Gamma s / 4)``
underflows squared norms at the larger T values.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotCyclic, SectionSingular, StepUnderflow
from .models import HamiltonianModel, cyclicity_gap
from .spectral import EigenTrajectory, TimeGrid

__all__ = [
    "WavefunctionTrajectory",
    "EvolutionOperator",
    "CyclicSectionData",
    "integrate",
    "propagate",
    "evolution_operator",
    "build_local_section",
    "CYCLIC_RTOL",
]

CYCLIC_RTOL = 1e-6
SECTION_THRESHOLD = 1e-8
MIN_STEP = 1e-14

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass(frozen=True, eq=False)
class WavefunctionTrajectory:
    """``psi(s_k) = states[k] * exp(log_scale[k])``; ``log_scale[0] == 0``."""

    grid: TimeGrid
    states: np.ndarray
    log_scale: np.ndarray
    T: float
    integrator_tolerance: float
    model: HamiltonianModel
    n_steps_taken: int = 0

    @property
    def psi(self) -> np.ndarray:
        return self.states * np.exp(self.log_scale)[:, None]

    @property
    def log_norms(self) -> np.ndarray:
        return np.log(np.linalg.norm(self.states, axis=1)) + self.log_scale

    @property
    def norms(self) -> np.ndarray:
        return np.exp(self.log_norms)


@dataclass(frozen=True, eq=False)
class EvolutionOperator:
    """``U_T(s_k, 0) = matrices[k] * exp(log_scale[k])``."""

    grid: TimeGrid
    matrices: np.ndarray
    log_scale: np.ndarray
    T: float
    integrator_tolerance: float

    @property
    def operators(self) -> np.ndarray:
        return self.matrices * np.exp(self.log_scale)[:, None, None]


@dataclass(frozen=True, eq=False)
class CyclicSectionData:
    """Local section ``section[k] = f[k] * psi(s_k)`` in the ray of the dynamics.

    ``f_rate`` is ``f^-1 df/ds`` and ``section_dot`` the s-derivative of the
    section, both obtained from the Schrodinger equation rather than by
    differencing the oscillating samples. ``log_f`` is stored instead of
    ``f`` itself, which grows like ``exp(T Gamma s / 4)``.
    """

    grid: TimeGrid
    section: np.ndarray
    section_dot: np.ndarray
    log_f: np.ndarray
    f_rate: np.ndarray
    mu: complex
    cyclicity_residual: float
    closure_residual: float
    T: float
    hamiltonians: np.ndarray

    @property
    def f(self) -> np.ndarray:
        return np.exp(self.log_f)


def integrate(model: HamiltonianModel, T: float, y0: np.ndarray, grid: TimeGrid,
              rtol: float = 1e-10, atol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, int]:
    """Integrate ``dy/ds = -i T H(s) y`` for a vector or a matrix ``y0`` (columns).

    Returns ``(samples, log_scale, accepted_steps)`` with
    ``y(s_k) = samples[k] * exp(log_scale[k])``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    y = np.array(y0, dtype=complex)
    matrix = y.ndim == 2
    out = np.empty((len(grid),) + y.shape, dtype=complex)
    out[0] = y
    log_scale = np.zeros(len(grid))
    shift = 0.0
    s_points = grid.points
    scale = -1j * T

    def rhs(s, v):
        return scale * (model(s) @ v)

    def col_norm(v):
        return np.linalg.norm(v, axis=0) if matrix else np.linalg.norm(v)

    H0 = np.linalg.norm(model(0.0))
    step = min(grid.h, 0.05 / (T * H0)) if H0 > 0 else grid.h
    s = 0.0
    k1 = rhs(s, y)
    accepted = 0
    K = [None] * 7
    for k in range(1, len(s_points)):
        target = float(s_points[k])
        while s < target:
            last = target - s <= step * (1 + 1e-12)
            h = target - s if last else step
            K[0] = k1
            for i in range(1, 7):
                incr = sum(a * K[j] for j, a in enumerate(_A[i]) if a != 0.0)
                K[i] = rhs(s + _C[i] * h, y + h * incr)
            y_new = y + h * sum(b * K[j] for j, b in enumerate(_B) if b != 0.0)
            err_vec = h * sum(e * K[j] for j, e in enumerate(_E) if e != 0.0)
            n_old, n_new = col_norm(y), col_norm(y_new)
            tol = atol * n_old + rtol * np.maximum(n_old, n_new)
            tol = np.where(tol > 0, tol, np.finfo(float).tiny)
            err = float(np.max(col_norm(err_vec) / tol))
            if err <= 1.0:
                s = target if last else s + h
                y = y_new
                k1 = K[6]
                accepted += 1
                m = float(np.max(np.abs(y)))
                if 0.0 < m and not 1e-50 < m < 1e50:
                    y = y / m
                    k1 = k1 / m
                    shift += np.log(m)
            factor = 0.9 * err ** -0.2 if err > 0 else 5.0
            new_step = h * min(5.0, max(0.2, factor))
            if err <= 1.0 and last:
                new_step = max(new_step, step)
            step = new_step
            if step < MIN_STEP:
                raise StepUnderflow(
                    f"step size fell below {MIN_STEP:g} at s = {s:.6g}; "
                    "loosen the tolerance or reduce T", s=s)
        out[k] = y
        log_scale[k] = shift
    return out, log_scale, accepted


def propagate(model: HamiltonianModel, T: float, psi0, grid: TimeGrid,
              tol: float = 1e-10, atol: float = 1e-12) -> WavefunctionTrajectory:
    """Solve the Schrodinger equation from ``psi0`` and sample it on ``grid``."""
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (model.dim,):
        raise ValueError(f"psi0 must have shape ({model.dim},)")
    if not np.linalg.norm(psi0) > 0:
        raise ValueError("psi0 must be nonzero")
    states, log_scale, n = integrate(model, T, psi0, grid, tol, atol)
    states[0] = psi0
    return WavefunctionTrajectory(grid, states, log_scale, float(T), tol, model, n)


def evolution_operator(model: HamiltonianModel, T: float, grid: TimeGrid,
                       tol: float = 1e-10, atol: float = 1e-12) -> EvolutionOperator:
    """``U_T(s_k, 0)`` by propagating the identity column by column (all columns at once)."""
    mats, log_scale, _ = integrate(model, T, np.eye(model.dim, dtype=complex), grid, tol, atol)
    return EvolutionOperator(grid, mats, log_scale, float(T), tol)


def build_local_section(traj: WavefunctionTrajectory, eig: EigenTrajectory,
                        allow_noncyclic: bool = False) -> CyclicSectionData:
    """Section ``c0 psi(s) / <phi_a*(s)|psi(s)>`` with ``c0 = <phi_a*(0)|psi(0)>``.

    Raises
    ------
    NotCyclic
        if ``||H(1) - H(0)||`` exceeds ``CYCLIC_RTOL ||H(0)||`` and
        ``allow_noncyclic`` is false.
    SectionSingular
        if the dynamics becomes (numerically) orthogonal to ``phi_a*``.
    """
    if eig.grid.n_steps != traj.grid.n_steps:
        raise ValueError("wavefunction and eigen trajectories use different grids")
    model = traj.model
    gap = cyclicity_gap(model)
    if gap > CYCLIC_RTOL and not allow_noncyclic:
        raise NotCyclic(f"||H(1) - H(0)|| / ||H(0)|| = {gap:.3e} exceeds {CYCLIC_RTOL:g}")
    psi = traj.states
    phi_star = eig.phi_star
    dphi_star = eig.vector_derivatives("left")
    overlap = np.einsum("ki,ki->k", phi_star.conj(), psi)
    bound = SECTION_THRESHOLD * np.linalg.norm(phi_star, axis=1) * np.linalg.norm(psi, axis=1)
    bad = np.abs(overlap) < bound
    if np.any(bad):
        k = int(np.argmax(bad))
        s = float(traj.grid.points[k])
        raise SectionSingular(f"<phi_a*|psi> vanishes at s = {s:.6g}; dynamics left the followed ray", s=s)
    Hs = model.sample(traj.grid.points)
    T = traj.T
    psi_dot = -1j * T * np.einsum("kij,kj->ki", Hs, psi)
    c0 = overlap[0]
    ratio = c0 / overlap
    log_f = np.log(ratio) - traj.log_scale
    log_f[0] = 0.0
    f_rate = -(np.einsum("ki,ki->k", dphi_star.conj(), psi)
               + np.einsum("ki,ki->k", phi_star.conj(), psi_dot)) / overlap
    section = ratio[:, None] * psi
    section[0] = psi[0]
    section_dot = f_rate[:, None] * section - 1j * T * np.einsum("kij,kj->ki", Hs, section)
    # mu = <phi_a*(0)|psi(1)> / c0, kept finite via the stored log scale
    mu_scaled = np.vdot(phi_star[0], psi[-1]) / c0
    mu = complex(mu_scaled * np.exp(traj.log_scale[-1]))
    n0 = np.linalg.norm(psi[0])
    cyc = float(np.linalg.norm(psi[-1] / mu_scaled - psi[0]) / n0)
    closure = float(np.linalg.norm(section[-1] - section[0]) / n0)
    return CyclicSectionData(traj.grid, section, section_dot, log_f, f_rate, mu, cyc, closure, T, Hs)

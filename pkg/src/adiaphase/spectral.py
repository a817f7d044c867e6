"""Continuous biorthogonal eigensystems along a reduced-time grid.

The tracked eigensystem is gauge-smoothed: at every step the right vectors
keep unit norm and are rotated by a phase so that the overlap with the
previous point is real and positive; left vectors receive the matching
factor so that ``<left_a|right_b> = delta_ab`` survives. In the continuum
limit this is the parallel-transport gauge of the orthogonal connection.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContourMisplaced, NearDegenerate, SingularMatrix, SingularResolvent, TrackingLost
from .linalg import eigenvalues, eigensystem, solve_linear
from .models import HamiltonianModel

__all__ = [
    "TimeGrid",
    "EigenTrajectory",
    "Projector",
    "Contour",
    "track_eigensystem",
    "orthogonal_projector",
    "spectral_projector",
    "riesz_projector_contour",
    "contour_around",
    "derivative_eigvec",
    "derivative_projector",
    "product_rule_projector_derivative",
    "grid_derivative",
    "projector_residuals",
]

TRACKING_MIN_OVERLAP = 0.5


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``s_k = k / n_steps``, ``k = 0..n_steps``."""

    n_steps: int = 2000

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")

    @property
    def h(self) -> float:
        return 1.0 / self.n_steps

    @cached_property
    def points(self) -> np.ndarray:
        s = np.arange(self.n_steps + 1) / self.n_steps
        s.setflags(write=False)
        return s

    def __len__(self) -> int:
        return self.n_steps + 1


def grid_derivative(values: np.ndarray, h: float, order: int = 2) -> np.ndarray:
    """Finite-difference derivative along axis 0.

    ``order=2`` is central differences with second-order one-sided ends;
    ``order=4`` uses five-point stencils (one-sided near the ends).
    """
    if order == 2:
        return np.gradient(values, h, axis=0, edge_order=2)
    if order != 4:
        raise ValueError("order must be 2 or 4")
    f = np.asarray(values)
    if len(f) < 5:
        raise ValueError("fourth-order stencil needs at least 5 points")
    d = np.empty_like(f, dtype=np.result_type(f, float))
    d[2:-2] = f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]
    d[0] = -25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]
    d[1] = -3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]
    d[-1] = 25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]
    d[-2] = 3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]
    return d / (12 * h)


@dataclass(frozen=True, eq=False)
class Projector:
    matrix: np.ndarray
    kind: str
    level: int


@dataclass(frozen=True)
class Contour:
    """Circle ``center + radius * exp(i theta)`` with ``n_nodes`` trapezoidal nodes."""

    center: complex
    radius: float
    n_nodes: int = 128

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("contour radius must be positive")
        if self.n_nodes < 3:
            raise ValueError("need at least 3 quadrature nodes")

    @property
    def nodes(self) -> np.ndarray:
        theta = 2 * np.pi * np.arange(self.n_nodes) / self.n_nodes
        return self.center + self.radius * np.exp(1j * theta)


@dataclass(frozen=True, eq=False)
class EigenTrajectory:
    """Gauge-smoothed, index-tracked eigensystems on a grid.

    Arrays are indexed ``[k, b]`` (grid point, level) and ``[k, b, :]`` for
    vectors. ``level`` is the followed index ``a``.
    """

    grid: TimeGrid
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    level: int
    model: HamiltonianModel
    derivative_method: str = "finite_difference"
    min_overlap: float = 1.0

    @property
    def n_levels(self) -> int:
        return self.eigenvalues.shape[1]

    @property
    def lam(self) -> np.ndarray:
        return self.eigenvalues[:, self.level]

    @property
    def phi(self) -> np.ndarray:
        return self.right[:, self.level]

    @property
    def phi_star(self) -> np.ndarray:
        return self.left[:, self.level]

    def with_method(self, method: str) -> "EigenTrajectory":
        return EigenTrajectory(self.grid, self.eigenvalues, self.right, self.left, self.level,
                               self.model, method, self.min_overlap)

    def with_level(self, level: int) -> "EigenTrajectory":
        return EigenTrajectory(self.grid, self.eigenvalues, self.right, self.left, level,
                               self.model, self.derivative_method, self.min_overlap)

    # cached whole-grid arrays; per-point accessors live in the module functions

    def projectors(self, kind: str, level: int | None = None) -> np.ndarray:
        level = self.level if level is None else level
        key = (kind, level)
        cache = self.__dict__.setdefault("_projector_cache", {})
        if key not in cache:
            r, l = self.right[:, level], self.left[:, level]
            if kind == "spectral":
                P = np.einsum("ki,kj->kij", r, l.conj())
            elif kind == "orthogonal":
                norm2 = np.einsum("ki,ki->k", r.conj(), r).real
                P = np.einsum("ki,kj->kij", r, r.conj()) / norm2[:, None, None]
            else:
                raise ValueError(f"unknown projector kind {kind!r}")
            cache[key] = P
        return cache[key]

    def projector_derivatives(self, kind: str, level: int | None = None, order: int = 2) -> np.ndarray:
        level = self.level if level is None else level
        key = ("d" + kind, level, order)
        cache = self.__dict__.setdefault("_projector_cache", {})
        if key not in cache:
            cache[key] = grid_derivative(self.projectors(kind, level), self.grid.h, order)
        return cache[key]

    def vector_derivatives(self, side: str = "right", level: int | None = None,
                           method: str | None = None) -> np.ndarray:
        level = self.level if level is None else level
        method = self.derivative_method if method is None else method
        key = (side, level, method)
        cache = self.__dict__.setdefault("_vector_cache", {})
        if key not in cache:
            if method == "finite_difference":
                vecs = self.right if side == "right" else self.left
                cache[key] = grid_derivative(vecs[:, level], self.grid.h)
            elif method == "perturbative":
                cache[key] = _perturbative_derivatives(self, level, side)
            else:
                raise ValueError(f"unknown derivative method {method!r}")
        return cache[key]


def _perturbative_derivatives(traj: EigenTrajectory, a: int, side: str) -> np.ndarray:
    """``dphi_a/ds`` from ``dH/ds`` via first-order perturbation theory.

    The component along ``phi_a`` is fixed so that ``<phi_a|dphi_a> = 0``,
    which is the continuum limit of the tracking gauge; the left derivative
    then follows from ``d<phi_a*|phi_a>/ds = 0``.
    """
    out = np.empty_like(traj.right[:, a])
    for k, s in enumerate(traj.grid.points):
        dH = traj.model.derivative(float(s))
        lam, R, L = traj.eigenvalues[k], traj.right[k], traj.left[k]
        phi = R[a]
        coeff = np.zeros(traj.n_levels, dtype=complex)
        for b in range(traj.n_levels):
            if b != a:
                coeff[b] = np.vdot(L[b], dH @ phi) / (lam[a] - lam[b])
        kappa = -np.vdot(phi, coeff @ R) / np.vdot(phi, phi)
        if side == "right":
            out[k] = coeff @ R + kappa * phi
        else:
            dHh = dH.conj().T
            coeff_l = np.zeros(traj.n_levels, dtype=complex)
            for b in range(traj.n_levels):
                if b != a:
                    coeff_l[b] = np.vdot(R[b], dHh @ L[a]) / np.conj(lam[a] - lam[b])
            out[k] = coeff_l @ L - np.conj(kappa) * L[a]
    return out


def track_eigensystem(model: HamiltonianModel, grid: TimeGrid, level: int,
                      derivative_method: str = "finite_difference") -> EigenTrajectory:
    """Follow every eigen-branch of ``model`` across ``grid``.

    Branches are matched between neighbouring points by maximal overlap of
    the unit right vectors (optimal assignment). ``level`` indexes the
    canonical (lexicographic) ordering at ``s = 0``.

    Raises
    ------
    TrackingLost
        if a matched overlap drops below 0.5 (grid too coarse).
    NearDegenerate
        propagated from the eigensolver, with ``s`` attached.
    """
    s_points = grid.points
    n = model.dim
    if not 0 <= level < n:
        raise ValueError(f"level {level} out of range for dimension {n}")
    lam = np.empty((len(s_points), n), dtype=complex)
    R = np.empty((len(s_points), n, n), dtype=complex)
    L = np.empty_like(R)
    worst = 1.0
    for k, s in enumerate(s_points):
        try:
            es = eigensystem(model(float(s)))
        except NearDegenerate as exc:
            raise NearDegenerate(f"{exc} at s = {s:.6g}", s=float(s)) from exc
        w, right, left = es.eigenvalues, es.right, es.left
        if k > 0:
            overlap = np.abs(R[k - 1].conj() @ right.T)
            rows, cols = linear_sum_assignment(-overlap)
            matched = overlap[rows, cols]
            if matched.min() < TRACKING_MIN_OVERLAP:
                raise TrackingLost(
                    f"best overlap {matched.min():.3f} between s = {s_points[k - 1]:.6g} and "
                    f"s = {s:.6g}; refine the grid", s=float(s))
            worst = min(worst, float(matched.min()))
            w, right, left = w[cols], right[cols], left[cols]
            z = np.einsum("bi,bi->b", R[k - 1].conj(), right)
            g = (np.conj(z) / np.abs(z))[:, None]
            right = right * g
            left = left * g
        lam[k], R[k], L[k] = w, right, left
    return EigenTrajectory(grid, lam, R, L, level, model, derivative_method, worst)


def _check_level(traj: EigenTrajectory, level: int | None) -> int:
    return traj.level if level is None else level


def orthogonal_projector(traj: EigenTrajectory, k: int, level: int | None = None) -> Projector:
    """``|phi_a><phi_a| / <phi_a|phi_a>`` at grid index ``k``."""
    level = _check_level(traj, level)
    return Projector(traj.projectors("orthogonal", level)[k].copy(), "orthogonal", level)


def spectral_projector(traj: EigenTrajectory, k: int, level: int | None = None) -> Projector:
    """Riesz projector ``|phi_a><phi_a*|`` at grid index ``k``."""
    level = _check_level(traj, level)
    return Projector(traj.projectors("spectral", level)[k].copy(), "spectral", level)


def contour_around(H: np.ndarray, eigenvalue: complex, n_nodes: int = 128,
                   fraction: float = 0.5) -> Contour:
    """Circle about ``eigenvalue`` with radius ``fraction`` times the distance to its nearest neighbour."""
    w = eigenvalues(H)
    d = np.abs(w - eigenvalue)
    others = np.sort(d)[1:]
    radius = fraction * float(others[0]) if len(others) else 1.0
    return Contour(complex(eigenvalue), radius, n_nodes)


def riesz_projector_contour(model: HamiltonianModel, s: float, contour: Contour) -> Projector:
    """Trapezoidal quadrature of ``(1 / 2 pi i) oint (z - H)^-1 dz`` counter-clockwise.

    Raises
    ------
    ContourMisplaced
        unless exactly one eigenvalue lies inside the circle.
    SingularResolvent
        if a quadrature node is numerically on the spectrum.
    """
    H = model(float(s))
    n = H.shape[0]
    w = eigenvalues(H)
    margin = np.abs(np.abs(w - contour.center) - contour.radius).min()
    if margin <= 1e-8 * contour.radius:
        raise SingularResolvent("an eigenvalue lies on the contour", s=float(s))
    inside = np.abs(w - contour.center) < contour.radius
    if int(inside.sum()) != 1:
        raise ContourMisplaced(f"contour encloses {int(inside.sum())} eigenvalues", s=float(s))
    nodes = contour.nodes
    eye = np.eye(n, dtype=complex)
    P = np.zeros((n, n), dtype=complex)
    for z in nodes:
        try:
            Rz = solve_linear(z * eye - H, eye)
        except SingularMatrix as exc:
            raise SingularResolvent(f"resolvent singular at node {z}", s=float(s)) from exc
        P += (z - contour.center) * Rz
    P /= contour.n_nodes
    level = int(np.argmax(inside))
    return Projector(P, "spectral", level)


def derivative_eigvec(traj: EigenTrajectory, k: int, level: int | None = None,
                      side: str = "right", method: str | None = None) -> np.ndarray:
    """``d phi_a / ds`` (or ``d phi_a* / ds`` with ``side='left'``) at grid index ``k``.

    ``method`` defaults to the trajectory's ``derivative_method``.
    """
    return traj.vector_derivatives(side, level, method)[k].copy()


def derivative_projector(traj: EigenTrajectory, k: int, kind: str,
                         level: int | None = None) -> np.ndarray:
    """Central difference of the projector sequence at ``k`` (gauge independent)."""
    return traj.projector_derivatives(kind, level)[k].copy()


def product_rule_projector_derivative(phi, dphi, kind: str, phi_star=None, dphi_star=None) -> np.ndarray:
    """Assemble ``dP/ds`` from vectors and their derivatives (oracle for finite differences)."""
    phi, dphi = np.asarray(phi), np.asarray(dphi)
    if kind == "spectral":
        return np.outer(dphi, np.conj(phi_star)) + np.outer(phi, np.conj(dphi_star))
    if kind == "orthogonal":
        n2 = np.vdot(phi, phi).real
        dn2 = 2 * np.vdot(phi, dphi).real
        return (np.outer(dphi, phi.conj()) + np.outer(phi, dphi.conj())) / n2 \
            - np.outer(phi, phi.conj()) * dn2 / n2 ** 2
    raise ValueError(f"unknown projector kind {kind!r}")


def projector_residuals(traj: EigenTrajectory, level: int | None = None) -> dict[str, float]:
    """Sup over the grid of the projector-algebra residuals (Frobenius norms).

    Keys: ``idempotent_spectral``, ``idempotent_orthogonal``,
    ``spectral_orthogonal`` (``P_s P_o - P_o``), ``orthogonal_spectral``
    (``P_o P_s - P_s``), ``hermitian_orthogonal``, ``sandwich_derivative``
    (``P_s dP_s P_s``, an O(h^2) finite-difference quantity) and
    ``sandwich_budget``, a third-difference estimate of its truncation error.
    """
    level = _check_level(traj, level)
    Ps, Po = traj.projectors("spectral", level), traj.projectors("orthogonal", level)
    dPs = traj.projector_derivatives("spectral", level)

    def sup(x):
        return float(np.max(np.linalg.norm(x, axis=(1, 2))))

    h = traj.grid.h
    third = grid_derivative(grid_derivative(dPs, h), h)
    budget = h * h / 6.0 * sup(third) * float(np.max(np.linalg.norm(Ps, axis=(1, 2)))) ** 2
    return {
        "idempotent_spectral": sup(Ps @ Ps - Ps),
        "idempotent_orthogonal": sup(Po @ Po - Po),
        "spectral_orthogonal": sup(Ps @ Po - Po),
        "orthogonal_spectral": sup(Po @ Ps - Ps),
        "hermitian_orthogonal": sup(Po - np.conj(np.transpose(Po, (0, 2, 1)))),
        "sandwich_derivative": sup(Ps @ dPs @ Ps),
        "sandwich_budget": budget,
    }

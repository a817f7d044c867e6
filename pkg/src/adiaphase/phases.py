r"""Connections, dynamical generators and accumulated phase factors.

Notation used throughout (``a`` is the followed level, hbar = 1):

* spectral connection   ``A_s = <phi_a*|dphi_a>``
* orthogonal connection ``A_o = <phi_a|dphi_a> / <phi_a|phi_a>``
* chi connection        ``A_chi = <chi|dphi_a> / <chi|phi_a>``
* deviation             ``A_s - A_o``
* effective eigenvalue  ``lambda_eff = lambda_a + (i/T) <phi_a|dP_s|phi_a> / <phi_a|phi_a>``

The combination ``i T lambda + A`` is the same whichever projection is used,
provided the dynamical generator is corrected accordingly; the functions
below compute each side independently so that this can be checked.

Functions taking a grid index ``k`` return the value at that point; with
``k=None`` they return the whole-grid array.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CrossCheckFailed, SectionSingular
from .propagation import CyclicSectionData, WavefunctionTrajectory
from .spectral import EigenTrajectory, TimeGrid, grid_derivative

__all__ = [
    "PhaseDecomposition",
    "SuperadiabaticSystem",
    "ChiFamily",
    "cumulative_integral",
    "connection_spectral",
    "connection_orthogonal",
    "deviation",
    "deviation_terms",
    "deviation_budget",
    "projected_spectral_rate",
    "effective_eigenvalue",
    "compensation_residual",
    "adiabatic_logs",
    "adiabatic_wavefunctions",
    "adiabatic_error",
    "adiabatic_phase_decomposition",
    "chi_family",
    "random_chi_family",
    "connection_chi",
    "chi_identity_terms",
    "wave_operator_check",
    "superadiabatic_system",
    "superadiabatic_orders",
    "aa_connection",
    "aa_generator",
    "aa_phase_decomposition",
    "reconstruction_error",
    "norm_law_residual",
    "chi_generator_invariance",
    "spectral_dissipation",
    "orthogonal_norm_neutrality",
    "ratio_verdict",
    "O1_WINDOW",
    "O2_WINDOW",
]

SINGULAR_THRESHOLD = 1e-8
O1_WINDOW = (0.3, 0.7)
O2_WINDOW = (0.15, 0.35)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise ``<a_k|b_k>``."""
    return np.einsum("ki,ki->k", a.conj(), b)


def _sandwich(a: np.ndarray, M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise ``<a_k|M_k|b_k>``."""
    return np.einsum("ki,kij,kj->k", a.conj(), M, b)


def _pick(values, k):
    return values if k is None else values[k]


def cumulative_integral(values: np.ndarray, h: float) -> np.ndarray:
    """Cumulative trapezoidal integral from ``s = 0`` with the Euler-Maclaurin end correction.

    ``I_k = trap_k - h^2/12 (f'(s_k) - f'(0))``, with ``f'`` from central
    differences, which lifts the trapezoid rule to fourth order. The
    correction matters for the ``T``-amplified dynamical phase, where a plain
    trapezoid error ``T h^2`` would outgrow the adiabatic corrections.
    """
    values = np.asarray(values)
    out = np.zeros_like(values, dtype=np.result_type(values, float))
    out[1:] = np.cumsum(0.5 * h * (values[1:] + values[:-1]), axis=0)
    d = grid_derivative(values, h)
    return out - h * h / 12.0 * (d - d[0])


# -- adiabatic connections -------------------------------------------------

def connection_spectral(eig: EigenTrajectory, k: int | None = None):
    """``<phi_a*|dphi_a/ds>``."""
    return _pick(_dot(eig.phi_star, eig.vector_derivatives("right")), k)


def connection_orthogonal(eig: EigenTrajectory, k: int | None = None):
    """``<phi_a|dphi_a/ds> / <phi_a|phi_a>``."""
    phi = eig.phi
    return _pick(_dot(phi, eig.vector_derivatives("right")) / _dot(phi, phi).real, k)


def deviation_terms(eig: EigenTrajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The three expressions for the deviation on the whole grid.

    Returns ``(A_s - A_o, <phi*|dP_o|phi>, -<phi|dP_s|phi>/<phi|phi>)`` where
    the projector derivatives are finite differences of the projector
    sequences (independent of the vector derivatives).
    """
    phi, phi_star = eig.phi, eig.phi_star
    d1 = connection_spectral(eig) - connection_orthogonal(eig)
    d2 = _sandwich(phi_star, eig.projector_derivatives("orthogonal"), phi)
    d3 = -_sandwich(phi, eig.projector_derivatives("spectral"), phi) / _dot(phi, phi).real
    return d1, d2, d3


def deviation_budget(eig: EigenTrajectory) -> np.ndarray:
    """Per-point estimate of the leading finite-difference error ``h^2/6 |f'''|`` of the three terms."""
    h = eig.grid.h

    def third(x):
        d = grid_derivative(x, h)
        d = grid_derivative(grid_derivative(d, h), h)
        return np.linalg.norm(d.reshape(len(d), -1), axis=1)

    n_star = np.linalg.norm(eig.phi_star, axis=1)
    n_phi = np.linalg.norm(eig.phi, axis=1)
    t = (third(eig.phi) * (1 + n_star)
         + third(eig.projectors("orthogonal")) * n_star * n_phi
         + third(eig.projectors("spectral")) * n_phi)
    return h * h / 6.0 * t + 1e-10 * (1 + n_star)


def deviation(eig: EigenTrajectory, k: int | None = None, check: bool = True):
    """``<phi_a*|dphi_a> - <phi_a|dphi_a>/<phi_a|phi_a>``.

    With ``check`` the two projector-based expressions are evaluated as well
    and :class:`CrossCheckFailed` is raised where any pair differs by more
    than ten times :func:`deviation_budget`.
    """
    d1, d2, d3 = deviation_terms(eig)
    if check:
        budget = 10 * deviation_budget(eig)
        spread = np.maximum.reduce([np.abs(d1 - d2), np.abs(d1 - d3), np.abs(d2 - d3)])
        idx = np.arange(len(d1)) if k is None else np.array([k])
        bad = idx[spread[idx] > budget[idx]]
        if bad.size:
            j = int(bad[0])
            s = float(eig.grid.points[j])
            raise CrossCheckFailed(
                f"deviation expressions disagree by {spread[j]:.3e} (budget {budget[j]:.3e}) "
                f"at s = {s:.6g}", s=s)
    return _pick(d1, k)


def projected_spectral_rate(eig: EigenTrajectory, k: int | None = None,
                            method: str = "product_rule"):
    """``<phi_a|dP_s|phi_a> / <phi_a|phi_a>``.

    ``product_rule`` expands ``dP_s = |dphi><phi*| + |phi><dphi*|`` and uses
    ``<dphi*|phi> = -<phi*|dphi>`` (differentiated biorthonormality), so it
    shares its primitives with the two connections. ``finite_difference``
    differentiates the projector sequence instead.
    """
    phi = eig.phi
    n2 = _dot(phi, phi).real
    if method == "product_rule":
        dphi = eig.vector_derivatives("right")
        val = _dot(phi, dphi) / n2 - _dot(eig.phi_star, dphi)
    elif method == "finite_difference":
        val = _sandwich(phi, eig.projector_derivatives("spectral"), phi) / n2
    else:
        raise ValueError(f"unknown method {method!r}")
    return _pick(val, k)


def effective_eigenvalue(eig: EigenTrajectory, T: float, k: int | None = None,
                         method: str = "product_rule"):
    """``lambda_a + (i/T) <phi_a|dP_s|phi_a> / <phi_a|phi_a>``."""
    return _pick(eig.lam + 1j / T * projected_spectral_rate(eig, None, method), k)


def compensation_residual(eig: EigenTrajectory, T: float, lam_eff: np.ndarray | None = None):
    """``|(i T lambda_a + A_s) - (i T lambda_eff + A_o)|`` per grid point, and the bound ``1e-12 (|T lambda_a| + 1)``."""
    lam_eff = effective_eigenvalue(eig, T) if lam_eff is None else lam_eff
    lhs = 1j * T * eig.lam + connection_spectral(eig)
    rhs = 1j * T * lam_eff + connection_orthogonal(eig)
    return np.abs(lhs - rhs), 1e-12 * (np.abs(T * eig.lam) + 1.0)


# -- adiabatic wavefunctions --------------------------------------------------

def adiabatic_logs(eig: EigenTrajectory, T: float, effective: bool = False):
    """Log-coefficients ``(log_s, log_o)`` with ``psi_x(s) = exp(log_x(s)) phi_a(s)``.

    ``log_s = -i T int lambda_a - int A_s`` and
    ``log_o = -i T int lambda - int A_o`` where ``lambda`` is ``lambda_a``, or
    ``lambda_eff`` when ``effective`` is set.
    """
    h = eig.grid.h
    lam_o = effective_eigenvalue(eig, T) if effective else eig.lam
    dyn_s = -1j * T * cumulative_integral(eig.lam, h)
    dyn_o = dyn_s if not effective else -1j * T * cumulative_integral(lam_o, h)
    log_s = dyn_s - cumulative_integral(connection_spectral(eig), h)
    log_o = dyn_o - cumulative_integral(connection_orthogonal(eig), h)
    return log_s, log_o


def adiabatic_wavefunctions(eig: EigenTrajectory, T: float, k: int | None = None,
                            effective: bool = False):
    """``(psi_s, psi_o)``: the level-``a`` eigenvector dressed with the two phase factors."""
    log_s, log_o = adiabatic_logs(eig, T, effective)
    psi_s = np.exp(log_s)[:, None] * eig.phi
    psi_o = np.exp(log_o)[:, None] * eig.phi
    return _pick(psi_s, k), _pick(psi_o, k)


def adiabatic_error(traj: WavefunctionTrajectory, eig: EigenTrajectory,
                    which: str = "spectral", k: int | None = None):
    """``||psi(s) - psi_x(s)|| / ||psi_x(s)||`` with ``x`` in ``spectral``, ``orthogonal``, ``orthogonal_eff``.

    Evaluated scale-free from the log representations, so it stays finite at
    large ``T``. The initial state is taken from ``traj``; the adiabatic
    wavefunctions are scaled by ``<phi_a*(0)|psi(0)>``.
    """
    log_s, log_o = adiabatic_logs(eig, traj.T, effective=(which == "orthogonal_eff"))
    log_x = log_s if which == "spectral" else log_o
    if which not in ("spectral", "orthogonal", "orthogonal_eff"):
        raise ValueError(f"unknown adiabatic wavefunction {which!r}")
    c0 = np.vdot(eig.phi_star[0], traj.states[0])
    # psi / psi_x-coefficient, both carried in log form
    rel = np.exp(traj.log_scale - log_x)[:, None] * traj.states / c0
    err = np.linalg.norm(rel - eig.phi, axis=1) / np.linalg.norm(eig.phi, axis=1)
    return _pick(err, k)


# -- phase decompositions -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseDecomposition:
    """Accumulated geometric and dynamical log-factors on a grid.

    ``reference`` is the vector path the factors multiply (``phi_a`` for the
    adiabatic conventions, the local section for ``nonadiabatic_AA``).
    """

    convention: str
    geometric_log: np.ndarray
    dynamical_log: np.ndarray
    grid: TimeGrid
    T: float
    reference: np.ndarray

    @property
    def total_log(self) -> np.ndarray:
        return self.geometric_log + self.dynamical_log

    def norm_bookkeeping_residual(self) -> np.ndarray:
        """``Re(geometric_log) + 1/2 ln(<ref(s)|ref(s)> / <ref(0)|ref(0)>)``; vanishes for orthogonal and AA."""
        n2 = _dot(self.reference, self.reference).real
        return self.geometric_log.real + 0.5 * np.log(n2 / n2[0])


# -- chi projections ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChiFamily:
    """Path ``chi(s_k)`` and projectors ``|phi_a><chi| / <chi|phi_a>``.

    ``mask`` is True where ``|<chi|phi_a>|`` falls below ``1e-8 |chi||phi_a|``;
    those points carry no projector (NaN) and are excluded from comparisons.
    """

    chi: np.ndarray
    P_chi: np.ndarray
    mask: np.ndarray

    @property
    def chi_dot(self) -> np.ndarray:
        return self.__dict__.setdefault("_chi_dot", grid_derivative(self.chi, 1.0 / (len(self.chi) - 1)))

    @property
    def P_chi_dot(self) -> np.ndarray:
        return self.__dict__.setdefault("_P_dot", grid_derivative(self.P_chi, 1.0 / (len(self.chi) - 1)))


def chi_family(eig: EigenTrajectory, chi) -> ChiFamily:
    """Build a :class:`ChiFamily` from a fixed vector or an ``(n_points, dim)`` path."""
    chi = np.asarray(chi, dtype=complex)
    if chi.ndim == 1:
        chi = np.broadcast_to(chi, eig.phi.shape).copy()
    if chi.shape != eig.phi.shape:
        raise ValueError(f"chi path must have shape {eig.phi.shape}")
    overlap = _dot(chi, eig.phi)
    mask = np.abs(overlap) < SINGULAR_THRESHOLD * np.linalg.norm(chi, axis=1) * np.linalg.norm(eig.phi, axis=1)
    P = np.einsum("ki,kj->kij", eig.phi, chi.conj()) / np.where(mask, 1.0, overlap)[:, None, None]
    P[mask] = np.nan
    return ChiFamily(chi, P, mask)


def random_chi_family(eig: EigenTrajectory, seed: int, degree: int = 2,
                      amplitude: float = 0.3, min_overlap: float = 0.2) -> ChiFamily:
    """Seeded ``chi(s) = v0 + amplitude * sum_p v_p s^p`` with complex Gaussian ``v_p``.

    Draws are repeated (deterministically) until ``|<chi|phi_a>| >= min_overlap |chi|``
    on the whole grid, which keeps the path away from near-orthogonality.
    """
    rng = np.random.default_rng(seed)
    s = eig.grid.points
    dim = eig.phi.shape[1]
    for _ in range(1000):
        v = rng.normal(size=(degree + 1, dim)) + 1j * rng.normal(size=(degree + 1, dim))
        chi = v[0] + amplitude * sum(np.outer(s ** p, v[p]) for p in range(1, degree + 1))
        ov = np.abs(_dot(chi, eig.phi)) / (np.linalg.norm(chi, axis=1) * np.linalg.norm(eig.phi, axis=1))
        if ov.min() >= min_overlap:
            return chi_family(eig, chi)
    raise SectionSingular("could not draw a chi path with adequate overlap")


def _require_unmasked(mask: np.ndarray, k: int | None, grid: TimeGrid, what: str):
    if k is not None and mask[k]:
        s = float(grid.points[k])
        raise SectionSingular(f"{what} is numerically zero at s = {s:.6g}", s=s)


def connection_chi(eig: EigenTrajectory, family: ChiFamily, k: int | None = None):
    """``<chi|dphi_a> / <chi|phi_a>``; a masked array when ``k`` is None."""
    _require_unmasked(family.mask, k, eig.grid, "<chi|phi_a>")
    num = _dot(family.chi, eig.vector_derivatives("right"))
    den = _dot(family.chi, eig.phi)
    val = np.ma.masked_array(num / np.where(family.mask, 1.0, den), mask=family.mask)
    return val if k is None else complex(val[k])


def chi_identity_terms(eig: EigenTrajectory, family: ChiFamily):
    """``(A_s - A_chi, <phi*|dP_chi|phi>, -<chi|dP_s|phi>/<chi|phi>)`` as masked arrays."""
    phi, phi_star, chi = eig.phi, eig.phi_star, family.chi
    t1 = connection_spectral(eig) - connection_chi(eig, family)
    t2 = np.ma.masked_array(_sandwich(phi_star, np.nan_to_num(family.P_chi_dot), phi), mask=family.mask)
    den = np.where(family.mask, 1.0, _dot(chi, phi))
    t3 = np.ma.masked_array(-_sandwich(chi, eig.projector_derivatives("spectral"), phi) / den,
                            mask=family.mask)
    return t1, t2, t3


def wave_operator_check(eig: EigenTrajectory, family: ChiFamily, k: int | None = None):
    """Residual of ``<phi*|Omega^-1 dOmega|phi> = <phi*|dP_chi|phi>`` with ``Omega = P_chi``, ``Omega^-1 = P_s``.

    Also folds in ``|| Omega^-1 Omega - P_chi ||`` and ``|| P_chi P_s - P_s ||``.
    """
    _require_unmasked(family.mask, k, eig.grid, "<chi|phi_a>")
    Ps = eig.projectors("spectral")
    P, dP = np.nan_to_num(family.P_chi), np.nan_to_num(family.P_chi_dot)
    phi, phi_star = eig.phi, eig.phi_star
    lhs = _sandwich(phi_star, Ps @ dP, phi)
    rhs = _sandwich(phi_star, dP, phi)
    inverse_left = np.linalg.norm(Ps @ P - P, axis=(1, 2))
    inverse_form = np.linalg.norm(P @ Ps - Ps, axis=(1, 2))
    res = np.maximum.reduce([np.abs(lhs - rhs), inverse_left, inverse_form])
    res = np.ma.masked_array(res, mask=family.mask)
    return res if k is None else float(res[k])


def adiabatic_phase_decomposition(eig: EigenTrajectory, T: float, convention: str,
                                  family: ChiFamily | None = None) -> PhaseDecomposition:
    """Geometric/dynamical split of the adiabatic factor under ``convention``.

    ``spectral`` pairs ``A_s`` with ``lambda_a``; ``orthogonal`` pairs ``A_o``
    with ``lambda_eff``; ``chi`` pairs ``A_chi`` with
    ``lambda_a - (i/T)(A_s - A_chi)``. All three give the same total.
    """
    h = eig.grid.h
    A_s = connection_spectral(eig)
    if convention == "spectral":
        A, lam = A_s, eig.lam
    elif convention == "orthogonal":
        A, lam = connection_orthogonal(eig), effective_eigenvalue(eig, T)
    elif convention == "chi":
        if family is None:
            raise ValueError("chi convention needs a ChiFamily")
        A = np.ma.filled(connection_chi(eig, family), np.nan)
        lam = eig.lam - 1j / T * (A_s - A)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    geo = -cumulative_integral(A, h)
    dyn = -1j * T * cumulative_integral(lam, h)
    return PhaseDecomposition(convention, geo, dyn, eig.grid, float(T), eig.phi.copy())


# -- superadiabatic renormalization -------------------------------------------

@dataclass(frozen=True, eq=False)
class SuperadiabaticSystem:
    """First superadiabatic step at duration ``T`` for the followed level.

    The four ``*_shift``/``*_gap`` arrays are the expectation values whose
    orders in ``1/T`` are checked by :func:`superadiabatic_orders`.
    """

    T: float
    H1: np.ndarray
    phi1: np.ndarray
    phi1_star: np.ndarray
    lambda_eff: np.ndarray
    eigen_residual: np.ndarray
    spectral_connection_shift: np.ndarray
    orthogonal_connection_shift: np.ndarray
    biorthogonal_energy_gap: np.ndarray
    normalized_energy_gap: np.ndarray


def superadiabatic_system(eig: EigenTrajectory, T: float) -> SuperadiabaticSystem:
    """Assemble ``H_T^(1) = H - (i/T)(dP_s P_s + sum_b dQ_b Q_b)`` and its perturbative eigenvectors."""
    a, n = eig.level, eig.n_levels
    h = eig.grid.h
    Hs = eig.model.sample(eig.grid.points)
    lam, R, L = eig.eigenvalues, eig.right, eig.left
    corr = np.zeros_like(Hs)
    for b in range(n):
        corr += eig.projector_derivatives("spectral", b) @ eig.projectors("spectral", b)
    H1 = Hs - 1j / T * corr
    dPs = eig.projector_derivatives("spectral")
    dPs_h = np.conj(np.transpose(dPs, (0, 2, 1)))
    phi, phi_star = R[:, a], L[:, a]
    phi1 = phi.astype(complex).copy()
    phi1_star = phi_star.astype(complex).copy()
    for b in range(n):
        if b == a:
            continue
        c = _sandwich(L[:, b], dPs, phi) / (lam[:, a] - lam[:, b])
        phi1 -= 1j / T * c[:, None] * R[:, b]
        c_star = _sandwich(R[:, b], dPs_h, phi_star) / np.conj(lam[:, a] - lam[:, b])
        phi1_star -= 1j / T * c_star[:, None] * L[:, b]
    lam_eff = effective_eigenvalue(eig, T)
    residual = np.linalg.norm(np.einsum("kij,kj->ki", H1, phi1) - lam[:, a, None] * phi1, axis=1)
    dphi1 = grid_derivative(phi1, h)
    spectral_shift = _dot(phi1_star, dphi1) - connection_spectral(eig)
    orthogonal_shift = _dot(phi1, dphi1) / _dot(phi1, phi1).real - connection_orthogonal(eig)
    Hphi1 = np.einsum("kij,kj->ki", Hs, phi1)
    bi_gap = _dot(phi1_star, Hphi1) - lam[:, a]
    norm_gap = _dot(phi1, Hphi1) / _dot(phi1, phi1).real - lam_eff
    return SuperadiabaticSystem(float(T), H1, phi1, phi1_star, lam_eff, residual,
                                spectral_shift, orthogonal_shift, bi_gap, norm_gap)


def ratio_verdict(small: float, large: float, window: tuple[float, float]) -> dict:
    """Ratio ``value(2T) / value(T)`` with a pass flag for ``window``."""
    ratio = large / small if small != 0 else float("inf")
    return {"ratio": float(ratio), "window": list(window), "pass": bool(window[0] <= ratio <= window[1])}


def superadiabatic_orders(eig: EigenTrajectory, T: float) -> dict:
    """T -> 2T ratios of the sup-norms of the four superadiabatic quantities (and the eigen-residual)."""
    one, two = superadiabatic_system(eig, T), superadiabatic_system(eig, 2 * T)
    out = {}
    for name, window in (("spectral_connection_shift", O1_WINDOW),
                         ("orthogonal_connection_shift", O1_WINDOW),
                         ("biorthogonal_energy_gap", O2_WINDOW),
                         ("normalized_energy_gap", O2_WINDOW),
                         ("eigen_residual", O2_WINDOW)):
        v1 = float(np.max(np.abs(getattr(one, name))))
        v2 = float(np.max(np.abs(getattr(two, name))))
        out[name] = {"T": float(T), "value_T": v1, "value_2T": v2, **ratio_verdict(v1, v2, window)}
    return out


# -- nonadiabatic decomposition ----------------------------------------------

def aa_connection(section: CyclicSectionData, k: int | None = None):
    """``<sec|dsec> / <sec|sec>``, the generator of the nonadiabatic geometric factor."""
    sec = section.section
    return _pick(_dot(sec, section.section_dot) / _dot(sec, sec).real, k)


def _aa_energy(section: CyclicSectionData) -> np.ndarray:
    sec = section.section
    return _sandwich(sec, section.hamiltonians, sec) / _dot(sec, sec).real


def aa_generator(section: CyclicSectionData, k: int | None = None):
    """``i T <sec|H|sec>/<sec|sec> + <sec|dsec>/<sec|sec>`` (equals ``f^-1 df/ds``)."""
    return _pick(1j * section.T * _aa_energy(section) + aa_connection(section), k)


def aa_phase_decomposition(section: CyclicSectionData) -> PhaseDecomposition:
    """Exact split ``psi(s) = exp(dynamical_log + geometric_log) section(s)``."""
    h = section.grid.h
    geo = -cumulative_integral(aa_connection(section), h)
    dyn = -1j * section.T * cumulative_integral(_aa_energy(section), h)
    return PhaseDecomposition("nonadiabatic_AA", geo, dyn, section.grid, section.T, section.section.copy())


def reconstruction_error(decomp: PhaseDecomposition, traj: WavefunctionTrajectory) -> np.ndarray:
    """``||exp(total_log) section - psi|| / ||psi||`` per grid point."""
    rebuilt = np.exp(decomp.total_log - traj.log_scale)[:, None] * decomp.reference
    return np.linalg.norm(rebuilt - traj.states, axis=1) / np.linalg.norm(traj.states, axis=1)


def norm_law_residual(section: CyclicSectionData, traj: WavefunctionTrajectory) -> np.ndarray:
    """Relative error of ``||psi(s)||^2 = ||psi(0)||^2 exp(2 T int Im <sec|H|sec>/<sec|sec>)``."""
    predicted = 2 * section.T * cumulative_integral(_aa_energy(section).imag, section.grid.h)
    actual = 2 * (traj.log_norms - traj.log_norms[0])
    return np.abs(np.expm1(actual - predicted))


def chi_generator_invariance(section: CyclicSectionData, chi, k: int | None = None):
    """``i T <chi|H|sec>/<chi|sec> + <chi|dsec>/<chi|sec>`` for a chi path (or fixed vector).

    Independent of ``chi`` wherever ``<chi|sec> != 0``; masked where it vanishes.
    """
    if isinstance(chi, ChiFamily):
        chi = chi.chi
    chi = np.asarray(chi, dtype=complex)
    if chi.ndim == 1:
        chi = np.broadcast_to(chi, section.section.shape)
    sec = section.section
    den = _dot(chi, sec)
    mask = np.abs(den) < SINGULAR_THRESHOLD * np.linalg.norm(chi, axis=1) * np.linalg.norm(sec, axis=1)
    _require_unmasked(mask, k, section.grid, "<chi|section>")
    den = np.where(mask, 1.0, den)
    val = (1j * section.T * _sandwich(chi, section.hamiltonians, sec) + _dot(chi, section.section_dot)) / den
    val = np.ma.masked_array(val, mask=mask)
    return val if k is None else complex(val[k])


# -- norm bookkeeping of the adiabatic geometric factors ------------------------

def spectral_dissipation(eig: EigenTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """``|exp(-int A_s)|^2`` and ``|exp(-int <phi*|dP_o|phi>)|^2`` along the grid.

    The second uses fourth-order differences of the orthogonal projector
    sequence, an independent route to the same dissipation factor when the
    right vectors have constant norm.
    """
    h = eig.grid.h
    x = _sandwich(eig.phi_star, eig.projector_derivatives("orthogonal", order=4), eig.phi)
    n2 = _dot(eig.phi, eig.phi).real
    direct = np.exp(-2 * cumulative_integral(connection_spectral(eig), h).real)
    via_projector = np.exp(-2 * cumulative_integral(x, h).real) * n2[0] / n2
    return direct, via_projector


def orthogonal_norm_neutrality(eig: EigenTrajectory) -> np.ndarray:
    """``|exp(-int A_o)|^2 <phi(s)|phi(s)> / <phi(0)|phi(0)> - 1``; zero when the factor carries no dissipation."""
    n2 = _dot(eig.phi, eig.phi).real
    return np.expm1(-2 * cumulative_integral(connection_orthogonal(eig), eig.grid.h).real + np.log(n2 / n2[0]))

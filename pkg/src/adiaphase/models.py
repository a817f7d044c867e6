"""Time-dependent Hamiltonian families on reduced time ``s`` in [0, 1].

Units: hbar = 1; energies are in inverse reduced-time units, so the
Schrodinger equation reads ``dpsi/ds = -i T H(s) psi``.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable
import math
import re

import numpy as np

from .errors import DissipativityViolation, NearDegenerate, ParseError, UnknownModelKind
from .linalg import DEGENERACY_RTOL, eigenvalues

__all__ = [
    "HamiltonianModel",
    "TwoLevelPulseParams",
    "two_level_pulse",
    "constant_model",
    "rotation_model",
    "matrix_table_model",
    "GaussianEntry",
    "min_eigenvalue_distance",
    "dissipativity_margin",
    "check_dissipativity",
    "cyclicity_gap",
    "load_model",
    "parse_model_config",
]

FD_STEP = 1e-5
DISSIPATIVITY_TOL = 1e-12
DISSIPATIVITY_POINTS = 512


@dataclass(frozen=True)
class HamiltonianModel:
    """A map ``s -> H(s)`` with an optional analytic derivative.

    When ``evaluate_derivative`` is ``None``, :meth:`derivative` falls back to
    a central difference of :meth:`evaluate` with step ``FD_STEP``.
    """

    dim: int
    evaluate: Callable[[float], np.ndarray]
    evaluate_derivative: Callable[[float], np.ndarray] | None = None
    name: str = "model"
    parameters: dict = field(default_factory=dict)

    def __call__(self, s: float) -> np.ndarray:
        return self.evaluate(s)

    def derivative(self, s: float) -> np.ndarray:
        if self.evaluate_derivative is not None:
            return self.evaluate_derivative(s)
        return (self.evaluate(s + FD_STEP) - self.evaluate(s - FD_STEP)) / (2 * FD_STEP)

    def sample(self, s_points) -> np.ndarray:
        return np.array([self.evaluate(float(s)) for s in s_points])


@dataclass(frozen=True)
class TwoLevelPulseParams:
    """Bound state (energy 0) coupled to a resonance of width ``gamma`` by a Gaussian pulse.

    The pulse is ``Omega(s) = w0 * gamma * exp(-(s - s0)**2 / (2 * sigma))``;
    ``sigma`` enters linearly in the exponent.
    """

    gamma: float = 1.0
    w0: float = 1.0
    s0: float = 0.5
    sigma: float = 0.16

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.w0 >= 0:
            raise ValueError(f"w0 must be >= 0, got {self.w0}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not 0.0 <= self.s0 <= 1.0:
            raise ValueError(f"s0 must lie in [0, 1], got {self.s0}")

    def omega(self, s: float) -> float:
        return self.w0 * self.gamma * math.exp(-((s - self.s0) ** 2) / (2 * self.sigma))


def two_level_pulse(params: TwoLevelPulseParams | None = None, **kwargs) -> HamiltonianModel:
    """``H(s) = [[0, Omega(s)], [Omega(s), -i gamma / 2]]`` with analytic ``dH/ds``.

    Either pass a :class:`TwoLevelPulseParams` or its fields as keywords.
    """
    p = params if params is not None else TwoLevelPulseParams(**kwargs)
    decay = -0.5j * p.gamma

    def evaluate(s):
        om = p.omega(s)
        return np.array([[0.0, om], [om, decay]], dtype=complex)

    def evaluate_derivative(s):
        dom = -(s - p.s0) / p.sigma * p.omega(s)
        return np.array([[0.0, dom], [dom, 0.0]], dtype=complex)

    return HamiltonianModel(
        dim=2,
        evaluate=evaluate,
        evaluate_derivative=evaluate_derivative,
        name="two_level_pulse",
        parameters={"gamma": p.gamma, "w0": p.w0, "s0": p.s0, "sigma": p.sigma},
    )


def constant_model(H, name: str = "constant") -> HamiltonianModel:
    H = np.array(H, dtype=complex)
    H.setflags(write=False)
    zero = np.zeros_like(H)
    return HamiltonianModel(H.shape[0], lambda s: H.copy(), lambda s: zero.copy(), name)


def rotation_model(energies=(1.0, -1.0), angle: float = math.pi) -> HamiltonianModel:
    """Hermitian isospectral family ``R(s) diag(energies) R(s)^T``, ``R`` a rotation by ``angle * s``."""
    D = np.diag(np.asarray(energies, dtype=complex))

    def rot(s):
        c, si = math.cos(angle * s), math.sin(angle * s)
        return np.array([[c, -si], [si, c]], dtype=complex)

    def evaluate(s):
        R = rot(s)
        return R @ D @ R.T

    def evaluate_derivative(s):
        R = rot(s)
        dR = angle * np.array([[-R[1, 0], -R[0, 0]], [R[0, 0], -R[1, 0]]])
        return dR @ D @ R.T + R @ D @ dR.T

    return HamiltonianModel(2, evaluate, evaluate_derivative, "rotation",
                            {"angle": angle, "energies": tuple(energies)})


@dataclass(frozen=True)
class GaussianEntry:
    """One additive term ``value * [exp(-(s - s0)^2 / (2 sigma))]`` of a matrix entry."""

    i: int
    j: int
    value: complex
    s0: float | None = None
    sigma: float | None = None

    def envelope(self, s: float) -> tuple[float, float]:
        if self.s0 is None:
            return 1.0, 0.0
        g = math.exp(-((s - self.s0) ** 2) / (2 * self.sigma))
        return g, -(s - self.s0) / self.sigma * g


def matrix_table_model(dim: int, terms: list[GaussianEntry], name: str = "matrix_table") -> HamiltonianModel:
    for t in terms:
        if not (0 <= t.i < dim and 0 <= t.j < dim):
            raise ValueError(f"entry ({t.i}, {t.j}) outside a {dim}x{dim} matrix")
    terms = tuple(terms)

    def evaluate(s):
        H = np.zeros((dim, dim), dtype=complex)
        for t in terms:
            H[t.i, t.j] += t.value * t.envelope(s)[0]
        return H

    def evaluate_derivative(s):
        H = np.zeros((dim, dim), dtype=complex)
        for t in terms:
            H[t.i, t.j] += t.value * t.envelope(s)[1]
        return H

    return HamiltonianModel(dim, evaluate, evaluate_derivative, name, {"n_terms": len(terms)})


def min_eigenvalue_distance(model: HamiltonianModel, grid) -> float:
    """Smallest pairwise eigenvalue distance over the grid points."""
    best = math.inf
    for s in grid.points:
        H = model(float(s))
        w = eigenvalues(H)
        if len(w) < 2:
            continue
        gaps = np.abs(w[:, None] - w[None, :])[np.triu_indices(len(w), 1)]
        gap = float(gaps.min())
        if gap <= DEGENERACY_RTOL * np.linalg.norm(H):
            raise NearDegenerate(f"eigenvalue gap {gap:.3e} at s = {s:.6g}", s=float(s))
        best = min(best, gap)
    return best


def dissipativity_margin(H: np.ndarray) -> float:
    """Largest eigenvalue of the Hermitian matrix ``(H - H^dagger) / (2i)``."""
    return float(np.linalg.eigvalsh((H - H.conj().T) / 2j).max())


def check_dissipativity(model: HamiltonianModel, n_points: int = DISSIPATIVITY_POINTS,
                        tol: float = DISSIPATIVITY_TOL) -> float:
    """Return the worst margin on a uniform grid, raising if it exceeds ``tol``."""
    worst, worst_s = -math.inf, 0.0
    for s in np.linspace(0.0, 1.0, n_points):
        m = dissipativity_margin(model(float(s)))
        if m > worst:
            worst, worst_s = m, float(s)
    if worst > tol:
        raise DissipativityViolation(
            f"H(s) is not a contraction generator: max eig of (H - H^dagger)/2i = {worst:.3e} "
            f"at s = {worst_s:.6g}", s=worst_s)
    return worst


def cyclicity_gap(model: HamiltonianModel) -> float:
    """``||H(1) - H(0)|| / ||H(0)||`` (Frobenius)."""
    H0, H1 = model(0.0), model(1.0)
    return float(np.linalg.norm(H1 - H0) / max(np.linalg.norm(H0), np.finfo(float).tiny))


_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_ENTRY_KEY = re.compile(r"entry\.(\d+)\.(\d+)$")
_ENTRY_VALUE = re.compile(
    rf"^\s*({_NUMBER})\s+({_NUMBER})\s*(?:\*\s*gaussian\(\s*({_NUMBER})\s*,\s*({_NUMBER})\s*\))?\s*$")
_PULSE_KEYS = ("gamma", "w0", "s0", "sigma")
_OPTIONAL_KEYS = ("hbar",)


def _parse_float(text: str, lineno: int, col: int) -> float:
    if not re.fullmatch(_NUMBER, text.strip()):
        raise ParseError(f"expected a decimal literal, got {text.strip()!r}", lineno, col)
    return float(text)


def parse_model_config(text: str) -> HamiltonianModel:
    """Build a model from ``key = value`` configuration text (see :func:`load_model`)."""
    scalars: dict[str, tuple[str, int, int]] = {}
    terms: list[tuple[int, int, str, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno, len(line) - len(line.lstrip()) + 1)
        key_part, value = line.split("=", 1)
        key = key_part.strip()
        vcol = len(key_part) + 2 + len(value) - len(value.lstrip())
        m = _ENTRY_KEY.match(key)
        if m:
            terms.append((int(m.group(1)), int(m.group(2)), value, lineno, vcol))
            continue
        if key not in ("kind", "dim") + _PULSE_KEYS + _OPTIONAL_KEYS:
            raise ParseError(f"unknown key {key!r}", lineno, raw.index(key) + 1)
        if key in scalars:
            raise ParseError(f"duplicate key {key!r}", lineno, raw.index(key) + 1)
        scalars[key] = (value.strip(), lineno, vcol)

    for required in ("kind", "dim"):
        if required not in scalars:
            raise ParseError(f"missing required key {required!r}")
    kind, klin, kcol = scalars["kind"]
    dim_text, dlin, dcol = scalars["dim"]
    if not re.fullmatch(r"\d+", dim_text) or int(dim_text) < 1:
        raise ParseError(f"dim must be a positive integer, got {dim_text!r}", dlin, dcol)
    dim = int(dim_text)
    hbar = _parse_float(*scalars["hbar"]) if "hbar" in scalars else 1.0

    if kind == "two_level_pulse":
        if terms:
            raise ParseError("entry.* keys are not allowed for two_level_pulse", terms[0][3], 1)
        if dim != 2:
            raise ParseError("two_level_pulse requires dim = 2", dlin, dcol)
        missing = [k for k in _PULSE_KEYS if k not in scalars]
        if missing:
            raise ParseError(f"missing keys for two_level_pulse: {', '.join(missing)}")
        values = {k: _parse_float(*scalars[k]) for k in _PULSE_KEYS}
        try:
            model = two_level_pulse(TwoLevelPulseParams(**values))
        except ValueError as exc:
            raise ParseError(str(exc)) from exc
    elif kind == "matrix_table":
        extra = [k for k in _PULSE_KEYS if k in scalars]
        if extra:
            _, lin, _ = scalars[extra[0]]
            raise ParseError(f"key {extra[0]!r} is not valid for matrix_table", lin, 1)
        entries = []
        for i, j, value, lin, col in terms:
            if not (i < dim and j < dim):
                raise ParseError(f"entry.{i}.{j} outside a {dim}x{dim} matrix", lin, 1)
            m = _ENTRY_VALUE.match(value)
            if not m:
                raise ParseError("expected '<re> <im> [* gaussian(<s0>,<sigma>)]'", lin, col)
            re_, im_, g0, gs = m.groups()
            if gs is not None and not float(gs) > 0:
                raise ParseError("gaussian sigma must be > 0", lin, col)
            entries.append(GaussianEntry(i, j, complex(float(re_), float(im_)),
                                         None if g0 is None else float(g0),
                                         None if gs is None else float(gs)))
        model = matrix_table_model(dim, entries)
    else:
        raise UnknownModelKind(f"unknown model kind {kind!r}", klin, kcol)

    if hbar != 1.0:
        model.parameters["hbar"] = hbar
    check_dissipativity(model)
    return model


def load_model(path) -> HamiltonianModel:
    """Load a model config file.

    Grammar: one ``key = value`` per line, ``#`` starts a comment. Required
    keys are ``kind`` (``two_level_pulse`` or ``matrix_table``) and ``dim``.
    ``two_level_pulse`` takes ``gamma``, ``w0``, ``s0``, ``sigma``.
    ``matrix_table`` takes any number of
    ``entry.<i>.<j> = <re> <im> [* gaussian(<s0>,<sigma>)]`` lines with
    zero-based indices; repeated entries for the same ``(i, j)`` add up.
    ``hbar`` is accepted for display only. Dissipativity is verified on
    512 points before the model is returned.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_model_config(text)

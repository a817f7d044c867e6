"""Dense complex linear algebra for small general (non-normal) matrices.

Matrices and vectors are plain ``numpy`` complex arrays. Everything here is
written out by hand (LU with partial pivoting, Householder reduction to
Hessenberg form, single-shift complex QR, inverse iteration) so that the
eigen-machinery can be checked against ``numpy.linalg`` as an independent
route.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DefectivePair, NearDegenerate, NoConvergence, SingularMatrix

__all__ = [
    "EigenSystem",
    "solve_linear",
    "eigenvalues",
    "eigensystem",
    "biorthonormalize",
    "gram_matrix",
    "DEGENERACY_RTOL",
]

EPS = np.finfo(float).eps
DEGENERACY_RTOL = 1e-8
DEFECTIVE_THRESHOLD = 1e-8
RESIDUAL_RTOL = 1e-10
PIVOT_RTOL = 64 * EPS
MAX_QR_SWEEPS = 60


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues with right vectors ``right[b]`` and left vectors ``left[b]``.

    ``left[b]`` is an eigenvector of ``H^dagger`` for ``conj(eigenvalues[b])``.
    After :func:`biorthonormalize`, ``vdot(left[a], right[b]) == delta_ab``.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _lu_factor(A: np.ndarray, pivot_floor: float | None = None):
    """In-place style LU with partial pivoting; returns (LU, perm).

    With ``pivot_floor`` set, tiny pivots are replaced by it (inverse iteration);
    otherwise a tiny pivot raises :class:`SingularMatrix`.
    """
    n = A.shape[0]
    LU = A.copy()
    perm = np.arange(n)
    scale = np.linalg.norm(A) or 1.0
    for j in range(n):
        p = j + int(np.argmax(np.abs(LU[j:, j])))
        if p != j:
            LU[[j, p]] = LU[[p, j]]
            perm[[j, p]] = perm[[p, j]]
        piv = LU[j, j]
        if abs(piv) <= PIVOT_RTOL * scale:
            if pivot_floor is None:
                raise SingularMatrix(f"pivot {abs(piv):.3e} below threshold at column {j}")
            LU[j, j] = piv = pivot_floor if piv == 0 else piv / abs(piv) * pivot_floor
        LU[j + 1:, j] /= piv
        LU[j + 1:, j + 1:] -= np.outer(LU[j + 1:, j], LU[j, j + 1:])
    return LU, perm


def _lu_solve(LU: np.ndarray, perm: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = LU.shape[0]
    x = b[perm].astype(complex)
    for i in range(1, n):
        x[i] -= LU[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - LU[i, i + 1:] @ x[i + 1:]) / LU[i, i]
    return x


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides (columns).
    Raises :class:`SingularMatrix` when a pivot falls below
    ``64 eps ||A||_F``.
    """
    A = _as_matrix(A)
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != A.shape[0]:
        raise ValueError("dimension mismatch between A and b")
    LU, perm = _lu_factor(A)
    return _lu_solve(LU, perm, b)


def _householder_hessenberg(A: np.ndarray) -> np.ndarray:
    H = A.copy()
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        H[k + 1:, :] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, :])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
        H[k + 2:, k] = 0.0
    return H


def _wilkinson_shift(a, b, c, d):
    # eigenvalue of [[a, b], [c, d]] closer to d
    half = 0.5 * (a - d)
    root = np.sqrt(half * half + b * c)
    mu1 = d - b * c / (half + root) if half + root != 0 else d
    mu2 = d - b * c / (half - root) if half - root != 0 else d
    return mu1 if abs(mu1 - d) <= abs(mu2 - d) else mu2


def _qr_sweep(H: np.ndarray, lo: int, hi: int, mu: complex) -> None:
    """One explicit shifted QR step on the Hessenberg block ``H[lo:hi+1, lo:hi+1]``."""
    m = hi - lo + 1
    B = H[lo:hi + 1, lo:hi + 1] - mu * np.eye(m)
    rots = []
    for k in range(m - 1):
        a, b = B[k, k], B[k + 1, k]
        r = np.hypot(abs(a), abs(b))
        if r == 0.0:
            G = np.eye(2, dtype=complex)
        else:
            G = np.array([[np.conj(a) / r, np.conj(b) / r], [-b / r, a / r]])
        B[k:k + 2, k:] = G @ B[k:k + 2, k:]
        rots.append(G)
    for k, G in enumerate(rots):
        B[:k + 2, k:k + 2] = B[:k + 2, k:k + 2] @ G.conj().T
    H[lo:hi + 1, lo:hi + 1] = B + mu * np.eye(m)


def eigenvalues(A) -> np.ndarray:
    """Eigenvalues of a general complex matrix, unordered.

    Hessenberg reduction followed by single-shift QR with Wilkinson shifts
    and deflation. Raises :class:`NoConvergence` after
    ``MAX_QR_SWEEPS`` sweeps without deflating an eigenvalue.
    """
    H = _householder_hessenberg(_as_matrix(A))
    n = H.shape[0]
    hi = n - 1
    stall = 0
    while hi > 0:
        l = hi
        while l > 0:
            scale = abs(H[l, l]) + abs(H[l - 1, l - 1])
            if scale == 0.0:
                scale = np.linalg.norm(H) or 1.0
            if abs(H[l, l - 1]) <= EPS * scale:
                H[l, l - 1] = 0.0
                break
            l -= 1
        if l == hi:
            hi -= 1
            stall = 0
            continue
        stall += 1
        if stall > MAX_QR_SWEEPS:
            raise NoConvergence(f"QR iteration stalled with active block [{l}, {hi}]")
        if stall % 11 == 0:
            mu = H[hi, hi] + 0.75 * abs(H[hi, hi - 1])
        else:
            mu = _wilkinson_shift(H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi])
        _qr_sweep(H, l, hi, mu)
    return np.diag(H).copy()


@lru_cache(maxsize=None)
def _start_vector(n: int) -> np.ndarray:
    x = np.ones(n, dtype=complex) + 1j * np.linspace(0.0, 0.5, n)
    x.setflags(write=False)
    return x


def _norm(x: np.ndarray) -> float:
    return float(np.sqrt(np.vdot(x, x).real))


def _inverse_iteration(A: np.ndarray, mu: complex, norm_A: float) -> np.ndarray:
    n = A.shape[0]
    floor = max(EPS * norm_A, np.finfo(float).tiny)
    LU, perm = _lu_factor(A - mu * np.eye(n), pivot_floor=floor)
    x = _start_vector(n)
    target = RESIDUAL_RTOL * max(norm_A, 1.0)
    for _ in range(6):
        x = _lu_solve(LU, perm, x)
        x /= _norm(x)
        residual = _norm(A @ x - mu * x)
        if residual <= target * 1e-2:
            break
    if residual > target:
        raise NoConvergence(f"inverse iteration did not converge for eigenvalue {mu}")
    k = int(np.argmax(np.abs(x)))
    return x * (abs(x[k]) / x[k])


def _canonical_order(w: np.ndarray, norm_A: float) -> np.ndarray:
    # lexicographic in (re, im); real parts equal up to noise count as ties
    q = 1e-9 * max(norm_A, 1.0)
    return np.array(sorted(range(len(w)), key=lambda i: (round(w[i].real / q), w[i].imag)))


def gram_matrix(es: EigenSystem) -> np.ndarray:
    """``G[a, b] = <left_a | right_b>``."""
    return es.left.conj() @ es.right.T


def biorthonormalize(raw: EigenSystem) -> EigenSystem:
    """Scale right vectors to unit norm and left vectors so that ``<left_b|right_b> = 1``.

    Raises :class:`DefectivePair` when a unit left/right pair is nearly
    orthogonal, the signature of an exceptional point.
    """
    right = raw.right / np.linalg.norm(raw.right, axis=1, keepdims=True)
    left = raw.left / np.linalg.norm(raw.left, axis=1, keepdims=True)
    overlap = np.einsum("bi,bi->b", left.conj(), right)
    bad = np.abs(overlap) < DEFECTIVE_THRESHOLD
    if np.any(bad):
        b = int(np.argmax(bad))
        raise DefectivePair(f"|<left|right>| = {abs(overlap[b]):.3e} for level {b}")
    left = left / overlap.conj()[:, None]
    return EigenSystem(raw.eigenvalues.copy(), right, left)


def eigensystem(H) -> EigenSystem:
    """Biorthonormal eigensystem of a diagonalizable complex matrix.

    Eigenvalues come back sorted lexicographically by (real, imag).
    Raises :class:`NearDegenerate` if two eigenvalues are closer than
    ``1e-8 ||H||_F``.
    """
    A = _as_matrix(H)
    n = A.shape[0]
    norm_A = float(np.linalg.norm(A))
    w = eigenvalues(A)
    if n > 1:
        gaps = np.abs(w[:, None] - w[None, :]) + np.diag(np.full(n, np.inf))
        if gaps.min() <= DEGENERACY_RTOL * norm_A:
            raise NearDegenerate(f"eigenvalue gap {gaps.min():.3e} below {DEGENERACY_RTOL:g} ||H||")
    w = w[_canonical_order(w, norm_A)]
    Ah = A.conj().T
    right = np.array([_inverse_iteration(A, lam, norm_A) for lam in w])
    left = np.array([_inverse_iteration(Ah, np.conj(lam), norm_A) for lam in w])
    return biorthonormalize(EigenSystem(w, right, left))

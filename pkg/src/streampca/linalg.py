"""Dense linear algebra used by the updates.

Thin Householder QR, pseudo-inverse, a Jacobi symmetric eigensolver and the
three rank-update identities (Sherman-Morrison, a rank-2 Woodbury update of
the Gram inverse, and the rank-1 Moore-Penrose update).  All functions are
pure: inputs are never modified.
"""

from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from . import backend
from .errors import BadK, DimensionMismatch, NotSymmetric, RankDeficient

# relative tolerance for every rank-deficiency test
TAU_RANK = 1e-12

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class EigenPair(NamedTuple):
    value: float
    vector: np.ndarray


def _as_matrix(A, name="A"):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {A.shape}")
    return A


def _as_vector(a, n, name):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if a.shape[0] != n:
        raise DimensionMismatch(f"{name} must have length {n}, got {a.shape[0]}")
    return a


def qr_factor(A):
    """Thin QR ``A = Q R`` with orthonormal Q (d x k) and diag(R) >= 0."""
    A = _as_matrix(A)
    d, k = A.shape
    if d < k:
        raise DimensionMismatch(f"need rows >= cols, got {d} x {k}")
    Q, R, fail = backend.kernels.householder_qr(np.ascontiguousarray(A), TAU_RANK)
    if fail >= 0:
        raise RankDeficient(f"column {fail} is numerically dependent on the previous ones")
    return Q, R


def qr_orthonormalize(A):
    """Orthonormal basis of the column space of ``A`` (the Q of a thin QR)."""
    return qr_factor(A)[0]


def pseudo_inverse(C):
    """``(C^T C)^-1 C^T`` for full column rank C, computed as ``R^-1 Q^T``."""
    Q, R = qr_factor(C)
    return solve_triangular(R, Q.T, lower=False)


def gram_inverse(C):
    """``(C^T C)^-1`` for full column rank C, computed as ``R^-1 R^-T``."""
    _, R = qr_factor(C)
    Rinv = solve_triangular(R, np.eye(R.shape[0]), lower=False)
    return Rinv @ Rinv.T


def sym_eig_topk(S, k):
    """Top-k eigenpairs of a symmetric matrix, eigenvalues descending.

    Cyclic Jacobi rotations, stopping when the off-diagonal norm drops
    below ``JACOBI_TOL * ||S||_F`` or after ``JACOBI_MAX_SWEEPS`` sweeps.
    """
    S = _as_matrix(S, "S")
    d = S.shape[0]
    if S.shape != (d, d):
        raise DimensionMismatch(f"S must be square, got {S.shape}")
    if not 1 <= k <= d:
        raise BadK(f"k={k} outside [1, {d}]")
    fro = np.linalg.norm(S)
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-10 * fro:
        raise NotSymmetric("S differs from its transpose")
    w, V = eigh_jacobi(S)
    return [EigenPair(float(w[i]), V[:, i].copy()) for i in range(k)]


def eigh_jacobi(S):
    """All eigenpairs of symmetric S via Jacobi, sorted descending."""
    S = _as_matrix(S, "S")
    S = 0.5 * (S + S.T)
    w, V, _ = backend.kernels.jacobi_eigh(np.ascontiguousarray(S), JACOBI_TOL, JACOBI_MAX_SWEEPS)
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def gram_inverse_rank2_update(Lam, C, c, v):
    """``(C'^T C')^-1`` for ``C' = C + c v^T`` given ``Lam = (C^T C)^-1``.

    A rank-1 change of C is a rank-2 symmetric change of the Gram matrix,
    absorbed with a 2x2 Woodbury capacitance solve.  Only ``C^T c`` touches
    all d rows.
    """
    C = _as_matrix(C, "C")
    d, k = C.shape
    Lam = _as_matrix(Lam, "Lam")
    if Lam.shape != (k, k):
        raise DimensionMismatch(f"Lam must be {k} x {k}, got {Lam.shape}")
    c = _as_vector(c, d, "c")
    v = _as_vector(v, k, "v")
    out = backend.kernels.gram_rank2_update(Lam, C, c, v, TAU_RANK)
    if out is None:
        raise RankDeficient("Woodbury capacitance matrix is singular")
    return out


def pinv_rank1_update(C, Cpinv, c, v):
    """Pseudo-inverse of ``C + c v^T`` from ``Cpinv = C^+`` in O(k d).

    Full column rank specialisation of Meyer's rank-1 update: because
    ``C^+ C = I`` the row-space residual of ``v`` vanishes and only two
    cases remain, selected by whether ``c`` leaves the column space of C.
    """
    C = _as_matrix(C, "C")
    d, k = C.shape
    Cpinv = _as_matrix(Cpinv, "Cpinv")
    if Cpinv.shape != (k, d):
        raise DimensionMismatch(f"Cpinv must be {k} x {d}, got {Cpinv.shape}")
    c = _as_vector(c, d, "c")
    v = _as_vector(v, k, "v")
    out = backend.kernels.pinv_rank1_update(C, Cpinv, c, v, TAU_RANK)
    if out is None:
        raise RankDeficient("rank-1 update annihilates a column direction")
    return out


def sherman_morrison_solve(eta, x, B):
    """``B (x x^T + I/eta)^-1`` via the rank-one inverse identity."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    B = _as_matrix(B, "B")
    x = _as_vector(x, B.shape[1], "x")
    Bx = B @ x
    return eta * B - (eta * eta / (1.0 + eta * (x @ x))) * np.outer(Bx, x)

"""Component state and the measurements taken on it.

Loss convention: every *reported* loss is ``(1/N) sum ||P y - y||^2`` with
no factor 1/2.  The gradient below belongs to the half-scaled loss used in
the update derivations.
"""

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .errors import DimensionMismatch, NotOrthonormal, RankDeficient

DEFAULT_REFRESH_PERIOD = 1000
ORTHONORMAL_TOL = 1e-10
INVERSE_DRIFT_TOL = 1e-6


class InverseMode(str, enum.Enum):
    GRAM = "gram"
    PINV = "pinv"
    ORTHONORMAL = "orthonormal"


@dataclass
class ComponentState:
    """A d x k component matrix plus whatever keeps its projection cheap.

    ``gram_inv`` holds ``(C^T C)^-1`` in GRAM mode, ``pinv`` holds ``C^+`` in
    PINV mode, and ORTHONORMAL mode relies on ``C^T C = I``.
    """

    C: np.ndarray
    mode: InverseMode
    gram_inv: np.ndarray = None
    pinv: np.ndarray = None
    step: int = 0
    refresh_period: int = DEFAULT_REFRESH_PERIOD

    @classmethod
    def create(cls, C, mode=InverseMode.PINV, refresh_period=DEFAULT_REFRESH_PERIOD, step=0):
        C = np.array(C, dtype=np.float64, order="C", copy=True)
        if C.ndim != 2 or C.shape[0] < C.shape[1]:
            raise DimensionMismatch(f"C must be d x k with d >= k, got {C.shape}")
        if refresh_period < 1:
            raise ValueError("refresh_period must be positive")
        state = cls(C, InverseMode(mode), step=step, refresh_period=refresh_period)
        if state.mode is InverseMode.ORTHONORMAL:
            _check_orthonormal(C)
        return refresh_inverse(state)

    @property
    def d(self):
        return self.C.shape[0]

    @property
    def k(self):
        return self.C.shape[1]

    def copy(self):
        return replace(
            self,
            C=self.C.copy(),
            gram_inv=None if self.gram_inv is None else self.gram_inv.copy(),
            pinv=None if self.pinv is None else self.pinv.copy(),
        )

    def pinv_matrix(self):
        """``C^+`` materialised for the current mode."""
        if self.mode is InverseMode.PINV:
            return self.pinv
        if self.mode is InverseMode.GRAM:
            return self.gram_inv @ self.C.T
        return self.C.T

    def inverse_residual(self):
        """``max |C^+ C - I|`` of the maintained inverse (for orthonormal: of C^T C)."""
        if self.mode is InverseMode.GRAM:
            M = self.gram_inv @ (self.C.T @ self.C)
        else:
            M = self.pinv_matrix() @ self.C
        return float(np.max(np.abs(M - np.eye(self.k))))


def _check_orthonormal(C, tol=ORTHONORMAL_TOL):
    k = C.shape[1]
    err = np.max(np.abs(C.T @ C - np.eye(k)))
    if err > tol:
        raise NotOrthonormal(f"|C^T C - I|_max = {err:.3g} exceeds {tol:g}")


def _rows(Y, d):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != d:
        raise DimensionMismatch(f"observations must have {d} rows, got shape {Y.shape}")
    return Y


def refresh_inverse(state):
    """Recompute the maintained inverse from scratch; raises RankDeficient if C lost rank."""
    if state.mode is InverseMode.ORTHONORMAL:
        return state
    if state.mode is InverseMode.GRAM:
        state.gram_inv = linalg.gram_inverse(state.C)
        state.pinv = None
    else:
        state.pinv = np.ascontiguousarray(linalg.pseudo_inverse(state.C))
        state.gram_inv = None
    return state


def project(state, Y):
    """Coordinates ``X = C^+ Y`` of the observations in the column space of C."""
    Y = _rows(Y, state.d)
    if state.mode is InverseMode.GRAM:
        return state.gram_inv @ (state.C.T @ Y)
    if state.mode is InverseMode.PINV:
        return state.pinv @ Y
    return state.C.T @ Y


def reconstruct(state, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != state.k:
        raise DimensionMismatch(f"X must have {state.k} rows, got shape {X.shape}")
    return state.C @ X


def compression_loss(state, Y):
    """``(1/N) sum_n ||C C^+ y_n - y_n||^2`` (no factor 1/2)."""
    Y = _rows(Y, state.d)
    R = reconstruct(state, project(state, Y)) - Y
    return float(np.sum(R * R) / Y.shape[1])


def variance_objective(state, Y):
    """``1/2 (mean ||y||^2 - mean ||C^T y||^2)`` for orthonormal C."""
    _check_orthonormal(state.C)
    Y = _rows(Y, state.d)
    X = state.C.T @ Y
    n = Y.shape[1]
    return 0.5 * (float(np.sum(Y * Y)) - float(np.sum(X * X))) / n


def euclidean_gradient(state, Y):
    """Gradient ``(1/N)(C X - Y) X^T`` of the half-scaled loss, ``X = C^T Y``."""
    _check_orthonormal(state.C)
    Y = _rows(Y, state.d)
    X = state.C.T @ Y
    return (state.C @ X - Y) @ X.T / Y.shape[1]


def tangent_project(C, G):
    """Project G onto the tangent space of the Stiefel manifold at C: ``(I - C C^T) G``."""
    C = np.asarray(C, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    if G.shape != C.shape:
        raise DimensionMismatch(f"G must have shape {C.shape}, got {G.shape}")
    _check_orthonormal(C)
    return G - C @ (C.T @ G)


def projection_matrix(state):
    """``P = C C^+``."""
    return state.C @ state.pinv_matrix()


class CovarianceLoss:
    """Compression loss against a fixed dataset through its covariance.

    ``loss(C) = tr(S) - tr(C^+ S C)`` with ``S = Y Y^T / N``; equal to
    :func:`compression_loss` but O(d^2 k) per call instead of O(d k N), which
    matters when a run records its loss every few hundred steps.
    """

    def __init__(self, Y):
        Y = np.asarray(Y, dtype=np.float64)
        self.n = Y.shape[1]
        self.S = Y @ Y.T / self.n
        self.total = float(np.trace(self.S))

    def __call__(self, state):
        if state.C.shape[0] != self.S.shape[0]:
            raise DimensionMismatch(f"state has d={state.d}, data has d={self.S.shape[0]}")
        explained = float(np.sum(state.pinv_matrix() * (state.C.T @ self.S)))
        return max(self.total - explained, 0.0)


def check_invariants(state):
    """Raise if the state violates its mode's contract."""
    if state.mode is InverseMode.ORTHONORMAL:
        _check_orthonormal(state.C)
        return
    err = state.inverse_residual()
    if not err < INVERSE_DRIFT_TOL:
        raise RankDeficient(f"maintained inverse drifted: residual {err:.3g}")

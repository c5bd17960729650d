"""Online k-PCA updates and their batch counterparts.

Explicit updates (Oja, Krasulina) keep C orthonormal with a QR retraction.
The implicit Krasulina update drops that constraint and instead keeps the
pseudo-inverse (or Gram inverse) of C current with rank-1 updates, so a
single-sample step costs O(k d).

Step functions return a new :class:`ComponentState`; the argument is left
untouched.  :func:`stream` runs whole passes over a data matrix in the
compiled kernels and mutates a private copy.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import backend, linalg
from .errors import BadK, DimensionMismatch, NotOrthonormal, RankDeficient
from .pca_core import (
    ComponentState,
    InverseMode,
    compression_loss,
    project,
    refresh_inverse,
)
from .trace import LossTrace

log = logging.getLogger(__name__)

ORTHONORMAL_ALGOS = ("oja", "krasulina")
UNCONSTRAINED_ALGOS = ("implicit_krasulina", "explicit_unconstrained")
STREAMING_ALGOS = ORTHONORMAL_ALGOS + UNCONSTRAINED_ALGOS

DEFAULT_GAMMA = {
    "oja": 0.9,
    "krasulina": 0.9,
    "implicit_krasulina": 0.8,
    "explicit_unconstrained": 0.9,
}


@dataclass(frozen=True)
class LearningSchedule:
    """eta(t) = eta0 / t**gamma for t >= 1."""

    eta0: float
    gamma: float

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be positive, got {self.eta0}")
        if not 0.5 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0.5, 1), got {self.gamma}")

    def __call__(self, t):
        return learning_rate(self, t)

    def rates(self, first, count):
        """Learning rates for steps first, first+1, ..., first+count-1."""
        t = np.arange(first, first + count, dtype=np.float64)
        return self.eta0 / t**self.gamma

    def scaled(self, factor):
        return LearningSchedule(self.eta0 * factor, self.gamma)


def learning_rate(schedule, t):
    if t < 1:
        raise ValueError(f"step index starts at 1, got {t}")
    return schedule.eta0 / t**schedule.gamma


def effective_rate(eta, x):
    """Adaptive rate eta / (1 + eta ||x||^2) of the implicit update."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return eta / (1.0 + eta * float(x @ x))


@dataclass
class StepReport:
    step: int
    rate_used: float
    loss_before: Optional[float] = None
    # "refresh" when the maintained inverse was rebuilt on schedule,
    # "recovered" when a rank failure forced a rebuild and retry
    rank_event: Optional[str] = None


@dataclass
class MiniBatch:
    """Observations as columns of Y, plus an optional cached projection X = C^+ Y."""

    Y: np.ndarray
    X: Optional[np.ndarray] = None


def _batch(state, batch):
    if isinstance(batch, MiniBatch):
        Y, X = batch.Y, batch.X
    else:
        Y, X = batch, None
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != state.d or Y.shape[1] < 1:
        raise DimensionMismatch(f"batch must be {state.d} x N with N >= 1, got {Y.shape}")
    if X is None:
        X = project(state, Y)
    return Y, X


def _require_orthonormal(state):
    if state.mode is not InverseMode.ORTHONORMAL:
        raise NotOrthonormal(f"{state.mode.value} state given to an orthonormal update")


def _require_unconstrained(state):
    if state.mode is InverseMode.ORTHONORMAL:
        raise ValueError("implicit/unconstrained updates need a gram or pinv state")


def _with_matrix(state, C):
    new = state.copy()
    new.C = np.ascontiguousarray(C)
    new.step += 1
    return new


def init_state(d, k, mode, rng, refresh_period=1000):
    """Random standard-normal start; orthonormalised for the explicit methods."""
    if not 1 <= k <= d:
        raise BadK(f"k={k} outside [1, {d}]")
    C0 = rng.standard_normal((d, k))
    mode = InverseMode(mode)
    if mode is InverseMode.ORTHONORMAL:
        C0 = linalg.qr_orthonormalize(C0)
    return ComponentState.create(C0, mode, refresh_period)


def seeded_start(seed, n, d, k, mode, refresh_period=1000):
    """Stream order and initial state derived from one seed.

    Single-machine and distributed runs both start here, so the same seed
    gives the same C0 and the same visiting order.
    """
    init_ss, order_ss = np.random.SeedSequence(seed).spawn(2)
    order = np.random.default_rng(order_ss).permutation(n)
    state = init_state(d, k, mode, np.random.default_rng(init_ss), refresh_period)
    return order, state


def oja_step(state, batch, eta):
    """``QR(C + (eta/N) Y Y^T C)``."""
    _require_orthonormal(state)
    Y, _ = _batch(state, batch)
    C = state.C + (eta / Y.shape[1]) * (Y @ (Y.T @ state.C))
    return _with_matrix(state, linalg.qr_orthonormalize(C))


def krasulina_step(state, batch, eta):
    """``QR(C - (eta/N)(C X - Y) X^T)`` with ``X = C^T Y``."""
    _require_orthonormal(state)
    Y, X = _batch(state, batch)
    C = state.C - (eta / Y.shape[1]) * ((state.C @ X - Y) @ X.T)
    return _with_matrix(state, linalg.qr_orthonormalize(C))


def implicit_krasulina_minibatch(state, batch, eta):
    """Closed-form implicit step ``(YX^T/N + C/eta)(XX^T/N + I/eta)^-1``.

    Evaluated as ``(eta YX^T/N + C)(eta XX^T/N + I)^-1`` with a Cholesky
    solve; the shifted matrix is SPD for every eta > 0.  The maintained
    inverse is rebuilt since the change to C has rank up to N.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    _require_unconstrained(state)
    Y, X = _batch(state, batch)
    n = Y.shape[1]
    A = (eta / n) * (Y @ X.T) + state.C
    B = (eta / n) * (X @ X.T) + np.eye(state.k)
    C = cho_solve(cho_factor(B), A.T).T
    return refresh_inverse(_with_matrix(state, C))


def explicit_unconstrained_step(state, batch, eta):
    """``C - (eta/N)(C X - Y) X^T`` with ``X = C^+ Y`` and no retraction."""
    _require_unconstrained(state)
    Y, X = _batch(state, batch)
    C = state.C - (eta / Y.shape[1]) * ((state.C @ X - Y) @ X.T)
    return refresh_inverse(_with_matrix(state, C))


def implicit_krasulina_stochastic(state, y, eta, implicit=True):
    """One single-observation implicit Krasulina step.

    ``C <- C - eta_x (C x - y) x^T`` with ``x = C^+ y`` and
    ``eta_x = eta / (1 + eta ||x||^2)``; the maintained inverse follows in
    O(k d).  On a rank failure the inverse is rebuilt and the step retried
    once.  ``implicit=False`` uses the raw eta (explicit unconstrained step).
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    _require_unconstrained(state)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != state.d:
        raise DimensionMismatch(f"y must have length {state.d}, got {y.shape[0]}")
    new = state.copy()
    event = None
    for attempt in range(2):
        x = project(new, y)[:, 0]
        rate = effective_rate(eta, x) if implicit else eta
        c = -rate * (new.C @ x - y)
        try:
            if new.mode is InverseMode.GRAM:
                inv = linalg.gram_inverse_rank2_update(new.gram_inv, new.C, c, x)
            else:
                inv = linalg.pinv_rank1_update(new.C, new.pinv, c, x)
            break
        except RankDeficient:
            if attempt:
                raise RankDeficient("rank lost after inverse refresh", step=new.step + 1) from None
            refresh_inverse(new)
            event = "recovered"
    new.C += np.outer(c, x)
    if new.mode is InverseMode.GRAM:
        new.gram_inv = inv
    else:
        new.pinv = inv
    new.step += 1
    if new.step % new.refresh_period == 0:
        refresh_inverse(new)
        event = event or "refresh"
    return new, StepReport(new.step, rate, rank_event=event)


def stream(state, Y, algo, schedule, every=None, callback=None, rates_out=None):
    """Apply one stochastic step per column of Y, in order.

    Step t (counted from ``state.step + 1``) uses ``schedule(t)``.
    ``callback(state)`` fires whenever the step count reaches a multiple of
    ``every``.  The maintained inverse is rebuilt every
    ``state.refresh_period`` steps and once after a rank failure before
    retrying.  ``rates_out``, if given, receives the per-step rate used.
    """
    if algo not in STREAMING_ALGOS:
        raise ValueError(f"unknown streaming algorithm {algo!r}")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != state.d:
        raise DimensionMismatch(f"data must have {state.d} rows, got shape {Y.shape}")
    state = state.copy()
    n = Y.shape[1]
    etas = schedule.rates(state.step + 1, n)
    rates = np.empty(n) if rates_out is None else rates_out
    kern = backend.kernels
    orthonormal = algo in ORTHONORMAL_ALGOS
    if orthonormal:
        _require_orthonormal(state)
    else:
        _require_unconstrained(state)
    gram = state.mode is InverseMode.GRAM
    pos = 0
    retry_at = None
    while pos < n:
        end = n
        if every:
            end = min(end, pos + every - state.step % every)
        if not orthonormal:
            end = min(end, pos + state.refresh_period - state.step % state.refresh_period)
        if orthonormal:
            done, failed = kern.orthonormal_pass(
                state.C, Y[:, pos:end], etas[pos:end], algo == "krasulina", linalg.TAU_RANK
            )
            rates[pos : pos + done] = etas[pos : pos + done]
        else:
            inv = state.gram_inv if gram else state.pinv
            done, failed = kern.stochastic_pass(
                state.C, inv, gram, algo == "implicit_krasulina",
                Y[:, pos:end], etas[pos:end], rates[pos:end], linalg.TAU_RANK,
            )
        pos += done
        state.step += done
        if failed:
            if orthonormal or retry_at == pos:
                raise RankDeficient(f"{algo} step lost rank", step=state.step + 1)
            log.warning("rank failure at step %d; rebuilding inverse and retrying", state.step + 1)
            refresh_inverse(state)
            retry_at = pos
            continue
        if not orthonormal and state.step % state.refresh_period == 0:
            refresh_inverse(state)
        if every and callback is not None and state.step % every == 0:
            callback(state)
    return state


def batch_em_fit(Y, k, iters, init):
    """Zero-noise EM for PCA: E-step ``X = C^+ Y``, M-step ``C = Y X^+``.

    Returns the final state and a trace of the compression loss after each
    iteration (step 0 is the initial loss).  An orthonormal ``init`` comes
    back in gram mode once an M-step has run, since EM does not preserve
    orthonormality.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if init.k != k:
        raise BadK(f"init has k={init.k}, expected {k}")
    if Y.shape[0] != init.d:
        raise DimensionMismatch(f"data must have {init.d} rows, got shape {Y.shape}")
    state = init.copy()
    trace = LossTrace()
    trace.append(0, compression_loss(state, Y))
    mode = InverseMode.GRAM if state.mode is InverseMode.ORTHONORMAL else state.mode
    for i in range(1, iters + 1):
        X = project(state, Y)
        try:
            X_pinv = linalg.pseudo_inverse(X.T).T
        except RankDeficient:
            raise RankDeficient("E-step projections lost rank k", step=i) from None
        state = ComponentState.create(Y @ X_pinv, mode, state.refresh_period, step=state.step + 1)
        trace.append(i, compression_loss(state, Y))
    return state, trace


def batch_pca_oracle(Y, k, return_spectrum=False):
    """Exact k-PCA from the eigendecomposition of ``Y Y^T / N``.

    Returns ``(state, loss)``, with the full descending spectrum appended
    when ``return_spectrum`` is set.  The loss equals the sum of the
    discarded eigenvalues.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise DimensionMismatch(f"Y must be 2-D, got shape {Y.shape}")
    d, n = Y.shape
    if not 1 <= k <= d:
        raise BadK(f"k={k} outside [1, {d}]")
    w, V = linalg.eigh_jacobi(Y @ Y.T / n)
    state = ComponentState.create(V[:, :k], InverseMode.ORTHONORMAL)
    loss = compression_loss(state, Y)
    if return_spectrum:
        return state, loss, w
    return state, loss

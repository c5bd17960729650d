"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_kernels`` extension.  Kernels never raise on numerical failure; they
return a status the wrappers in :mod:`streampca.linalg` and
:mod:`streampca.updates` turn into exceptions.

Conventions shared with the compiled kernels:

* ``tau`` is the relative rank tolerance.
* Streaming passes update ``C`` and the maintained inverse in place and
  return ``(n_done, failed)``.  When ``failed`` is true, sample ``n_done``
  was *not* applied and the arrays hold the state after ``n_done`` steps.
"""

import numpy as np

NAME = "python"


def householder_qr(A, tau):
    """Thin Householder QR with a nonnegative diagonal in R.

    Returns ``(Q, R, fail_col)``; ``fail_col`` is -1 on success, otherwise
    the first column whose residual norm fell below ``tau * ||A||_F``.
    """
    R = np.array(A, dtype=np.float64, copy=True)
    d, k = R.shape
    floor = tau * np.sqrt(np.sum(R * R))
    vs = []
    betas = []
    signs = np.empty(k)
    for j in range(k):
        x = R[j:, j]
        alpha = np.sqrt(x @ x)
        if alpha <= floor or alpha == 0.0:
            return None, None, j
        s = 1.0 if x[0] >= 0.0 else -1.0
        v = x.copy()
        v[0] += s * alpha
        beta = 1.0 / (alpha * (alpha + abs(x[0])))
        R[j:, j:] -= beta * np.outer(v, v @ R[j:, j:])
        vs.append(v)
        betas.append(beta)
        signs[j] = -s
    Q = np.eye(d, k)
    for j in range(k - 1, -1, -1):
        v = vs[j]
        Q[j:, :] -= betas[j] * np.outer(v, v @ Q[j:, :])
    Q *= signs
    R = np.triu(R[:k, :]) * signs[:, None]
    return Q, R, -1


def _tournament(n):
    """Round-robin pairings of ``range(n)`` (n even): n-1 rounds of n/2 pairs."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(S, tol, max_sweeps):
    """Jacobi eigensolver using the parallel (tournament) cyclic ordering.

    Each round rotates n/2 disjoint index pairs at once, which keeps the
    number of numpy calls per sweep linear in n.  Returns unsorted
    ``(eigenvalues, eigenvectors, sweeps)``.
    """
    A = np.array(S, dtype=np.float64, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.sqrt(np.sum(A * A))
    if n == 1 or scale == 0.0:
        return np.diag(A).copy(), V, 0
    if n % 2:
        A = np.pad(A, ((0, 1), (0, 1)))
        V = np.eye(n + 1)
    rounds = _tournament(A.shape[0])
    sweeps = 0
    while sweeps < max_sweeps:
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off < tol * scale:
            break
        sweeps += 1
        for p, q in rounds:
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]
            nz = apq != 0.0
            t = np.zeros_like(apq)
            with np.errstate(over="ignore"):  # theta = inf means no rotation, t = 0
                theta = (aqq[nz] - app[nz]) / (2.0 * apq[nz])
            sgn = np.where(theta >= 0.0, 1.0, -1.0)
            t[nz] = sgn / (np.abs(theta) + np.hypot(1.0, theta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            Ap = A[:, p]
            Aq = A[:, q]
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            Ap = A[p, :]
            Aq = A[q, :]
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp = V[:, p]
            Vq = V[:, q]
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
    return np.diag(A)[:n].copy(), V[:n, :n].copy(), sweeps


def gram_rank2_update(Lam, C, c, v, tau):
    """Woodbury update of ``(C^T C)^-1`` for ``C + c v^T``; None if singular."""
    u = C.T @ c
    s = c @ c
    a = Lam @ u
    b = Lam @ v
    # capacitance = W^-1 + U^T Lam U with U = [u v], W = [[0, 1], [1, s]]
    k11 = -s + u @ a
    k12 = 1.0 + u @ b
    k21 = 1.0 + v @ a
    k22 = v @ b
    # det(C'^T C') / det(C^T C) = -det; singular when det cancels to within tau
    # of its two products (a Frobenius-norm test misfires when ||c||^2 dwarfs v^T Lam v)
    det = k11 * k22 - k12 * k21
    if abs(det) <= tau * max(abs(k11 * k22), abs(k12 * k21)):
        return None
    i11 = k22 / det
    i12 = -k12 / det
    i21 = -k21 / det
    i22 = k11 / det
    return Lam - (
        i11 * np.outer(a, a) + i12 * np.outer(a, b) + i21 * np.outer(b, a) + i22 * np.outer(b, b)
    )


def pinv_rank1_update(C, P, c, v, tau):
    """Pseudo-inverse of ``C + c v^T`` from ``P = C^+`` (full column rank C).

    Two cases: ``c`` leaves the column space of ``C`` (always full rank
    afterwards), or ``c`` lies in it and the update is Sherman-Morrison
    like, singular when ``1 + v^T P c`` vanishes.  Returns None if singular.
    """
    Pc = P @ c
    w = c - C @ Pc
    beta = 1.0 + v @ Pc
    n = P.T @ v
    Pn = P @ n
    ww = w @ w
    if np.sqrt(ww) > tau * np.sqrt(c @ c):
        nn = n @ n
        D = ww * nn + beta * beta
        return P + np.outer(Pn, (beta / D) * w - (ww / D) * n) - np.outer(Pc, (nn / D) * w + (beta / D) * n)
    if abs(beta) <= tau:
        return None
    return P - np.outer(Pc, n / beta)


def stochastic_pass(C, inv, gram_mode, implicit, Y, etas, rates, tau):
    """Single-sample Krasulina-type steps without orthonormalisation.

    ``implicit`` selects the adaptive rate eta / (1 + eta ||x||^2); otherwise
    the raw eta is used (explicit unconstrained variant).
    """
    # contiguous columns: BLAS rounding must not depend on the caller's layout
    Y = np.asfortranarray(Y)
    n_samples = Y.shape[1]
    for i in range(n_samples):
        y = Y[:, i]
        eta = etas[i]
        if gram_mode:
            x = inv @ (C.T @ y)
        else:
            x = inv @ y
        r = C @ x - y
        rate = eta / (1.0 + eta * (x @ x)) if implicit else eta
        c = -rate * r
        if gram_mode:
            new_inv = gram_rank2_update(inv, C, c, x, tau)
        else:
            new_inv = pinv_rank1_update(C, inv, c, x, tau)
        if new_inv is None:
            return i, True
        C += np.outer(c, x)
        inv[...] = new_inv
        rates[i] = rate
    return n_samples, False


def orthonormal_pass(C, Y, etas, krasulina, tau):
    """Single-sample Oja (``krasulina=False``) or Krasulina steps with QR."""
    Y = np.asfortranarray(Y)
    n_samples = Y.shape[1]
    for i in range(n_samples):
        y = Y[:, i]
        x = C.T @ y
        if krasulina:
            Ct = C - etas[i] * np.outer(C @ x - y, x)
        else:
            Ct = C + etas[i] * np.outer(y, x)
        Q, _, fail = householder_qr(Ct, tau)
        if fail >= 0:
            return i, True
        C[...] = Q
    return n_samples, False

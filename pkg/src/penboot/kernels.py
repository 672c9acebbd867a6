"""Coordinate-descent kernels on the Gram form of penalized least squares.

All kernels minimise

    beta' G beta - 2 b' beta + n * sum_j P_j(|beta_j|)

with ``G = X'X`` and ``b = X'y``. Mode codes select the penalty:

* ``MODE_L1``   weighted l1, total weight ``w_j`` per coordinate (``n * P'_j``)
* ``MODE_SCAD`` SCAD with parameters ``lam``, ``a``
* ``MODE_MCP``  MCP with parameters ``lam``, ``a``

An infinite l1 weight pins the coordinate at zero.
"""
import numpy as np

from ._accel import jit

MODE_L1 = 0
MODE_SCAD = 1
MODE_MCP = 2


@jit
def soft_threshold(z, gamma):
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@jit
def scad_threshold(z, kappa, lam, a):
    """Minimiser of 0.5*(t - z)**2 + kappa*SCAD(|t|); needs a - 1 > kappa."""
    az = abs(z)
    if az <= kappa * lam:
        return 0.0
    s = 1.0 if z > 0 else -1.0
    if az <= (1.0 + kappa) * lam:
        return s * (az - kappa * lam)
    if az <= a * lam:
        return s * ((a - 1.0) * az - kappa * a * lam) / (a - 1.0 - kappa)
    return z


@jit
def mcp_threshold(z, kappa, lam, a):
    """Minimiser of 0.5*(t - z)**2 + kappa*MCP(|t|); needs a > kappa."""
    az = abs(z)
    if az <= kappa * lam:
        return 0.0
    if az <= a * lam:
        s = 1.0 if z > 0 else -1.0
        return s * (az - kappa * lam) / (1.0 - kappa / a)
    return z


@jit
def _polish_l1(G, b, w, beta):
    # Exact solve on the current sign pattern; kept only if it is a KKT point.
    p = b.shape[0]
    k = 0
    for j in range(p):
        if beta[j] != 0.0:
            k += 1
    if k == 0:
        return False
    idx = np.empty(k, dtype=np.int64)
    k = 0
    for j in range(p):
        if beta[j] != 0.0:
            idx[k] = j
            k += 1
    A = np.empty((k, k))
    rhs = np.empty(k)
    for r in range(k):
        jr = idx[r]
        sgn = 1.0 if beta[jr] > 0 else -1.0
        rhs[r] = b[jr] - 0.5 * w[jr] * sgn
        for c in range(k):
            A[r, c] = G[jr, idx[c]]
    x = np.linalg.solve(A, rhs)
    for r in range(k):
        if x[r] * beta[idx[r]] <= 0.0:
            return False
    scale = 0.0
    for j in range(p):
        scale = max(scale, abs(b[j]))
    for j in range(p):
        if beta[j] != 0.0:
            continue
        q = b[j]
        for r in range(k):
            q -= G[j, idx[r]] * x[r]
        if 2.0 * abs(q) > w[j] * (1.0 + 1e-9) + 1e-13 * (scale + 1.0):
            return False
    for r in range(k):
        beta[idx[r]] = x[r]
    return True


@jit
def cd_gram(G, b, nobs, mode, w, lam, a, beta, max_iters, tol):
    """Cyclic coordinate descent from ``beta`` (updated in place).

    Returns ``(sweeps, converged)``. Convergence means the largest coordinate
    change in a sweep fell below ``tol``; weighted-l1 solutions are then
    polished by an exact solve on the active sign pattern.
    """
    p = b.shape[0]
    q = b - G @ beta
    for it in range(max_iters):
        max_delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            z = (q[j] + gjj * beta[j]) / gjj
            if mode == MODE_L1:
                new = soft_threshold(z, 0.5 * w[j] / gjj)
            elif mode == MODE_SCAD:
                new = scad_threshold(z, 0.5 * nobs / gjj, lam, a)
            else:
                new = mcp_threshold(z, 0.5 * nobs / gjj, lam, a)
            delta = new - beta[j]
            if delta != 0.0:
                for k in range(p):
                    q[k] -= G[j, k] * delta
                beta[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            if mode == MODE_L1:
                _polish_l1(G, b, w, beta)
            return it + 1, True
    return max_iters, False


@jit
def cd_gram_batch(G, XtY, nobs, mode, W, lam, a, max_iters, tol):
    """Solve one problem per row of ``XtY`` (shape ``(B, p)``), all from zero.

    ``W`` is ``(B, p)`` or ``(1, p)`` (shared weights); ignored for SCAD/MCP.
    """
    nb, p = XtY.shape
    betas = np.zeros((nb, p))
    sweeps = np.zeros(nb, dtype=np.int64)
    conv = np.zeros(nb, dtype=np.bool_)
    shared = W.shape[0] == 1
    for i in range(nb):
        wi = W[0] if shared else W[i]
        beta = np.zeros(p)
        s, c = cd_gram(G, XtY[i].copy(), nobs, mode, wi, lam, a, beta, max_iters, tol)
        betas[i] = beta
        sweeps[i] = s
        conv[i] = c
    return betas, sweeps, conv


@jit
def rowwise_matvec(M, V):
    """``out[i] = M @ V[i]`` with a fixed summation order per row.

    Each row's result is independent of the other rows in the batch, which
    keeps replicate estimates bitwise stable under reordering.
    """
    nb, k = V.shape
    m = M.shape[0]
    out = np.zeros((nb, m))
    for i in range(nb):
        for r in range(m):
            acc = 0.0
            for c in range(k):
                acc += M[r, c] * V[i, c]
            out[i, r] = acc
    return out

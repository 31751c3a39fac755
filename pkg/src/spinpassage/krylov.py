"""Lanczos approximation of exp(-i dt H) v for real symmetric H."""

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .exceptions import ConvergenceError

MAX_KRYLOV_DIM = 30


def _exp_tridiagonal(a, b, dt):
    vals, vecs = eigh_tridiagonal(a, b) if len(a) > 1 else (a.copy(), np.ones((1, 1)))
    return vecs @ (np.exp(-1j * dt * vals) * vecs[0].conj())


def expm_krylov(matvec, v, dt, tol=1e-12, max_dim=MAX_KRYLOV_DIM):
    """exp(-i dt H) v with adaptive Krylov dimension and step splitting.

    ``matvec`` applies H.  Each substep grows the Lanczos basis (full
    reorthogonalization) until the a-posteriori error estimate
    ``beta * h_{m+1,m} * |[exp(-i dt T_m)]_{m,1}|`` is below ``tol``; if the
    estimate is still too large at ``max_dim`` the substep is halved.
    """
    w = np.asarray(v, dtype=complex)
    remaining = float(dt)
    step = remaining
    halvings = 0
    while remaining > 0:
        step = min(step, remaining)
        result, err = _lanczos_step(matvec, w, step, tol, max_dim)
        if err > tol:
            halvings += 1
            if halvings > 40:
                raise ConvergenceError("Krylov exponential failed to converge", residual=err)
            step /= 2
            continue
        w = result
        remaining -= step
    return w


def _lanczos_step(matvec, v, dt, tol, max_dim):
    beta0 = np.linalg.norm(v)
    if beta0 == 0.0:
        return v.copy(), 0.0
    dim = v.shape[0]
    m_max = min(max_dim, dim)
    basis = np.empty((m_max + 1, dim), dtype=complex)
    basis[0] = v / beta0
    a = np.empty(m_max)
    b = np.empty(m_max)
    err = np.inf
    for j in range(m_max):
        w = matvec(basis[j])
        a[j] = np.vdot(basis[j], w).real
        w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
        w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
        b[j] = np.linalg.norm(w)
        coeffs = _exp_tridiagonal(a[: j + 1], b[:j], dt)
        if b[j] < 1e-14 * max(1.0, abs(a[: j + 1]).max()):
            # invariant subspace: exact
            return beta0 * (basis[: j + 1].T @ coeffs), 0.0
        err = beta0 * b[j] * abs(coeffs[-1])
        if err < tol or j + 1 == m_max:
            if j + 1 == m_max and j + 1 == dim:
                err = 0.0
            return beta0 * (basis[: j + 1].T @ coeffs), err
        basis[j + 1] = w / b[j]
    return beta0 * (basis[:m_max].T @ coeffs), err

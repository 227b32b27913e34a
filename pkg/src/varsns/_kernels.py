"""Compiled trajectory kernel for mass-action networks.

Same arithmetic as the generic numpy path in :mod:`varsns.integrator`, fused
into one loop so that per-step interpreter overhead disappears. Results agree
with the numpy path to rounding, not bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Status codes returned by run_network.
OK = 0
NEWTON_FAILED = 1
NONFINITE_STATE = 2
SINGULAR = 3

_EPS = np.finfo(np.float64).eps


@njit(cache=True, nogil=True)
def _rhs(x, kappa, ridx, rord, theta, out):
    n = x.shape[0]
    nr = kappa.shape[0]
    out[:] = 0.0
    for j in range(nr):
        p = kappa[j]
        for m in range(ridx.shape[1]):
            i = ridx[j, m]
            if i < n:
                p *= x[i] ** rord[j, m]
        for r in range(n):
            t = theta[r, j]
            if t != 0.0:
                out[r] += t * p


@njit(cache=True, nogil=True)
def _jac(x, theta, ent_j, ent_i, ent_q, ent_coef, eidx, eord, out):
    n = x.shape[0]
    out[:, :] = 0.0
    for e in range(ent_j.shape[0]):
        i = ent_i[e]
        v = ent_coef[e] * x[i] ** (ent_q[e] - 1)
        for m in range(eidx.shape[1]):
            o = eidx[e, m]
            if o < n:
                v *= x[o] ** eord[e, m]
        j = ent_j[e]
        for r in range(n):
            t = theta[r, j]
            if t != 0.0:
                out[r, i] += t * v


@njit(cache=True, nogil=True)
def _newton_matrix(J1, J2, T, a, M):
    n = J1.shape[0]
    M[:, :] = 0.0
    for r in range(2 * n):
        M[r, r] = 1.0
    for r in range(n):
        for c in range(n):
            M[r, c] -= T * a[0, 0] * J1[r, c]
            M[r, n + c] -= T * a[0, 1] * J2[r, c]
            M[n + r, c] -= T * a[1, 0] * J1[r, c]
            M[n + r, n + c] -= T * a[1, 1] * J2[r, c]


@njit(cache=True, nogil=True)
def run_network(
    x0, steps, T, stage_tol, max_iters, with_phis, a,
    kappa, ridx, rord, theta, ent_j, ent_i, ent_q, ent_coef, eidx, eord,
):
    """Returns ``(states, phis, status, step_index, residual)``."""
    n = x0.shape[0]
    states = np.empty((steps, n))
    states[0] = x0
    phis = np.empty((steps if with_phis else 1, n, n))
    phis[0] = np.eye(n)
    z1 = np.empty(n)
    z2 = np.empty(n)
    f1 = np.empty(n)
    f2 = np.empty(n)
    J1 = np.empty((n, n))
    J2 = np.empty((n, n))
    M = np.empty((2 * n, 2 * n))
    g = np.empty(2 * n)
    eye2 = np.zeros((2 * n, n))
    for r in range(n):
        eye2[r, r] = 1.0
        eye2[n + r, r] = 1.0
    residual = np.inf
    for k in range(steps - 1):
        x = states[k]
        z1[:] = x
        z2[:] = x
        small_update = False
        done = False
        for it in range(max_iters + 1):
            _rhs(z1, kappa, ridx, rord, theta, f1)
            _rhs(z2, kappa, ridx, rord, theta, f2)
            residual = 0.0
            for r in range(n):
                g[r] = z1[r] - x[r] - T * (a[0, 0] * f1[r] + a[0, 1] * f2[r])
                g[n + r] = z2[r] - x[r] - T * (a[1, 0] * f1[r] + a[1, 1] * f2[r])
            finite = True
            for r in range(2 * n):
                v = abs(g[r])
                if not np.isfinite(v):
                    finite = False
                elif v > residual:
                    residual = v
            if not finite:
                residual = np.inf
            if residual <= stage_tol or (small_update and finite):
                done = True
                break
            if it == max_iters or not finite:
                break
            _jac(z1, theta, ent_j, ent_i, ent_q, ent_coef, eidx, eord, J1)
            _jac(z2, theta, ent_j, ent_i, ent_q, ent_coef, eidx, eord, J2)
            _newton_matrix(J1, J2, T, a, M)
            dz = np.linalg.solve(M, -g)
            big = 0.0
            zmax = 1.0
            for r in range(n):
                z1[r] += dz[r]
                z2[r] += dz[n + r]
            for r in range(2 * n):
                if not np.isfinite(dz[r]):
                    return states, phis, SINGULAR, k, residual
                big = max(big, abs(dz[r]))
            for r in range(n):
                zmax = max(zmax, abs(z1[r]), abs(z2[r]))
            small_update = big <= 8.0 * _EPS * zmax
        if not done:
            return states, phis, NEWTON_FAILED, k, residual
        nxt = states[k + 1]
        for r in range(n):
            nxt[r] = x[r] + (T / 4.0) * (f1[r] + 3.0 * f2[r])
            if not np.isfinite(nxt[r]):
                return states, phis, NONFINITE_STATE, k + 1, residual
        if with_phis:
            _jac(z1, theta, ent_j, ent_i, ent_q, ent_coef, eidx, eord, J1)
            _jac(z2, theta, ent_j, ent_i, ent_q, ent_coef, eidx, eord, J2)
            _newton_matrix(J1, J2, T, a, M)
            dZ = np.linalg.solve(M, eye2)
            for r in range(2 * n):
                for c in range(n):
                    if not np.isfinite(dZ[r, c]):
                        return states, phis, SINGULAR, k, residual
            step_phi = (T / 4.0) * (J1 @ np.ascontiguousarray(dZ[:n]) + 3.0 * (J2 @ np.ascontiguousarray(dZ[n:])))
            for r in range(n):
                step_phi[r, r] += 1.0
            phis[k + 1] = step_phi @ phis[k]
    return states, phis, OK, -1, residual

"""Numba kernel for the Huser-Wadsworth inner minimisation.

Optional: :mod:`geomx.gauges` falls back to a vectorised numpy search
when numba is missing. Both paths run the same coarse-scan plus
golden-section scheme to the same absolute tolerance.
"""

from __future__ import annotations

import numpy as np
from numba import njit

N_SCAN = 13


@njit(cache=True)
def _objective(s, x, S, zeta, inv_nu, half_nu, shifted, arg):
    d = x.shape[0]
    for j in range(d):
        a = zeta * (x[j] - s) if shifted else x[j] - zeta * s
        if a < 0.0:
            a = 0.0
        arg[j] = a
    q = 0.0
    if inv_nu == 0.5:
        for j in range(d):
            yj = np.sqrt(arg[j])
            row = 0.0
            for k in range(d):
                row += S[j, k] * np.sqrt(arg[k])
            q += yj * row
        if q < 0.0:
            q = 0.0
        return s + q
    for j in range(d):
        yj = arg[j] ** inv_nu
        row = 0.0
        for k in range(d):
            row += S[j, k] * (arg[k] ** inv_nu)
        q += yj * row
    if q < 0.0:
        q = 0.0
    return s + q**half_nu


@njit(cache=True)
def hw_values(S, X, zeta, inv_nu, half_nu, tol, maxiter):
    """Minimum of ``s + g_inner(arg(s))`` over the mixing coordinate.

    Returns the per-row minima and a flag that is nonzero if any row
    missed the golden-section tolerance within ``maxiter`` iterations.
    """
    n, d = X.shape
    out = np.empty(n)
    arg = np.empty(d)
    shifted = zeta > 1.0
    invphi = 0.6180339887498949
    invphi2 = 1.0 - invphi
    failed = 0
    for i in range(n):
        x = X[i]
        xmin = x[0]
        for j in range(1, d):
            if x[j] < xmin:
                xmin = x[j]
        hi = xmin if shifted else xmin / zeta
        if hi <= 0.0:
            out[i] = _objective(0.0, x, S, zeta, inv_nu, half_nu, shifted, arg)
            continue
        step = hi / (N_SCAN - 1)
        best_v = 1e308
        best_j = 0
        end_v = 1e308
        for j in range(N_SCAN):
            v = _objective(step * j, x, S, zeta, inv_nu, half_nu, shifted, arg)
            if v < best_v:
                best_v = v
                best_j = j
            if (j == 0 or j == N_SCAN - 1) and v < end_v:
                end_v = v
        a = step * (best_j - 1) if best_j > 0 else 0.0
        b = step * (best_j + 1) if best_j < N_SCAN - 1 else hi
        h = b - a
        x1 = a + invphi2 * h
        x2 = a + invphi * h
        f1 = _objective(x1, x, S, zeta, inv_nu, half_nu, shifted, arg)
        f2 = _objective(x2, x, S, zeta, inv_nu, half_nu, shifted, arg)
        ok = False
        for _ in range(maxiter):
            if h <= tol:
                ok = True
                break
            if f1 < f2:
                b = x2
                h = b - a
                x2 = x1
                f2 = f1
                x1 = a + invphi2 * h
                f1 = _objective(x1, x, S, zeta, inv_nu, half_nu, shifted, arg)
            else:
                a = x1
                h = b - a
                x1 = x2
                f1 = f2
                x2 = a + invphi * h
                f2 = _objective(x2, x, S, zeta, inv_nu, half_nu, shifted, arg)
        if not ok:
            failed = 1
        v = f1 if f1 < f2 else f2
        if end_v < v:
            v = end_v
        out[i] = v
    return out, failed

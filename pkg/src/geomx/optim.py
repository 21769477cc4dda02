"""Unconstrained parameter transforms and multistart Nelder-Mead.

All likelihood fits in the package run derivative-free on transformed
coordinates: log scale for positive parameters, a scaled logistic for
the smoothness ``kappa`` on (0, 2], and a softplus for the mixing
parameter ``zeta`` which may sit exactly at zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import OptimizationFailed

FATOL = 1e-8
MAXFEV = 2000
N_STARTS = 5
ZETA_FLOOR = 1e-8


def _softplus(t):
    return np.where(t > 30.0, t, np.log1p(np.exp(np.minimum(t, 30.0))))


def _inv_softplus(z):
    z = max(z, ZETA_FLOOR)
    return z + np.log(-np.expm1(-z)) if z < 30.0 else z


def to_natural(t: float, kind: str) -> float:
    if kind == "log":
        return float(np.exp(t))
    if kind == "kappa":
        return float(2.0 / (1.0 + np.exp(-t)))
    if kind == "softplus":
        return float(_softplus(t))
    raise ValueError(f"unknown transform {kind!r}")


def to_unconstrained(x: float, kind: str) -> float:
    if kind == "log":
        return float(np.log(x))
    if kind == "kappa":
        x = min(x, 2.0 - 1e-12)
        return float(np.log(x / (2.0 - x)))
    if kind == "softplus":
        return float(_inv_softplus(x))
    raise ValueError(f"unknown transform {kind!r}")


@dataclass(frozen=True)
class FitParam:
    """One free parameter: its transform and a natural-scale start range."""

    name: str
    kind: str
    lo: float
    hi: float


@dataclass
class FitResult:
    params: dict[str, float]
    fun: float
    n_eval: int
    n_starts_ok: int
    trace: list


def multistart_minimize(
    objective,
    params: list[FitParam],
    seed: int = 0,
    n_starts: int = N_STARTS,
    fatol: float = FATOL,
    maxfev: int = MAXFEV,
) -> FitResult:
    """Minimise ``objective(dict)`` from Latin hypercube starts.

    ``objective`` receives natural-scale parameters and may return
    ``inf`` for infeasible points. Raises :class:`OptimizationFailed`
    with a per-start trace if no start reaches a finite optimum.
    """
    names = [p.name for p in params]
    kinds = [p.kind for p in params]
    lo_t = np.array([to_unconstrained(p.lo, p.kind) for p in params])
    hi_t = np.array([to_unconstrained(p.hi, p.kind) for p in params])

    sampler = qmc.LatinHypercube(d=len(params), seed=seed)
    unit = sampler.random(n_starts)
    starts = lo_t + unit * (hi_t - lo_t)

    def wrapped(t):
        natural = {n: to_natural(ti, k) for n, ti, k in zip(names, t, kinds)}
        val = objective(natural)
        return val if np.isfinite(val) else np.inf

    best = None
    trace = []
    total_eval = 0
    ok = 0
    for x0 in starts:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = minimize(
                    wrapped,
                    x0,
                    method="Nelder-Mead",
                    options={"fatol": fatol, "xatol": 1e-6, "maxfev": maxfev, "maxiter": maxfev},
                )
        except Exception as exc:  # noqa: BLE001 - recorded per start
            trace.append({"x0": list(x0), "error": repr(exc)})
            continue
        total_eval += res.nfev
        trace.append({"x0": list(x0), "fun": float(res.fun), "nfev": res.nfev, "status": res.status})
        if np.isfinite(res.fun):
            ok += 1
            if best is None or res.fun < best.fun:
                best = res
    if best is None:
        raise OptimizationFailed("no optimizer start reached a finite objective", trace=trace)
    values = {n: to_natural(ti, k) for n, ti, k in zip(names, best.x, kinds)}
    return FitResult(params=values, fun=float(best.fun), n_eval=total_eval, n_starts_ok=ok, trace=trace)

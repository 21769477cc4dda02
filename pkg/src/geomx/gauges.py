"""Spatially parameterised gauge functions and their score derivatives.

Five families are supported, keyed by short tags:

``G``
    Gaussian, ``g(x) = sqrt(x)' S sqrt(x)`` with ``S`` the inverse
    correlation matrix.
``L``
    Laplace, ``g(x) = (x' S x) ** 0.5``.
``GG``
    Generalised Gaussian, ``g(x) = ((x**(1/nu))' S x**(1/nu)) ** (nu/2)``;
    recovers ``G`` at ``nu=2`` and ``L`` at ``nu=1``.
``HW_G`` / ``HW_GG``
    Huser-Wadsworth mixtures with a Gaussian or generalised Gaussian
    inner gauge; evaluation requires a one-dimensional minimisation over
    the mixing coordinate, done numerically.

All gauges are 1-homogeneous and strictly positive on the positive
orthant. Components equal to zero are allowed and evaluated by
continuity; negative components raise :class:`DomainError`.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .domain import CorrelationSpec, SpatialDomain, powered_exp_corr
from .errors import DomainError, NumericalError, Unsupported

try:
    from ._hwfast import hw_values as _hw_values_jit
except ImportError:  # pragma: no cover - numba not installed
    _hw_values_jit = None

FAMILIES = ("G", "L", "GG", "HW_G", "HW_GG")

# free parameters per family: (lam, kappa) plus nu and/or zeta
_PARAM_COUNT = {"G": 2, "L": 2, "GG": 3, "HW_G": 3, "HW_GG": 4}

_INNER_NU = {"HW_G": 2.0, "HW_GG": None}  # None: taken from spec.nu

HW_INNER_TOL = 1e-8
HW_INNER_MAXITER = 200
ZETA_WARN_LEVEL = 1e3


@dataclass(frozen=True)
class GaugeSpec:
    """A gauge family tag with its parameter vector."""

    family: str
    corr: CorrelationSpec
    nu: float | None = None
    zeta: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown gauge family {self.family!r}")
        needs_nu = self.family in ("GG", "HW_GG")
        needs_zeta = self.family in ("HW_G", "HW_GG")
        if needs_nu:
            if self.nu is None or not self.nu > 0:
                raise ValueError(f"family {self.family} requires nu > 0")
        elif self.nu is not None:
            raise ValueError(f"family {self.family} takes no nu parameter")
        if needs_zeta:
            if self.zeta is None or self.zeta < 0:
                raise ValueError(f"family {self.family} requires zeta >= 0")
        elif self.zeta is not None:
            raise ValueError(f"family {self.family} takes no zeta parameter")

    @property
    def param_count(self) -> int:
        return _PARAM_COUNT[self.family]


@dataclass(frozen=True)
class GaugeContext:
    """A gauge bound to the inverse correlation of one site subset."""

    spec: GaugeSpec
    sigma_inv: np.ndarray
    pattern: tuple[int, ...] | None = None

    @property
    def dim(self) -> int:
        return self.sigma_inv.shape[0]


def make_context(spec: GaugeSpec, domain: SpatialDomain, pattern=None) -> GaugeContext:
    """Build a :class:`GaugeContext` for a site subset of ``domain``."""
    if pattern is None:
        h = domain.H
        key = None
    else:
        key = tuple(int(i) for i in pattern)
        h = domain.sub_distances(key)
    corrmat = powered_exp_corr(h, spec.corr)
    return GaugeContext(spec=spec, sigma_inv=corrmat.inv, pattern=key)


class PatternContextCache:
    """LRU cache of gauge contexts keyed by sorted site-index tuples.

    Thread-safe for concurrent lookup and insert; one instance serves a
    single (gauge spec, domain) combination.
    """

    def __init__(self, spec: GaugeSpec, domain: SpatialDomain, maxsize: int = 4096):
        self.spec = spec
        self.domain = domain
        self.maxsize = maxsize
        self._entries: OrderedDict[tuple, GaugeContext] = OrderedDict()
        self._lock = threading.Lock()

    def context(self, pattern=None) -> GaugeContext:
        key = () if pattern is None else tuple(int(i) for i in pattern)
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
                return self._entries[key]
        ctx = make_context(self.spec, self.domain, pattern)
        with self._lock:
            self._entries[key] = ctx
            if len(self._entries) > self.maxsize:
                self._entries.popitem(last=False)
        return ctx


def _quad_form(sigma_inv: np.ndarray, Y: np.ndarray) -> np.ndarray:
    q = np.einsum("ij,jk,ik->i", Y, sigma_inv, Y)
    # PD quadratic form; clip fp noise at the boundary
    return np.maximum(q, 0.0)


def _gg_batch(sigma_inv: np.ndarray, X: np.ndarray, nu: float) -> np.ndarray:
    if nu == 2.0:
        return _quad_form(sigma_inv, np.sqrt(X))
    if nu == 1.0:
        return np.sqrt(_quad_form(sigma_inv, X))
    return _quad_form(sigma_inv, X ** (1.0 / nu)) ** (nu / 2.0)


def _golden_minimize(f_batch, hi: np.ndarray):
    """Vectorised bounded scalar minimisation of ``f_batch`` on [0, hi].

    A 13-point coarse scan brackets the minimum, then golden-section
    iterations shrink every bracket below ``HW_INNER_TOL``.
    """
    n_scan = 13
    fracs = np.linspace(0.0, 1.0, n_scan)
    scan_s = hi[None, :] * fracs[:, None]
    scan_f = np.stack([f_batch(scan_s[i]) for i in range(n_scan)])
    best = np.argmin(scan_f, axis=0)
    a = hi * fracs[np.maximum(best - 1, 0)]
    b = hi * fracs[np.minimum(best + 1, n_scan - 1)]

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    invphi2 = 1.0 - invphi
    h = b - a
    x1 = a + invphi2 * h
    x2 = a + invphi * h
    f1 = f_batch(x1)
    f2 = f_batch(x2)
    for _ in range(HW_INNER_MAXITER):
        if np.all(h <= HW_INNER_TOL):
            break
        left = f1 < f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        h = b - a
        x_new = np.where(left, a + invphi2 * h, a + invphi * h)
        f_new = f_batch(x_new)
        x1, f1, x2, f2 = (
            np.where(left, x_new, x2),
            np.where(left, f_new, f2),
            np.where(left, x1, x_new),
            np.where(left, f1, f_new),
        )
    else:
        raise NumericalError(
            f"inner gauge minimisation missed tolerance {HW_INNER_TOL} "
            f"after {HW_INNER_MAXITER} iterations"
        )
    vals = np.minimum(f1, f2)
    # endpoints were part of the coarse scan; keep whichever is lowest
    return np.minimum(vals, np.minimum(scan_f[0], scan_f[-1]))


def _hw_batch(sigma_inv: np.ndarray, X: np.ndarray, zeta: float, inner_nu: float) -> np.ndarray:
    def inner(Y):
        return _gg_batch(sigma_inv, Y, inner_nu)

    if zeta == 0.0:
        return inner(X)
    xmin = X.min(axis=1)
    if zeta <= 1.0:
        hi = xmin / zeta

        def objective(s):
            return s + inner(np.maximum(X - zeta * s[:, None], 0.0))

    else:
        hi = xmin

        def objective(s):
            return s + inner(np.maximum(zeta * (X - s[:, None]), 0.0))

    return _golden_minimize(objective, hi)


def _eval_batch(ctx: GaugeContext, X: np.ndarray) -> np.ndarray:
    family = ctx.spec.family
    if family == "G":
        return _gg_batch(ctx.sigma_inv, X, 2.0)
    if family == "L":
        return _gg_batch(ctx.sigma_inv, X, 1.0)
    if family == "GG":
        return _gg_batch(ctx.sigma_inv, X, ctx.spec.nu)
    inner_nu = 2.0 if family == "HW_G" else ctx.spec.nu
    return _hw_batch(ctx.sigma_inv, X, ctx.spec.zeta, inner_nu)


def gauge_eval(ctx: GaugeContext, x):
    """Evaluate the gauge at one point (``(d,)``) or a batch (``(n, d)``).

    Raises
    ------
    DomainError
        If any component is negative.
    NumericalError
        If the Huser-Wadsworth inner minimisation does not converge.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != ctx.dim:
        raise ValueError(f"expected dimension {ctx.dim}, got {X.shape[1]}")
    if np.any(X < 0.0):
        raise DomainError("gauge arguments must be non-negative")
    if not np.all(np.isfinite(X)):
        raise DomainError("gauge arguments must be finite")
    vals = _eval_batch(ctx, X)
    return float(vals[0]) if single else vals


def gauge_score_terms(ctx: GaugeContext, v):
    """Gradient and diagonal Hessian of the unnormalised ALR log-density.

    For the generalised Gaussian gauge the log-density of the
    additive-log-ratio transformed angle is
    ``log p(v) = -dim * log g(exp(v)) + sum(v[:dim-1])`` with the last
    coordinate pinned at zero. Returns ``(grad, diag_hess)``, each of
    shape ``(dim-1,)`` for a single point or ``(n, dim-1)`` for a batch.
    """
    if ctx.spec.family != "GG":
        raise Unsupported("score terms are defined for the GG family only")
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = np.atleast_2d(v)
    d = ctx.dim
    if V.shape[1] != d - 1:
        raise ValueError(f"expected {d - 1} ALR coordinates, got {V.shape[1]}")
    if not np.all(np.isfinite(V)):
        raise DomainError("ALR coordinates must be finite")

    nu = ctx.spec.nu
    S = ctx.sigma_inv
    U = np.exp(np.hstack([V, np.zeros((V.shape[0], 1))]) / nu)
    M = U @ S
    Q = np.einsum("ij,ij->i", U, M)[:, None]
    UM = U * M
    grad = -d * UM / Q + 1.0
    diag_hess = -(d / nu) * U * (np.diag(S)[None, :] * U + M) / Q + (2.0 * d / nu) * (UM / Q) ** 2
    grad, diag_hess = grad[:, : d - 1], diag_hess[:, : d - 1]
    if single:
        return grad[0], diag_hess[0]
    return grad, diag_hess


def bivariate_gauge_projection(spec: GaugeSpec, domain: SpatialDomain, pair) -> GaugeContext:
    """Project a Gaussian gauge onto a coordinate pair.

    The projection is the two-dimensional Gaussian gauge with the same
    correlation parameters evaluated at the pair's distance.
    """
    if spec.family != "G":
        raise Unsupported("bivariate projection is defined for the Gaussian gauge only")
    j, k = (int(i) for i in pair)
    return make_context(spec, domain, pattern=(j, k))


def bivariate_gaussian_gauge(w1, rho, one_m_rho=None):
    """Gaussian gauge of a bivariate angle ``(w1, 1 - w1)``.

    Written as ``((1 - rho) + rho * (sqrt(w1) - sqrt(w2))**2) /
    ((1 - rho) * (1 + rho))`` to stay accurate as ``rho -> 1``.
    """
    w1 = np.asarray(w1, dtype=float)
    if one_m_rho is None:
        one_m_rho = 1.0 - rho
    w2 = 1.0 - w1
    gap = (np.sqrt(w1) - np.sqrt(w2)) ** 2
    return (one_m_rho + rho * gap) / (one_m_rho * (1.0 + rho))

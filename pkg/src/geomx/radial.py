"""Radial threshold calibration and truncated-gamma exceedance fitting.

The workflow is: pairwise moving-window thresholds feed a composite
likelihood that pins down a Gaussian gauge ``(lam_pw, kappa_pw)``; a
per-dimension constant ``C_tau`` is then calibrated so the angle-scaled
threshold ``r0(w) = C_tau / g(w)`` is exceeded by a ``1 - tau`` fraction
of radii; finally the truncated gamma model is fitted above ``r0`` for
each candidate gauge family, with the gamma shape a multiple ``alpha``
of the per-row dimension, and compared by AIC.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import truncgamma as tg
from .domain import CorrelationSpec, SpatialDomain
from .errors import (
    InsufficientData,
    NonFiniteLikelihood,
    NotPositiveDefinite,
    NoViableModel,
)
from .gauges import (
    FAMILIES,
    GaugeContext,
    GaugeSpec,
    PatternContextCache,
    _eval_batch,
    bivariate_gaussian_gauge,
    make_context,
)
from .margins import DataMatrix, PolarData
from .optim import FitParam, multistart_minimize

FAMILY_ORDER = {fam: i for i, fam in enumerate(FAMILIES)}

MIN_PAIR_POINTS = 200
WINDOW_FRACTION = 0.2
MIN_WINDOW = 50
MIN_STRATUM = 20
MIN_EXCEEDANCES = 50
PAIR_SUBSET_DIM = 12

KAPPA_RANGE = (0.2, 2.0)
NU_RANGE = (0.3, 4.0)
ZETA_RANGE = (1e-8, 3.0)
ALPHA_RANGE = (0.2, 2.0)


def _lambda_range(H: np.ndarray) -> tuple[float, float]:
    off = H[~np.eye(H.shape[0], dtype=bool)]
    return 0.1 * float(np.median(off)), 10.0 * float(off.max())


@dataclass(frozen=True)
class PairwiseFit:
    """Composite-likelihood estimate of the threshold gauge."""

    corr: CorrelationSpec
    alpha_pw: float
    loglik: float
    n_pairs: int
    n_exceed: int


@dataclass
class ThresholdModel:
    """Angle-dependent radial threshold ``r0(w) = C_tau(dim) / g(w)``."""

    corr_pw: CorrelationSpec
    alpha_pw: float
    c_tau: dict[int, float]
    tau: float
    domain: SpatialDomain
    _cache: PatternContextCache | None = field(default=None, repr=False)

    def _gauge_cache(self) -> PatternContextCache:
        if self._cache is None:
            self._cache = PatternContextCache(GaugeSpec("G", self.corr_pw), self.domain)
        return self._cache

    def c_for_dim(self, dim: int) -> float:
        if dim in self.c_tau:
            return self.c_tau[dim]
        nearest = min(self.c_tau, key=lambda d: (abs(d - dim), d))
        return self.c_tau[nearest]

    def gauge_pw(self, W, pattern=None) -> np.ndarray:
        """Pairwise-fitted Gaussian gauge at angle rows ``W``."""
        ctx = self._gauge_cache().context(pattern)
        return _eval_batch(ctx, np.atleast_2d(np.asarray(W, dtype=float)))

    def r0(self, w, pattern=None) -> float:
        w = np.asarray(w, dtype=float)
        dim = w.shape[-1]
        return float(self.c_for_dim(dim) / self.gauge_pw(w, pattern)[0])

    def thresholds(self, polar: PolarData) -> np.ndarray:
        """Threshold ``r0`` for every sample, aligned with ``polar.samples``."""
        out = np.empty(polar.n)
        for pattern, (idx, _r, W) in polar.group_by_pattern().items():
            g = self.gauge_pw(W, pattern)
            out[idx] = self.c_for_dim(len(pattern)) / g
        return out

    def exceedance_mask(self, polar: PolarData) -> np.ndarray:
        return polar.radii() > self.thresholds(polar)


@dataclass(frozen=True)
class RadialFit:
    """A fitted truncated-gamma radial model for one gauge family."""

    spec: GaugeSpec
    alpha: float
    loglik: float
    aic: float
    n_exceed: int


def pairwise_threshold(r: np.ndarray, w1: np.ndarray, tau: float) -> np.ndarray:
    """Moving-window empirical ``tau``-quantile of ``r`` along the angle.

    For each observation the window holds the nearest 20% of points by
    angular distance (at least 50); the threshold curve is evaluated at
    the data angles themselves.
    """
    r = np.asarray(r, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    n = len(r)
    if n < MIN_PAIR_POINTS:
        raise InsufficientData(f"pairwise threshold needs >= {MIN_PAIR_POINTS} points, got {n}")
    m = max(MIN_WINDOW, int(np.ceil(WINDOW_FRACTION * n)))
    out = np.empty(n)
    chunk = max(1, int(2**22) // n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dist = np.abs(w1[start:stop, None] - w1[None, :])
        nearest = np.argpartition(dist, m - 1, axis=1)[:, :m]
        out[start:stop] = np.quantile(r[nearest], tau, axis=1)
    return out


def all_pairs(d: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(d), 2))


def default_pair_subset(domain: SpatialDomain, seed: int = 0) -> list[tuple[int, int]]:
    """Every pair for small dimension; for ``d > 12`` the nearest 40% of
    pairs by distance plus a seeded random 30% of the rest."""
    pairs = all_pairs(domain.dim)
    if domain.dim <= PAIR_SUBSET_DIM:
        return pairs
    dists = np.array([domain.H[j, k] for j, k in pairs])
    order = np.argsort(dists)
    n_near = int(np.ceil(0.4 * len(pairs)))
    keep = list(order[:n_near])
    rest = order[n_near:]
    rng = np.random.default_rng(seed)
    n_extra = int(np.ceil(0.3 * len(rest)))
    keep.extend(rng.choice(rest, size=n_extra, replace=False))
    return [pairs[i] for i in sorted(keep)]


def _pair_exceedances(values: np.ndarray, j: int, k: int, tau: float):
    both = ~(np.isnan(values[:, j]) | np.isnan(values[:, k]))
    xj, xk = values[both, j], values[both, k]
    r = xj + xk
    w1 = xj / r
    thr = pairwise_threshold(r, w1, tau)
    keep = r > thr
    return r[keep], w1[keep], thr[keep]


def fit_composite_gaussian(
    data: DataMatrix,
    domain: SpatialDomain,
    tau: float,
    pair_subset: list[tuple[int, int]] | None = None,
    seed: int = 0,
) -> PairwiseFit:
    """Fit the pairwise truncated-gamma composite likelihood.

    The gamma rate is the bivariate Gaussian gauge at each pair's
    distance and the shape is ``2 * alpha_pw``; thresholds come from
    :func:`pairwise_threshold`. Returns the best of five Nelder-Mead
    starts on ``(log lam, logit(kappa/2), log alpha)``.
    """
    if pair_subset is None:
        pair_subset = default_pair_subset(domain, seed)
    if not pair_subset:
        raise ValueError("pair_subset must be nonempty")
    for j, k in pair_subset:
        if domain.H[j, k] <= 0.0:
            raise NotPositiveDefinite(
                f"pair ({j}, {k}) has zero distance: correlation 1", minor_index=2
            )

    prepared = []
    for j, k in pair_subset:
        r, w1, thr = _pair_exceedances(data.values, j, k, tau)
        prepared.append((float(domain.H[j, k]), r, w1, thr))
    n_exceed = sum(len(r) for _h, r, _w, _t in prepared)

    def objective(p):
        corr = CorrelationSpec(p["lam"], p["kappa"])
        a = 2.0 * p["alpha"]
        nll = 0.0
        for h, r, w1, thr in prepared:
            rho = float(corr.rho(h))
            one_m = float(corr.one_minus_rho(h))
            g = bivariate_gaussian_gauge(w1, rho, one_m)
            ll = tg.log_density(r, a, g) - tg.log_survival(thr, a, g)
            total = ll.sum()
            if not np.isfinite(total):
                return np.inf
            nll -= total
        return nll

    lam_lo, lam_hi = _lambda_range(domain.H)
    params = [
        FitParam("lam", "log", lam_lo, lam_hi),
        FitParam("kappa", "kappa", *KAPPA_RANGE),
        FitParam("alpha", "log", *ALPHA_RANGE),
    ]
    res = multistart_minimize(objective, params, seed=seed)
    return PairwiseFit(
        corr=CorrelationSpec(res.params["lam"], res.params["kappa"]),
        alpha_pw=res.params["alpha"],
        loglik=-res.fun,
        n_pairs=len(pair_subset),
        n_exceed=n_exceed,
    )


def _merge_small_strata(by_dim: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    dims = sorted(by_dim)
    merged = dict(by_dim)
    for d in dims:
        if d in merged and len(merged[d]) < MIN_STRATUM and len(merged) > 1:
            others = [o for o in merged if o != d]
            target = min(others, key=lambda o: (abs(o - d), o))
            warnings.warn(
                f"dimension stratum {d} has {len(merged[d])} points; merged into stratum {target}",
                stacklevel=2,
            )
            merged[target] = np.concatenate([merged[target], merged.pop(d)])
    return merged


def _bisect_c(t: np.ndarray, tau: float) -> float:
    """Largest exceedance proportion not above ``1 - tau`` on a step function."""
    if tau == 0.0:
        return 0.0
    target = 1.0 - tau
    lo, hi = 0.0, float(t.max())
    if np.mean(t > lo) <= target:
        return lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.mean(t > mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def calibrate_Ctau(
    polar: PolarData, pairwise: PairwiseFit, tau: float, domain: SpatialDomain
) -> ThresholdModel:
    """Calibrate ``C_tau`` per dimension stratum by bisection.

    Within each stratum the exceedance proportion of ``r0(w) = C / g(w)``
    becomes the largest value not exceeding ``1 - tau``; strata with
    fewer than 20 points are merged into the nearest dimension first.
    """
    if not 0.0 <= tau < 1.0:
        raise ValueError("tau must lie in [0, 1)")
    model = ThresholdModel(
        corr_pw=pairwise.corr, alpha_pw=pairwise.alpha_pw, c_tau={}, tau=tau, domain=domain
    )
    by_dim: dict[int, list[np.ndarray]] = {}
    for pattern, (_idx, r, W) in polar.group_by_pattern().items():
        t = r * model.gauge_pw(W, pattern)
        by_dim.setdefault(len(pattern), []).append(t)
    stacked = {d: np.concatenate(parts) for d, parts in by_dim.items()}
    merged = _merge_small_strata(stacked)
    model.c_tau = {d: _bisect_c(t, tau) for d, t in merged.items()}
    return model


def _family_params(family: str, domain: SpatialDomain) -> list[FitParam]:
    lam_lo, lam_hi = _lambda_range(domain.H)
    params = [FitParam("lam", "log", lam_lo, lam_hi), FitParam("kappa", "kappa", *KAPPA_RANGE)]
    if family in ("GG", "HW_GG"):
        params.append(FitParam("nu", "log", *NU_RANGE))
    if family in ("HW_G", "HW_GG"):
        params.append(FitParam("zeta", "softplus", *ZETA_RANGE))
    params.append(FitParam("alpha", "log", *ALPHA_RANGE))
    return params


def _build_spec(family: str, p: dict[str, float]) -> GaugeSpec:
    return GaugeSpec(
        family,
        CorrelationSpec(p["lam"], p["kappa"]),
        nu=p.get("nu"),
        zeta=p.get("zeta"),
    )


def fit_radial(
    polar: PolarData,
    threshold: ThresholdModel,
    family: str,
    seed: int = 0,
    n_starts: int = 5,
) -> RadialFit:
    """Fit the truncated-gamma radial model for one gauge family.

    The likelihood runs over threshold exceedances with gamma shape
    ``alpha * dim_i`` and rate ``g(w_i)``, the survival term evaluated at
    each row's own threshold; rows are grouped by missingness pattern so
    one inverse correlation serves each unique site subset.
    """
    domain = threshold.domain
    thr = threshold.thresholds(polar)
    radii = polar.radii()
    exceed = np.flatnonzero(radii > thr)
    if len(exceed) < MIN_EXCEEDANCES:
        raise InsufficientData(
            f"radial fit needs >= {MIN_EXCEEDANCES} exceedances, got {len(exceed)}"
        )
    sub = polar.subset(exceed)
    groups = [
        (pattern, r, W, thr[exceed][idx], float(len(pattern)))
        for pattern, (idx, r, W) in sub.group_by_pattern().items()
    ]

    def objective(p):
        try:
            spec = _build_spec(family, p)
        except ValueError:
            return np.inf
        alpha = p["alpha"]
        nll = 0.0
        for pattern, r, W, r0, dim in groups:
            try:
                ctx = make_context(spec, domain, pattern if len(pattern) < domain.dim else None)
            except NotPositiveDefinite:
                return np.inf
            g = _eval_batch(ctx, W)
            a = alpha * dim
            ll = tg.log_density(r, a, g) - tg.log_survival(r0, a, g)
            total = ll.sum()
            if not np.isfinite(total):
                return np.inf
            nll -= total
        return nll

    res = multistart_minimize(objective, _family_params(family, domain), seed=seed, n_starts=n_starts)
    spec = _build_spec(family, res.params)
    alpha = res.params["alpha"]

    # strict re-evaluation at the optimum: pin down any non-finite term
    loglik = 0.0
    for pattern, r, W, r0, dim in groups:
        ctx = make_context(spec, domain, pattern if len(pattern) < domain.dim else None)
        g = _eval_batch(ctx, W)
        ll = tg.log_density(r, alpha * dim, g) - tg.log_survival(r0, alpha * dim, g)
        bad = np.flatnonzero(~np.isfinite(ll))
        if bad.size:
            raise NonFiniteLikelihood(
                "non-finite likelihood term at the fitted parameters",
                obs_index=int(bad[0]),
            )
        loglik += float(ll.sum())

    aic = 2.0 * (spec.param_count + 1) - 2.0 * loglik
    return RadialFit(spec=spec, alpha=alpha, loglik=loglik, aic=aic, n_exceed=len(exceed))


def select_model(fits: list[RadialFit]) -> RadialFit:
    """Minimum-AIC fit; ties broken by parameter count, then family order."""
    if not fits:
        raise NoViableModel("no successful radial fit to select from")
    return min(fits, key=lambda f: (f.aic, f.spec.param_count, FAMILY_ORDER[f.spec.family]))


@dataclass(frozen=True)
class PPSeries:
    """Probability-probability diagnostic with its rescaled difference."""

    empirical: np.ndarray
    model: np.ndarray
    diff: np.ndarray


def pp_diagnostic(fit: RadialFit, threshold: ThresholdModel, polar: PolarData) -> PPSeries:
    """P-P series of the fitted conditional radial distribution.

    Model probabilities are the truncated-gamma CDF transform of each
    exceedance, sorted against uniform plotting positions; ``diff`` is
    the rescaled series ``model - empirical``.
    """
    domain = threshold.domain
    thr = threshold.thresholds(polar)
    radii = polar.radii()
    exceed = np.flatnonzero(radii > thr)
    if len(exceed) == 0:
        raise InsufficientData("no exceedances to diagnose")
    sub = polar.subset(exceed)
    probs = np.empty(len(exceed))
    for pattern, (idx, r, W) in sub.group_by_pattern().items():
        ctx = make_context(fit.spec, domain, pattern if len(pattern) < domain.dim else None)
        g = _eval_batch(ctx, W)
        a = fit.alpha * len(pattern)
        r0 = thr[exceed][idx]
        probs[idx] = (tg.cdf(r, a, g) - tg.cdf(r0, a, g)) / tg.survival(r0, a, g)
    model = np.sort(probs)
    m = len(model)
    empirical = np.arange(1, m + 1) / (m + 1)
    return PPSeries(empirical=empirical, model=model, diff=model - empirical)

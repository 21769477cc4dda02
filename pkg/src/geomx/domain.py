"""Site geometry, distance matrices and spatial correlation structure.

Correlations follow the powered exponential family
``rho(h) = exp(-(h / lam) ** kappa)`` applied elementwise to a pairwise
distance matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .errors import DegenerateGeometry, InvalidCoordinate, NotPositiveDefinite

EARTH_RADIUS_KM = 6371.0088

METRICS = ("euclidean", "haversine")


@dataclass(frozen=True)
class CorrelationSpec:
    """Range ``lam`` and smoothness ``kappa`` of a powered exponential."""

    lam: float
    kappa: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0 < self.kappa <= 2:
            raise ValueError(f"kappa must lie in (0, 2], got {self.kappa}")

    def rho(self, h):
        """Correlation at distance ``h`` (scalar or array)."""
        return np.exp(-((np.asarray(h, dtype=float) / self.lam) ** self.kappa))

    def one_minus_rho(self, h):
        """``1 - rho(h)`` computed without cancellation for small distances."""
        return -np.expm1(-((np.asarray(h, dtype=float) / self.lam) ** self.kappa))


@dataclass(frozen=True)
class CorrMatrix:
    """A correlation matrix together with its Cholesky factor and inverse."""

    sigma: np.ndarray
    chol: np.ndarray
    inv: np.ndarray

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


def _haversine_matrix(coords: np.ndarray) -> np.ndarray:
    lat = np.radians(coords[:, 0])
    lon = np.radians(coords[:, 1])
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2.0) ** 2
    a = np.clip(a, 0.0, 1.0)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))


def distance_matrix(coords: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Pairwise distances between sites.

    Parameters
    ----------
    coords : (d, 2) array
        Euclidean (x, y) positions, or (latitude, longitude) in degrees
        when ``metric="haversine"`` (distances then in km).
    metric : {"euclidean", "haversine"}

    Raises
    ------
    DegenerateGeometry
        If two sites share the same coordinates.
    InvalidCoordinate
        If a haversine latitude/longitude is out of range.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 2:
        raise ValueError("coords must be a (d, 2) array with d >= 2")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if metric == "haversine":
        lat, lon = coords[:, 0], coords[:, 1]
        if np.any(np.abs(lat) > 90.0):
            raise InvalidCoordinate("latitudes must satisfy |lat| <= 90 degrees")
        if np.any(np.abs(lon) > 180.0):
            raise InvalidCoordinate("longitudes must satisfy |lon| <= 180 degrees")
        h = _haversine_matrix(coords)
    else:
        diff = coords[:, None, :] - coords[None, :, :]
        h = np.sqrt((diff**2).sum(axis=2))
    dup = (h <= 0.0) & ~np.eye(len(coords), dtype=bool)
    if dup.any():
        j, k = np.argwhere(dup)[0]
        raise DegenerateGeometry(f"sites {j} and {k} have identical coordinates")
    return h


@dataclass(frozen=True)
class SpatialDomain:
    """Immutable site geometry: ids, coordinates and distance matrix."""

    site_ids: tuple[str, ...]
    coords: np.ndarray
    metric: str
    H: np.ndarray = field(repr=False)

    @classmethod
    def from_coords(cls, site_ids, coords, metric: str = "euclidean") -> "SpatialDomain":
        coords = np.asarray(coords, dtype=float)
        site_ids = tuple(str(s) for s in site_ids)
        if len(site_ids) != coords.shape[0]:
            raise ValueError("site_ids and coords disagree in length")
        h = distance_matrix(coords, metric)
        coords.setflags(write=False)
        h.setflags(write=False)
        return cls(site_ids=site_ids, coords=coords, metric=metric, H=h)

    @property
    def dim(self) -> int:
        return len(self.site_ids)

    def sub_distances(self, pattern) -> np.ndarray:
        """Distance submatrix for a sorted tuple of site indices."""
        idx = np.asarray(pattern, dtype=int)
        return self.H[np.ix_(idx, idx)]


def powered_exp_corr(H: np.ndarray, spec: CorrelationSpec, jitter: float = 1e-10) -> CorrMatrix:
    """Powered exponential correlation matrix with factorizations.

    On a first Cholesky failure the diagonal is jittered once by
    ``jitter`` before giving up; numerically singular inputs raise
    :class:`NotPositiveDefinite` with the failing leading minor index.
    """
    H = np.asarray(H, dtype=float)
    sigma = np.exp(-((H / spec.lam) ** spec.kappa))

    off = ~np.eye(sigma.shape[0], dtype=bool)
    if np.any(sigma[off] >= 1.0):
        j, k = np.argwhere((sigma >= 1.0) & off)[0]
        # exact unit correlation means duplicated rows; jitter cannot fix it
        raise NotPositiveDefinite(
            f"correlation 1 between distinct sites {j} and {k}", minor_index=int(max(j, k)) + 1
        )

    chol, info = lapack.dpotrf(sigma, lower=1, clean=1)
    if info > 0:
        jittered = sigma + jitter * np.eye(sigma.shape[0])
        chol, info = lapack.dpotrf(jittered, lower=1, clean=1)
        if info > 0:
            raise NotPositiveDefinite(
                f"correlation matrix is not positive definite (leading minor {info})",
                minor_index=int(info),
            )
        sigma = jittered
    if info < 0:
        raise ValueError(f"invalid argument {-info} passed to dpotrf")

    invmat, info = lapack.dpotri(chol, lower=1)
    if info != 0:
        raise NotPositiveDefinite("inversion from Cholesky factor failed", minor_index=int(info))
    inv = np.tril(invmat) + np.tril(invmat, -1).T

    for arr in (sigma, chol, inv):
        arr.setflags(write=False)
    return CorrMatrix(sigma=sigma, chol=chol, inv=inv)

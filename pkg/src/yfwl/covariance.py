"""Sandwich covariance estimators on the full and the partial regression.

Every estimator has the form ``G X' Omega X G`` with ``G = (X'X)^-1``. On
the full regression ``X = [W2 : W1]`` and the residuals are ``u``; on the
partial regression ``X = W1*`` and the residuals are ``u~``. Because
``u == u~`` and the focus rows of ``G X'`` equal ``(W1*'W1*)^-1 W1*'``, any
middle matrix ``Omega`` that is built from the same residuals, leverages and
scalars gives the same focus block on both paths. Leverages always come from
the full design (see :func:`yfwl.regression.leverages`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    BandwidthTooLarge,
    DimensionMismatch,
    SaturatedLeverage,
    SingleCluster,
    ZeroDegreesOfFreedom,
)
from .linalg import GramInverseBlocks, frozen, partitioned_gram_inverse, symmetrize
from .regression import PartialFit, PartitionedDesign, RegressionFit, hat_diagonal, leverages

SATURATION_TOL = 1e-12


class Estimator(str, enum.Enum):
    CLASSICAL = "classical"
    HC0 = "hc0"
    HC1 = "hc1"
    HC2 = "hc2"
    HC3 = "hc3"
    HC4 = "hc4"
    HAC = "hac"
    CLUSTER = "cluster"

    @property
    def needs_leverage(self) -> bool:
        return self in (Estimator.HC2, Estimator.HC3, Estimator.HC4)


HC_VARIANTS = (Estimator.HC0, Estimator.HC1, Estimator.HC2, Estimator.HC3, Estimator.HC4)


class DofMode(str, enum.Enum):
    NONE = "none"
    N_MINUS_K = "n-k"
    CLUSTER_G = "g"
    CLUSTER_GN = "gn"


class Scope(str, enum.Enum):
    FULL = "full"
    PARTIAL = "partial"


@dataclass(frozen=True)
class CovarianceEstimate:
    """A covariance matrix and how it was produced.

    ``dof_k`` is the parameter count used in any ``N - k`` correction (``None``
    when no such correction applies).
    """

    matrix: np.ndarray
    estimator: Estimator
    dof_mode: DofMode
    scope: Scope
    dof_k: int | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"covariance must be square, got {m.shape}")
        scale = float(np.max(np.abs(m))) if m.size else 0.0
        if np.max(np.abs(m - m.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("covariance matrix is not symmetric")
        if np.min(np.diag(m), initial=0.0) < -1e-12 * scale:
            raise ValueError("covariance matrix has a negative variance")
        object.__setattr__(self, "matrix", frozen(m))

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.matrix), 0.0, None))

    def block(self, rows: slice) -> np.ndarray:
        return self.matrix[rows, rows]


@dataclass(frozen=True)
class HacSpec:
    """Lag window for HAC: ``weights[l]`` multiplies residual products ``l`` apart."""

    bandwidth: int
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.bandwidth < 0:
            raise ValueError("bandwidth must be >= 0")
        w = tuple(float(v) for v in self.weights) or _bartlett(self.bandwidth)
        if len(w) != self.bandwidth + 1:
            raise ValueError(f"need {self.bandwidth + 1} weights, got {len(w)}")
        if w[0] != 1.0:
            raise ValueError("weights[0] must be 1")
        if any(v < 0.0 or v > 1.0 for v in w):
            raise ValueError("weights must lie in [0, 1]")
        if any(b > a for a, b in zip(w, w[1:])):
            raise ValueError("weights must be non-increasing")
        object.__setattr__(self, "weights", w)

    @classmethod
    def bartlett(cls, bandwidth: int) -> HacSpec:
        return cls(bandwidth, _bartlett(bandwidth))

    @staticmethod
    def default_bandwidth(n_obs: int) -> int:
        """Plug-in rule ``floor(4 (N/100)^(2/9))``."""
        return int(math.floor(4.0 * (n_obs / 100.0) ** (2.0 / 9.0)))


def _bartlett(bandwidth: int) -> tuple[float, ...]:
    return tuple(1.0 - lag / (bandwidth + 1.0) for lag in range(bandwidth + 1))


@dataclass(frozen=True)
class ClusterMap:
    """Cluster membership of each observation, encoded as ``0..G-1``."""

    assignment: tuple
    codes: np.ndarray = field(init=False, repr=False)
    n_clusters: int = field(init=False)

    def __post_init__(self):
        labels = np.asarray(self.assignment)
        if labels.ndim != 1:
            raise DimensionMismatch("cluster assignment must be 1-D")
        _, codes = np.unique(labels, return_inverse=True)
        codes = codes.astype(np.int64).ravel()
        n_clusters = int(codes.max()) + 1 if codes.size else 0
        if n_clusters < 2:
            raise SingleCluster(f"need at least 2 clusters, got {n_clusters}")
        object.__setattr__(self, "assignment", tuple(self.assignment))
        object.__setattr__(self, "codes", frozen_int(codes))
        object.__setattr__(self, "n_clusters", n_clusters)

    def __len__(self) -> int:
        return len(self.assignment)


def frozen_int(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# middle-matrix pieces shared by both paths
# ---------------------------------------------------------------------------


def _dof_ratio(n: int, k: int, estimator: Estimator) -> float:
    if n <= k:
        raise ZeroDegreesOfFreedom(f"{estimator.value} needs N > k, got N={n}, k={k}")
    return n / (n - k)


def hc_weights(
    variant: Estimator,
    resid: np.ndarray,
    h: np.ndarray | None,
    k_total: int,
    *,
    hc4_delta: str = "max",
) -> np.ndarray:
    """Diagonal of the HC middle matrix, without the HC1 ``N/(N-k)`` factor.

    ``hc4_delta="max"`` uses ``delta_i = max(4, N h_i / k)``; ``"min"`` uses the
    ``min(4, N h_i / k)`` exponent common in software packages.
    """
    variant = Estimator(variant)
    u2 = resid * resid
    if not variant.needs_leverage:
        return u2
    if h is None:
        raise ValueError(f"{variant.value} needs leverages")
    h = np.asarray(h, dtype=np.float64)
    if h.shape != resid.shape:
        raise DimensionMismatch(f"{h.shape[0]} leverages for {resid.shape[0]} residuals")
    bad = np.flatnonzero(h >= 1.0 - SATURATION_TOL)
    if bad.size:
        raise SaturatedLeverage(
            f"{bad.size} observation(s) have leverage 1 (first: row {bad[0]}); "
            f"{variant.value} is undefined"
        )
    one_minus = 1.0 - h
    if variant is Estimator.HC2:
        return u2 / one_minus
    if variant is Estimator.HC3:
        return u2 / one_minus**2
    ratio = h.shape[0] * h / k_total
    if hc4_delta == "max":
        delta = np.maximum(4.0, ratio)
    elif hc4_delta == "min":
        delta = np.minimum(4.0, ratio)
    else:
        raise ValueError(f"hc4_delta must be 'max' or 'min', got {hc4_delta!r}")
    return u2 / one_minus**delta


def _sandwich(gram_inverse: np.ndarray, meat: np.ndarray, scale: float = 1.0) -> np.ndarray:
    cov = gram_inverse @ meat @ gram_inverse
    if scale != 1.0:
        cov = scale * cov
    return symmetrize(cov)


def _scores(x: np.ndarray, resid: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x * resid[:, None])


def _hac_meat(x, resid, spec: HacSpec) -> np.ndarray:
    n = x.shape[0]
    if spec.bandwidth >= n:
        raise BandwidthTooLarge(f"bandwidth {spec.bandwidth} must be < N={n}")
    weights = np.asarray(spec.weights, dtype=np.float64)
    return _kernels.active.hac_meat(_scores(x, resid), weights)


def _cluster_meat(x, resid, clusters: ClusterMap) -> np.ndarray:
    if len(clusters) != x.shape[0]:
        raise DimensionMismatch(f"{len(clusters)} cluster labels for N={x.shape[0]}")
    return _kernels.active.cluster_meat(_scores(x, resid), clusters.codes, clusters.n_clusters)


def _cluster_scale(dof_mode: DofMode, n: int, k: int, n_clusters: int) -> float:
    g = n_clusters
    if dof_mode is DofMode.NONE:
        return 1.0
    if dof_mode is DofMode.CLUSTER_G:
        return g / (g - 1.0)
    if dof_mode is DofMode.CLUSTER_GN:
        if n <= k:
            raise ZeroDegreesOfFreedom(f"cluster G(N-1)/((G-1)(N-k)) needs N > k, got N={n}, k={k}")
        return g * (n - 1.0) / ((g - 1.0) * (n - k))
    raise ValueError(f"dof mode {dof_mode.value!r} does not apply to cluster covariance")


def _estimate(
    estimator: Estimator,
    x: np.ndarray,
    resid: np.ndarray,
    gram_inverse: np.ndarray,
    *,
    k_dof: int,
    k_total: int,
    scope: Scope,
    h=None,
    hac: HacSpec | None = None,
    clusters: ClusterMap | None = None,
    dof_mode: DofMode | str | None = None,
    hc4_delta: str = "max",
) -> CovarianceEstimate:
    n = x.shape[0]
    if estimator is Estimator.CLASSICAL:
        if n <= k_dof:
            raise ZeroDegreesOfFreedom(f"classical covariance needs N > k, got N={n}, k={k_dof}")
        sigma2 = float(resid @ resid) / (n - k_dof)
        return CovarianceEstimate(
            symmetrize(sigma2 * gram_inverse), estimator, DofMode.N_MINUS_K, scope, k_dof
        )
    if estimator in HC_VARIANTS:
        d = hc_weights(estimator, resid, h, k_total, hc4_delta=hc4_delta)
        meat = _kernels.active.weighted_gram(x, d)
        if estimator is Estimator.HC1:
            scale = _dof_ratio(n, k_dof, estimator)
            return CovarianceEstimate(
                _sandwich(gram_inverse, meat, scale), estimator, DofMode.N_MINUS_K, scope, k_dof
            )
        return CovarianceEstimate(_sandwich(gram_inverse, meat), estimator, DofMode.NONE, scope)
    if estimator is Estimator.HAC:
        if hac is None:
            hac = HacSpec.bartlett(HacSpec.default_bandwidth(n))
        meat = _hac_meat(x, resid, hac)
        return CovarianceEstimate(_sandwich(gram_inverse, meat), estimator, DofMode.NONE, scope)
    if estimator is Estimator.CLUSTER:
        if clusters is None:
            raise ValueError("cluster covariance needs a ClusterMap")
        mode = DofMode(dof_mode or DofMode.CLUSTER_GN)
        scale = _cluster_scale(mode, n, k_dof, clusters.n_clusters)
        meat = _cluster_meat(x, resid, clusters)
        return CovarianceEstimate(
            _sandwich(gram_inverse, meat, scale),
            estimator,
            mode,
            scope,
            k_dof if mode is DofMode.CLUSTER_GN else None,
        )
    raise ValueError(f"unknown estimator {estimator!r}")  # pragma: no cover


# ---------------------------------------------------------------------------
# full regression
# ---------------------------------------------------------------------------


def cov_classical(fit: RegressionFit) -> CovarianceEstimate:
    """``s^2 (X'X)^-1`` with ``s^2 = u'u / (N - k)``."""
    return _estimate(
        Estimator.CLASSICAL,
        fit.x,
        fit.residuals,
        fit.gram_inverse,
        k_dof=fit.n_params,
        k_total=fit.n_params,
        scope=Scope.FULL,
    )


def cov_hc(fit: RegressionFit, variant, h=None, *, hc4_delta: str = "max") -> CovarianceEstimate:
    """Heteroskedasticity-consistent sandwich HC0..HC4.

    Parameters
    ----------
    fit : RegressionFit
    variant : Estimator or str
        One of ``hc0`` .. ``hc4``.
    h : array_like, optional
        Leverages for HC2-HC4. Computed from ``fit`` when omitted.
    hc4_delta : {"max", "min"}
        Exponent rule for HC4, see :func:`hc_weights`.
    """
    variant = Estimator(variant)
    if variant not in HC_VARIANTS:
        raise ValueError(f"{variant.value} is not an HC variant")
    if variant.needs_leverage and h is None:
        h = hat_diagonal(fit.x, fit.gram_inverse)
    return _estimate(
        variant,
        fit.x,
        fit.residuals,
        fit.gram_inverse,
        k_dof=fit.n_params,
        k_total=fit.n_params,
        scope=Scope.FULL,
        h=h,
        hc4_delta=hc4_delta,
    )


def cov_hac(fit: RegressionFit, spec: HacSpec | None = None) -> CovarianceEstimate:
    """Newey-West style HAC; rows of the fit are taken to be in time order.

    Without ``spec`` the Bartlett kernel with the default plug-in bandwidth is used.
    """
    return _estimate(
        Estimator.HAC,
        fit.x,
        fit.residuals,
        fit.gram_inverse,
        k_dof=fit.n_params,
        k_total=fit.n_params,
        scope=Scope.FULL,
        hac=spec,
    )


def cov_cluster(
    fit: RegressionFit, clusters: ClusterMap, dof_mode: DofMode | str = DofMode.CLUSTER_GN
) -> CovarianceEstimate:
    """Cluster-robust sandwich with meat ``sum_g (X_g'u_g)(X_g'u_g)'``."""
    return _estimate(
        Estimator.CLUSTER,
        fit.x,
        fit.residuals,
        fit.gram_inverse,
        k_dof=fit.n_params,
        k_total=fit.n_params,
        scope=Scope.FULL,
        clusters=clusters,
        dof_mode=dof_mode,
    )


def full_covariance(fit: RegressionFit, estimator, **params) -> CovarianceEstimate:
    """Dispatch to the full-regression estimator named by ``estimator``."""
    estimator = Estimator(estimator)
    if estimator is Estimator.CLASSICAL:
        return cov_classical(fit)
    if estimator in HC_VARIANTS:
        return cov_hc(fit, estimator, params.get("h"), hc4_delta=params.get("hc4_delta", "max"))
    if estimator is Estimator.HAC:
        return cov_hac(fit, params.get("hac"))
    return cov_cluster(fit, params["clusters"], params.get("dof_mode") or DofMode.CLUSTER_GN)


# ---------------------------------------------------------------------------
# partial regression
# ---------------------------------------------------------------------------


def partial_cov(
    partial: PartialFit,
    design: PartitionedDesign,
    estimator,
    blocks: GramInverseBlocks | None = None,
    *,
    h=None,
    hac: HacSpec | None = None,
    clusters: ClusterMap | None = None,
    dof_mode: DofMode | str | None = None,
    match_full_dof: bool = False,
    hc4_delta: str = "max",
) -> CovarianceEstimate:
    """Covariance of the focus coefficients from partial-regression quantities.

    The sandwich is ``(W1*'W1*)^-1 W1*' Omega W1* (W1*'W1*)^-1`` with ``Omega``
    built from the partial residuals. For HC2-HC4 the leverages of the *full*
    design enter ``Omega``; they are obtained from the partitioned inverse
    blocks (computed here when ``blocks`` and ``h`` are not given), so no
    ``k x k`` inverse is ever formed.

    Estimators with an ``N - k`` correction (classical, HC1, cluster ``gn``)
    use ``k = k1`` by default, which is what a naive partial regression
    reports. With ``match_full_dof=True`` they use ``k = k1 + k2`` and the
    result equals the focus block of the full-regression estimate. HC4's
    exponent always uses the full ``k``.
    """
    estimator = Estimator(estimator)
    if partial.n_obs != design.n_obs or partial.k1 != design.k1 or partial.k2 != design.k2:
        raise DimensionMismatch("partial fit and design disagree in shape")
    if estimator.needs_leverage and h is None:
        if blocks is None:
            blocks = partitioned_gram_inverse(design)
        h = leverages(design, blocks)
    k_dof = partial.k if match_full_dof else partial.k1
    return _estimate(
        estimator,
        partial.w1_star,
        partial.u_tilde,
        partial.gram22,
        k_dof=k_dof,
        k_total=partial.k,
        scope=Scope.PARTIAL,
        h=h,
        hac=hac,
        clusters=clusters,
        dof_mode=dof_mode,
        hc4_delta=hc4_delta,
    )

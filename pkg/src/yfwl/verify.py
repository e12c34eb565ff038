"""Runtime certificates for the partialling-out identities.

Each ``check_*`` function evaluates one identity on a concrete design and
returns an :class:`EquivalenceReport`. Reference sides are computed by routes
that do not share code with the path under test where that is practical:
Cramer's rule for least squares, QR-based dense projectors, ``numpy.linalg``
inverses.

Tolerance policy: a report passes when ``max_abs_err <= tol * (1 + scale)``
with ``scale`` the max-abs entry of the reference. ``tol`` defaults to 1e-9,
relaxed to 1e-6 (and flagged in the descriptor) when the Gram matrix of the
full design has condition number above 1e3.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from .covariance import (
    ClusterMap,
    DofMode,
    Estimator,
    HacSpec,
    full_covariance,
    partial_cov,
)
from .errors import (
    DegenerateResidual,
    DimensionMismatch,
    InstanceTooLarge,
    OracleSizeExceeded,
    SingularSystem,
)
from .linalg import as_matrix, partitioned_gram_inverse
from .regression import (
    Intercept,
    PartitionedDesign,
    full_fit,
    fwl_fit,
    leverages,
    ols_fit,
    residualize,
)

DEFAULT_TOL = 1e-9
RELAXED_TOL = 1e-6
ILL_CONDITIONED_GRAM = 1e3
MAX_ORACLE_K = 8
MAX_DENSE_N = 200


@dataclass(frozen=True)
class EquivalenceReport:
    identity_name: str
    passed: bool
    max_abs_err: float
    max_rel_err: float
    tolerance_used: float
    instance_descriptor: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def compare(name: str, got, ref, tol: float, descriptor: str = "") -> EquivalenceReport:
    """Build a report for ``got`` against the reference ``ref``."""
    got = np.asarray(got, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if got.shape != ref.shape:
        raise DimensionMismatch(f"{name}: shapes {got.shape} and {ref.shape} differ")
    abs_err = float(np.max(np.abs(got - ref), initial=0.0))
    scale = float(np.max(np.abs(ref), initial=0.0))
    rel_err = abs_err / scale if scale > 0 else abs_err
    tol_used = tol * (1.0 + scale)
    return EquivalenceReport(name, abs_err <= tol_used, abs_err, rel_err, tol_used, descriptor)


def _merge(name: str, reports: list[EquivalenceReport], descriptor: str) -> EquivalenceReport:
    worst = max(reports, key=lambda r: r.max_abs_err / r.tolerance_used)
    details = " ".join(f"{r.identity_name}={r.max_abs_err:.3g}" for r in reports)
    return EquivalenceReport(
        name,
        all(r.passed for r in reports),
        max(r.max_abs_err for r in reports),
        max(r.max_rel_err for r in reports),
        worst.tolerance_used,
        f"{descriptor} [{details}]".strip(),
    )


def gram_condition(design: PartitionedDesign) -> float:
    return float(np.linalg.cond(design.w.T @ design.w))


def resolve_tolerance(design: PartitionedDesign, tolerance: float | None, descriptor: str):
    """Apply the tolerance policy; returns ``(tol, descriptor)``."""
    if tolerance is not None:
        return tolerance, descriptor
    cond = gram_condition(design)
    if cond > ILL_CONDITIONED_GRAM:
        return RELAXED_TOL, f"{descriptor} near-collinear(cond={cond:.3g})".strip()
    return DEFAULT_TOL, descriptor


# ---------------------------------------------------------------------------
# Cramer's rule oracle
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _permutation_table(k: int) -> tuple[np.ndarray, np.ndarray]:
    perms = np.array(list(itertools.permutations(range(k))), dtype=np.intp).reshape(-1, k)
    inversions = np.zeros(perms.shape[0], dtype=np.intp)
    for i in range(k):
        for j in range(i + 1, k):
            inversions += perms[:, i] > perms[:, j]
    signs = np.where(inversions % 2 == 0, 1.0, -1.0)
    perms.flags.writeable = False
    signs.flags.writeable = False
    return perms, signs


def leibniz_det(a) -> float:
    """Determinant as the signed sum over all ``k!`` permutations."""
    a = np.asarray(a, dtype=np.float64)
    k = a.shape[0]
    perms, signs = _permutation_table(k)
    return float(np.sum(signs * np.prod(a[np.arange(k), perms], axis=1)))


def cramer_oracle_fit(x, y) -> np.ndarray:
    """Least-squares coefficients from the normal equations by Cramer's rule.

    ``b_j = det(A_j) / det(A)`` with ``A = X'X`` and ``A_j`` equal to ``A``
    with column ``j`` replaced by ``X'y``. Determinants come from the
    permutation expansion, so nothing here touches the Cholesky path.
    Limited to ``k <= 8``.
    """
    x = as_matrix(x, "X")
    y = as_matrix(y, "y", ndim=1)
    n, k = x.shape
    if k > MAX_ORACLE_K:
        raise OracleSizeExceeded(f"Cramer oracle supports k <= {MAX_ORACLE_K}, got {k}")
    if y.shape[0] != n or k < 1:
        raise DimensionMismatch(f"X is {x.shape}, y has {y.shape[0]} entries")
    a = x.T @ x
    c = x.T @ y
    det_a = leibniz_det(a)
    # Hadamard: |det A| <= prod(diag A) for positive semidefinite A
    if abs(det_a) <= 1e-12 * float(np.prod(np.diag(a))):
        raise SingularSystem(f"det(X'X) = {det_a:.3g} is numerically zero")
    b = np.empty(k)
    for j in range(k):
        a_j = a.copy()
        a_j[:, j] = c
        b[j] = leibniz_det(a_j) / det_a
    return b


def check_cramer_agreement(x, y, tolerance: float = 1e-8, descriptor: str = "") -> EquivalenceReport:
    fit = ols_fit(x, y)
    return compare("cramer_vs_cholesky", fit.coefficients, cramer_oracle_fit(x, y), tolerance, descriptor)


# ---------------------------------------------------------------------------
# coefficient, residual and projection identities
# ---------------------------------------------------------------------------


def check_yule_identity(
    design: PartitionedDesign, tolerance: float | None = None, descriptor: str = ""
) -> EquivalenceReport:
    """Residual-on-residual slope against the multiple-regression coefficient."""
    if design.k1 != 1:
        raise DimensionMismatch(f"Yule identity needs exactly one focus column, got {design.k1}")
    tol, descriptor = resolve_tolerance(design, tolerance, descriptor)
    x = design.w1[:, 0]
    x_res = residualize(x, design.w2)
    y_res = residualize(design.y, design.w2)
    sxx = float(x_res @ x_res)
    if sxx <= 1e-14 * float(x @ x):
        raise DegenerateResidual("focus column lies in the span of the controls")
    slope = float(y_res @ x_res) / sxx
    multiple = full_fit(design).coefficients[-1]
    return compare("yule_bivariate", np.array([slope]), np.array([multiple]), tol, descriptor)


def check_lovell_identities(
    design: PartitionedDesign, tolerance: float | None = None, descriptor: str = ""
) -> tuple[EquivalenceReport, EquivalenceReport]:
    """Coefficient (``b1`` vs ``b1~``) and residual (``u`` vs ``u~``) identities."""
    tol, descriptor = resolve_tolerance(design, tolerance, descriptor)
    full = full_fit(design)
    partial = fwl_fit(design)
    coef = compare(
        "coefficients", partial.b1_tilde, full.coefficients[design.focus_slice], tol, descriptor
    )
    resid = compare("residuals", partial.u_tilde, full.residuals, tol, descriptor)
    return coef, resid


def _projector(z: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(z)
    return q @ q.T


def check_projection_decomposition(
    design: PartitionedDesign, tolerance: float | None = None, descriptor: str = ""
) -> EquivalenceReport:
    """``P_W = P_W2 + P_W1*``, ``P_W2 P_W1* = 0``, idempotence and symmetry.

    Projectors are built densely from QR factors, so ``N`` is capped at 200.
    """
    if design.n_obs > MAX_DENSE_N:
        raise InstanceTooLarge(f"dense projector check needs N <= {MAX_DENSE_N}")
    tol = DEFAULT_TOL if tolerance is None else tolerance
    w1_star = residualize(design.w1, design.w2)
    p_w = _projector(design.w)
    p_2 = _projector(design.w2)
    p_1s = _projector(w1_star)
    zero = np.zeros_like(p_w)
    parts = [
        compare("sum", p_2 + p_1s, p_w, tol),
        compare("orthogonal", p_2 @ p_1s, zero, tol),
    ]
    for label, p in (("P_W", p_w), ("P_W2", p_2), ("P_W1*", p_1s)):
        parts.append(compare(f"idempotent({label})", p @ p, p, tol))
        parts.append(compare(f"symmetric({label})", p.T, p, tol))
    return _merge("projection_decomposition", parts, descriptor)


def check_block_relation(
    design: PartitionedDesign, tolerance: float | None = None, descriptor: str = ""
) -> EquivalenceReport:
    """Focus rows of ``(W'W)^-1 W'`` against ``(W1*'W1*)^-1 W1*'``.

    The left side is evaluated twice, from the partitioned inverse blocks and
    from a dense ``numpy.linalg.inv``; the report carries the worse of the two.
    """
    if design.k1 < 1:  # pragma: no cover - PartitionedDesign already rejects this
        raise DimensionMismatch("empty focus block")
    tol, descriptor = resolve_tolerance(design, tolerance, descriptor)
    blocks = partitioned_gram_inverse(design)
    via_blocks = blocks.w12.T @ design.w2.T + blocks.w22 @ design.w1.T
    w = design.w
    via_dense = (np.linalg.inv(w.T @ w) @ w.T)[design.focus_slice]
    w1_star = residualize(design.w1, design.w2)
    ref = np.linalg.solve(w1_star.T @ w1_star, w1_star.T)
    return _merge(
        "block_relation",
        [compare("blocks", via_blocks, ref, tol), compare("dense", via_dense, ref, tol)],
        descriptor,
    )


def check_leverage_blocks(
    design: PartitionedDesign, tolerance: float = 1e-10, descriptor: str = ""
) -> EquivalenceReport:
    """Block-computed leverages against the diagonal of a dense QR hat matrix."""
    h = leverages(design, partitioned_gram_inverse(design))
    q, _ = np.linalg.qr(design.w)
    dense = np.einsum("ij,ij->i", q, q)
    report = compare("leverages", h, dense, tolerance, descriptor)
    trace_err = abs(float(np.sum(h)) - design.k)
    trace_ok = trace_err <= 1e-8
    return EquivalenceReport(
        "leverage_blocks",
        report.passed and trace_ok,
        report.max_abs_err,
        report.max_rel_err,
        report.tolerance_used,
        f"{descriptor} trace_err={trace_err:.3g}".strip(),
    )


# ---------------------------------------------------------------------------
# covariance equivalences
# ---------------------------------------------------------------------------

DOF_RELATION = {Estimator.CLASSICAL, Estimator.HC1}


def check_cov_equivalence(
    design: PartitionedDesign,
    estimator,
    *,
    hac: HacSpec | None = None,
    clusters: ClusterMap | None = None,
    dof_mode: DofMode | str | None = None,
    hc4_delta: str = "max",
    tolerance: float | None = None,
    descriptor: str = "",
) -> EquivalenceReport:
    """Full-regression focus block against the partial-regression covariance.

    Estimators whose middle matrix uses only residuals (HC0, HAC, cluster
    without or with ``G/(G-1)``) and the leverage-based HC2-HC4 must agree
    exactly. Classical, HC1 and cluster ``gn`` must satisfy
    ``(N - k1) V_partial = (N - k) V_full``.
    """
    estimator = Estimator(estimator)
    tol, descriptor = resolve_tolerance(design, tolerance, descriptor)
    params = dict(hac=hac, clusters=clusters, dof_mode=dof_mode, hc4_delta=hc4_delta)
    if estimator is Estimator.CLUSTER and dof_mode is None:
        params["dof_mode"] = DofMode.CLUSTER_GN
    full = full_covariance(full_fit(design), estimator, **params).block(design.focus_slice)
    partial = partial_cov(fwl_fit(design), design, estimator, **params).matrix
    dof_scaled = estimator in DOF_RELATION or (
        estimator is Estimator.CLUSTER and DofMode(params["dof_mode"]) is DofMode.CLUSTER_GN
    )
    label = _estimator_label(estimator, params)
    if dof_scaled:
        n = design.n_obs
        return compare(
            f"cov[{label}] dof", (n - design.k1) * partial, (n - design.k) * full, tol, descriptor
        )
    return compare(f"cov[{label}] exact", partial, full, tol, descriptor)


def _estimator_label(estimator: Estimator, params: dict) -> str:
    if estimator is Estimator.HAC and params.get("hac") is not None:
        return f"hac L={params['hac'].bandwidth}"
    if estimator is Estimator.CLUSTER:
        return f"cluster {DofMode(params['dof_mode']).value}"
    if estimator is Estimator.HC4 and params.get("hc4_delta", "max") != "max":
        return f"hc4 delta={params['hc4_delta']}"
    return estimator.value


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

ERROR_PROCESSES = ("iid", "hetero", "ar1", "cluster")


@dataclass(frozen=True)
class Instance:
    design: PartitionedDesign
    clusters: ClusterMap | None
    descriptor: str


def random_instance(
    rng: np.random.Generator,
    n_obs: int,
    k1: int,
    k2: int,
    *,
    rho: float = 0.0,
    errors: str = "iid",
    n_clusters: int | None = None,
    intercept: Intercept | str = Intercept.IN_CONTROLS,
    outlier: float = 0.0,
    label: str = "",
) -> Instance:
    """Draw a random partitioned design.

    Regressors are standard normal. Each non-constant focus column has
    correlation ``rho`` with one of the non-constant controls. ``k1`` and
    ``k2`` count the intercept column when it sits in that block. A positive
    ``outlier`` multiplies the regressors of observation 0, giving it high
    leverage. Cluster labels are always drawn (``N // 10`` clusters unless
    given) so every instance can be used for cluster-robust checks.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if errors not in ERROR_PROCESSES:
        raise ValueError(f"errors must be one of {ERROR_PROCESSES}")
    intercept = Intercept(intercept)
    ctrl_free = k2 - (intercept is Intercept.IN_CONTROLS)
    focus_free = k1 - (intercept is Intercept.IN_FOCUS)
    if ctrl_free < 0 or focus_free < 0:
        raise ValueError("block too small to hold the intercept")
    controls = rng.standard_normal((n_obs, ctrl_free))
    focus = rng.standard_normal((n_obs, focus_free))
    if ctrl_free and rho > 0.0:
        for j in range(focus_free):
            focus[:, j] = rho * controls[:, j % ctrl_free] + math.sqrt(1.0 - rho * rho) * focus[:, j]
    if outlier > 0.0:
        controls[0] *= outlier
        focus[0] *= outlier
    ones = np.ones((n_obs, 1))
    w2 = np.hstack([ones, controls]) if intercept is Intercept.IN_CONTROLS else controls
    w1 = np.hstack([ones, focus]) if intercept is Intercept.IN_FOCUS else focus
    beta = rng.standard_normal(k1 + k2)

    g = n_clusters or max(2, n_obs // 10)
    assignment = rng.permutation(np.arange(n_obs) % g)
    eps = rng.standard_normal(n_obs)
    if errors == "hetero":
        driver = np.hstack([focus, controls, ones])[:, 0]
        eps *= np.sqrt(1.0 + driver**2)
    elif errors == "ar1":
        for t in range(1, n_obs):
            eps[t] += 0.5 * eps[t - 1]
    elif errors == "cluster":
        eps += rng.standard_normal(g)[assignment]
    y = np.hstack([w2, w1]) @ beta + eps

    design = PartitionedDesign(y, w1, w2, intercept)
    descriptor = (
        f"{label} N={n_obs} k1={k1} k2={k2} rho={rho:g} errors={errors} G={g}"
        + (f" outlier={outlier:g}" if outlier else "")
    ).strip()
    return Instance(design, ClusterMap(assignment), descriptor)


def instance_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def covariance_cases(design: PartitionedDesign, clusters: ClusterMap) -> list[tuple[Estimator, dict]]:
    """Every estimator configuration with a stated full/partial relation."""
    cases: list[tuple[Estimator, dict]] = [(Estimator.CLASSICAL, {})]
    cases += [(v, {}) for v in (Estimator.HC0, Estimator.HC1, Estimator.HC2, Estimator.HC3, Estimator.HC4)]
    cases += [(Estimator.HAC, {"hac": HacSpec.bartlett(lag)}) for lag in (0, 1, 3)]
    cases += [
        (Estimator.CLUSTER, {"clusters": clusters, "dof_mode": mode})
        for mode in (DofMode.NONE, DofMode.CLUSTER_G, DofMode.CLUSTER_GN)
    ]
    return cases


def run_suite(
    seed: int = 42,
    n_instances: int = 100,
    *,
    n_obs: int = 200,
    rho_max: float = 0.9,
    rho: float | None = None,
    tolerance: float | None = None,
) -> Iterator[EquivalenceReport]:
    """Yield one report per identity per seeded random instance.

    Instance ``i`` draws ``k1`` in 1..5, ``k2`` in 1..10, ``rho`` uniform on
    ``[0, rho_max]`` (or the fixed ``rho`` when given) and cycles through the
    error processes. Dense checks
    (projections, leverages) run on ``N = 50`` companions of each instance
    and Cramer's rule on ``k <= 6`` designs.
    """
    for i in range(n_instances):
        rng = instance_rng(seed, i)
        k1 = int(rng.integers(1, 6))
        k2 = int(rng.integers(1, 11))
        rho_i = float(rng.uniform(0.0, rho_max)) if rho is None else rho
        errors = ERROR_PROCESSES[i % len(ERROR_PROCESSES)]
        tag = f"seed={seed} i={i}"
        inst = random_instance(rng, n_obs, k1, k2, rho=rho_i, errors=errors, label=tag)
        d = inst.design

        yield from check_lovell_identities(d, tolerance, inst.descriptor)
        yule = random_instance(rng, n_obs, 1, k2, rho=rho_i, errors=errors, label=tag)
        yield check_yule_identity(yule.design, tolerance, yule.descriptor)
        yield check_block_relation(d, tolerance, inst.descriptor)
        for estimator, params in covariance_cases(d, inst.clusters):
            yield check_cov_equivalence(
                d, estimator, tolerance=tolerance, descriptor=inst.descriptor, **params
            )

        small = random_instance(rng, 50, k1, min(k2, 6), rho=rho_i, errors=errors, label=tag)
        yield check_projection_decomposition(small.design, tolerance, small.descriptor)
        yield check_leverage_blocks(
            small.design, 1e-10 if tolerance is None else tolerance, small.descriptor
        )
        k_small = int(rng.integers(1, 7))
        x = rng.standard_normal((30, k_small))
        x[:, 0] = 1.0
        y = x @ rng.standard_normal(k_small) + rng.standard_normal(30)
        yield check_cramer_agreement(
            x, y, 1e-8 if tolerance is None else tolerance, f"{tag} N=30 k={k_small}"
        )

"""Least squares on partitioned designs.

The design is ``y = W b + u`` with ``W = [W2 : W1]``: ``W2`` holds the
controls (``k2`` columns) and ``W1`` the focus regressors (``k1`` columns).
Full-regression coefficient vectors are always ordered controls first, so the
focus coefficients are the last ``k1`` entries.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConditioningWarning, DimensionMismatch
from .linalg import GramInverseBlocks, as_matrix, cholesky, frozen, symmetrize

# the pivot rule already rejects cond(X) beyond about 1/sqrt(k * eps) ~ 1e7,
# so warn a decade before that
CONDITION_WARN = 1e6


class Intercept(str, enum.Enum):
    IN_CONTROLS = "controls"
    IN_FOCUS = "focus"
    ABSENT = "none"


def _ones_columns(m: np.ndarray) -> list[int]:
    return [j for j in range(m.shape[1]) if np.all(m[:, j] == 1.0)]


@dataclass(frozen=True)
class PartitionedDesign:
    """Outcome plus focus block ``w1`` and control block ``w2``.

    Use :meth:`build` to have the intercept column added for you; the plain
    constructor expects any column of ones to be present already.
    """

    y: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    intercept: Intercept = Intercept.IN_CONTROLS
    focus_names: tuple[str, ...] = ()
    control_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = as_matrix(self.y, "y", ndim=1)
        w1 = as_matrix(self.w1, "w1")
        w2 = as_matrix(self.w2, "w2")
        n = y.shape[0]
        if w1.shape[0] != n or w2.shape[0] != n:
            raise DimensionMismatch(
                f"row counts differ: y={n}, w1={w1.shape[0]}, w2={w2.shape[0]}"
            )
        if w1.shape[1] == 0:
            raise DimensionMismatch("focus block w1 has no columns")
        if w2.shape[1] == 0:
            raise DimensionMismatch("control block w2 has no columns")
        if n <= w1.shape[1] + w2.shape[1]:
            raise DimensionMismatch(
                f"need N > k1 + k2, got N={n}, k1={w1.shape[1]}, k2={w2.shape[1]}"
            )
        intercept = Intercept(self.intercept)
        if intercept is not Intercept.ABSENT:
            ones1, ones2 = _ones_columns(w1), _ones_columns(w2)
            if len(ones1) + len(ones2) != 1:
                raise ValueError(
                    f"expected exactly one column of ones, found {len(ones1) + len(ones2)}"
                )
            home = ones2 if intercept is Intercept.IN_CONTROLS else ones1
            if not home:
                raise ValueError(f"column of ones is not in the {intercept.value} block")
        for name, labels, width in (
            ("focus_names", self.focus_names, w1.shape[1]),
            ("control_names", self.control_names, w2.shape[1]),
        ):
            if labels and len(labels) != width:
                raise DimensionMismatch(f"{name} has {len(labels)} labels for {width} columns")
        object.__setattr__(self, "y", frozen(y))
        object.__setattr__(self, "w1", frozen(w1))
        object.__setattr__(self, "w2", frozen(w2))
        object.__setattr__(self, "intercept", intercept)
        object.__setattr__(self, "focus_names", tuple(self.focus_names))
        object.__setattr__(self, "control_names", tuple(self.control_names))

    @classmethod
    def build(
        cls,
        y,
        focus,
        controls=None,
        *,
        intercept: Intercept | str = Intercept.IN_CONTROLS,
        focus_names=(),
        control_names=(),
    ) -> PartitionedDesign:
        """Assemble a design, prepending a column of ones to the chosen block."""
        y = as_matrix(y, "y", ndim=1)
        n = y.shape[0]
        w1 = as_matrix(focus, "focus")
        w2 = np.empty((n, 0)) if controls is None else as_matrix(controls, "controls")
        intercept = Intercept(intercept)
        ones = np.ones((n, 1))
        focus_names, control_names = tuple(focus_names), tuple(control_names)
        if intercept is Intercept.IN_CONTROLS:
            w2 = np.hstack([ones, w2])
            control_names = ("const", *control_names) if control_names or focus_names else ()
        elif intercept is Intercept.IN_FOCUS:
            w1 = np.hstack([ones, w1])
            focus_names = ("const", *focus_names) if focus_names or control_names else ()
        return cls(y, w1, w2, intercept, focus_names, control_names)

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def k1(self) -> int:
        return self.w1.shape[1]

    @property
    def k2(self) -> int:
        return self.w2.shape[1]

    @property
    def k(self) -> int:
        return self.k1 + self.k2

    @property
    def w(self) -> np.ndarray:
        """Full regressor matrix ``[W2 : W1]``."""
        return np.hstack([self.w2, self.w1])

    @property
    def focus_slice(self) -> slice:
        return slice(self.k2, self.k)


@dataclass(frozen=True)
class RegressionFit:
    """Result of one least-squares fit of ``y`` on ``x``."""

    coefficients: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    gram_inverse: np.ndarray
    x: np.ndarray = field(repr=False)
    condition: float = np.nan

    @property
    def n_obs(self) -> int:
        return self.x.shape[0]

    @property
    def n_params(self) -> int:
        return self.x.shape[1]

    @property
    def df_resid(self) -> int:
        return self.n_obs - self.n_params


@dataclass(frozen=True)
class PartialFit:
    """Regression of ``y_star`` on ``w1_star``, both residualised on the controls.

    ``gram22`` is ``(W1*'W1*)^-1``, the focus block of ``(W'W)^-1``.
    """

    b1_tilde: np.ndarray
    u_tilde: np.ndarray
    y_star: np.ndarray
    w1_star: np.ndarray
    gram22: np.ndarray
    k2: int
    condition: float = np.nan

    @property
    def n_obs(self) -> int:
        return self.w1_star.shape[0]

    @property
    def k1(self) -> int:
        return self.w1_star.shape[1]

    @property
    def k(self) -> int:
        return self.k1 + self.k2


def ols_fit(x, y, *, pivot_scale: float = 0.0) -> RegressionFit:
    """Least squares via the Cholesky factor of the normal equations.

    Parameters
    ----------
    x : array_like
        ``N x k`` regressors with ``N > k >= 1`` and full column rank.
    y : array_like
        Length-``N`` outcome (a single column is accepted too).
    pivot_scale : float, optional
        Forwarded to :func:`yfwl.linalg.cholesky`; used when ``x`` has been
        residualised and its own Gram diagonal no longer reflects the data scale.

    Returns
    -------
    RegressionFit
        ``condition`` estimates the 2-norm condition number of ``x``; a
        :class:`ConditioningWarning` is emitted when it exceeds 1e6.
    """
    x = as_matrix(x, "X")
    y = as_matrix(y, "y", ndim=1)
    n, k = x.shape
    if y.shape[0] != n:
        raise DimensionMismatch(f"X has {n} rows but y has {y.shape[0]}")
    if k < 1 or n <= k:
        raise DimensionMismatch(f"need N > k >= 1, got N={n}, k={k}")
    factor = cholesky(symmetrize(x.T @ x), scale=pivot_scale)
    coef = factor.solve(x.T @ y)
    fitted = x @ coef
    resid = y - fitted
    # 1-norm estimate of cond(X'X) bounds cond(X)**2 within a factor of k
    condition = float(np.sqrt(factor.condition))
    if condition > CONDITION_WARN:
        warnings.warn(
            f"design condition number ~{condition:.2g} exceeds {CONDITION_WARN:.0e}",
            ConditioningWarning,
            stacklevel=2,
        )
    return RegressionFit(
        coefficients=frozen(coef, owned=True),
        residuals=frozen(resid, owned=True),
        fitted=frozen(fitted, owned=True),
        gram_inverse=frozen(factor.inverse(), owned=True),
        x=frozen(x),
        condition=condition,
    )


def residualize(targets, z) -> np.ndarray:
    """Residuals of each column of ``targets`` regressed on ``z``.

    Computes ``(I - Z (Z'Z)^-1 Z') targets`` without ever forming the
    ``N x N`` residual maker. A 1-D ``targets`` gives a 1-D result.
    """
    t = np.asarray(targets, dtype=np.float64)
    vector = t.ndim == 1
    t = as_matrix(t, "targets")
    z = as_matrix(z, "z")
    n, p = z.shape
    if t.shape[0] != n:
        raise DimensionMismatch(f"targets have {t.shape[0]} rows but z has {n}")
    if p < 1 or n <= p:
        raise DimensionMismatch(f"need N > p >= 1, got N={n}, p={p}")
    coef = cholesky(symmetrize(z.T @ z)).solve(z.T @ t)
    out = t - z @ coef
    return out[:, 0] if vector else out


def fwl_fit(design: PartitionedDesign) -> PartialFit:
    """Partial regression of the residualised outcome on the residualised focus block."""
    stacked = residualize(np.column_stack([design.y, design.w1]), design.w2)
    y_star = np.ascontiguousarray(stacked[:, 0])
    w1_star = np.ascontiguousarray(stacked[:, 1:])
    raw_diag = float(np.max(np.einsum("ij,ij->j", design.w1, design.w1)))
    fit = ols_fit(w1_star, y_star, pivot_scale=raw_diag)
    return PartialFit(
        b1_tilde=fit.coefficients,
        u_tilde=fit.residuals,
        y_star=frozen(y_star, owned=True),
        w1_star=frozen(w1_star, owned=True),
        gram22=fit.gram_inverse,
        k2=design.k2,
        condition=fit.condition,
    )


def full_fit(design: PartitionedDesign) -> RegressionFit:
    """Multiple regression of ``y`` on ``[W2 : W1]``."""
    return ols_fit(design.w, design.y)


def leverages(design: PartitionedDesign, blocks: GramInverseBlocks) -> np.ndarray:
    """Diagonal of the hat matrix of ``[W2 : W1]`` from the inverse Gram blocks.

    Only ``k1``- and ``k2``-sized products are used::

        h_i = a_i' w11 a_i + 2 a_i' w12 c_i + c_i' w22 c_i

    with ``a_i`` and ``c_i`` the control and focus rows of observation ``i``.
    """
    if blocks.k1 != design.k1 or blocks.k2 != design.k2:
        raise DimensionMismatch(
            f"blocks are for k1={blocks.k1}, k2={blocks.k2}; "
            f"design has k1={design.k1}, k2={design.k2}"
        )
    h = _kernels.active.block_leverage(
        design.w2,
        design.w1,
        np.ascontiguousarray(blocks.w11),
        np.ascontiguousarray(blocks.w12),
        np.ascontiguousarray(blocks.w22),
    )
    return frozen(h, owned=True)


def hat_diagonal(x, gram_inverse=None) -> np.ndarray:
    """Leverages ``x_i' (X'X)^-1 x_i`` of an unpartitioned regressor matrix."""
    x = np.ascontiguousarray(as_matrix(x, "X"))
    if gram_inverse is None:
        gram_inverse = cholesky(symmetrize(x.T @ x)).inverse()
    g = np.ascontiguousarray(as_matrix(gram_inverse, "gram_inverse"))
    if g.shape != (x.shape[1], x.shape[1]):
        raise DimensionMismatch(f"gram_inverse is {g.shape}, X has {x.shape[1]} columns")
    return frozen(_kernels.active.row_quadratic(x, g), owned=True)


def saturated(h, tol: float = 1e-12) -> np.ndarray:
    """Boolean mask of observations whose leverage is 1 up to ``tol``."""
    return np.asarray(h) >= 1.0 - tol


def detrend_linear(series) -> np.ndarray:
    """Residuals of each column on a constant and a linear trend ``1..N``."""
    s = np.asarray(series, dtype=np.float64)
    n = s.shape[0] if s.ndim else 0
    if n < 3:
        raise DimensionMismatch(f"detrending needs N >= 3, got {n}")
    trend = np.column_stack([np.ones(n), np.arange(1.0, n + 1.0)])
    return residualize(s, trend)

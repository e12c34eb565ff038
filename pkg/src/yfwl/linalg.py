"""Dense linear algebra: validated matrices, guarded Cholesky solves and the
partitioned inverse of a two-block Gram matrix.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Arrays that end
up inside result objects are marked read-only so results stay immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import DimensionMismatch, NotPositiveDefinite

EPS = 2.0**-52
SYMMETRY_RTOL = 1e-8


def as_matrix(a, name: str = "matrix", *, ndim: int = 2) -> np.ndarray:
    """Convert ``a`` to a finite float64 array with ``ndim`` dimensions.

    1-D input is promoted to a single column when ``ndim == 2``.
    """
    arr = np.asarray(a, dtype=np.float64)
    if ndim == 2 and arr.ndim == 1:
        arr = arr[:, None]
    if ndim == 1 and arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def frozen(a: np.ndarray, *, owned: bool = False) -> np.ndarray:
    """Return ``a`` as a read-only C-contiguous float64 array.

    Arrays the caller does not own are copied first so the caller's flags are
    left alone.
    """
    if owned and a.flags.c_contiguous and a.dtype == np.float64:
        out = a
    elif not a.flags.writeable and a.flags.c_contiguous and a.dtype == np.float64:
        return a
    else:
        out = np.array(a, dtype=np.float64, order="C")
    out.flags.writeable = False
    return out


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower Cholesky factor of an SPD matrix, with a reciprocal condition estimate."""

    lower: np.ndarray
    rcond: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def condition(self) -> float:
        """1-norm condition number estimate of the factored matrix."""
        return np.inf if self.rcond == 0 else 1.0 / self.rcond

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.cho_solve((self.lower, True), b, check_finite=False)

    def inverse(self) -> np.ndarray:
        return symmetrize(self.solve(np.eye(self.n)))


def cholesky(a: np.ndarray, *, scale: float = 0.0) -> CholeskyFactor:
    """Factor a symmetric positive-definite matrix.

    Parameters
    ----------
    a : ndarray
        Symmetric positive-definite ``n x n`` matrix.
    scale : float, optional
        Diagonal magnitude the pivot tolerance is measured against when it
        exceeds ``max(diag(a))``. Gram matrices of residualised columns pass
        the diagonal of the raw Gram here, otherwise a column that is
        collinear with the partialled-out block leaves pure rounding noise
        that would be judged against its own (tiny) size.

    Raises
    ------
    NotPositiveDefinite
        If LAPACK rejects the matrix, or any pivot ``L_jj**2`` is at or below
        ``n * eps * max(max(diag(a)), scale)``.
    """
    a = as_matrix(a, "A")
    n, m = a.shape
    if n != m or n == 0:
        raise DimensionMismatch(f"A must be square and non-empty, got {a.shape}")
    magnitude = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * magnitude:
        raise ValueError("A is not symmetric")
    max_diag = np.max(np.diag(a))
    if max_diag <= 0:
        raise NotPositiveDefinite("matrix has no positive diagonal entry")
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite (collinear regressors?)") from exc
    pivots = np.diag(lower) ** 2
    tol = n * EPS * max(max_diag, scale)
    bad = np.flatnonzero(pivots <= tol)
    if bad.size:
        raise NotPositiveDefinite(
            f"pivot {bad[0]} is {pivots[bad[0]]:.3g} <= tolerance {tol:.3g} "
            "(collinear regressors?)"
        )
    anorm = np.max(np.sum(np.abs(a), axis=0))
    rcond, info = lapack.dpocon(lower, anorm, uplo="L")
    if info != 0:  # pragma: no cover - dpocon only fails on bad arguments
        rcond = 0.0
    return CholeskyFactor(lower=lower, rcond=float(rcond))


def cholesky_solve(a, b) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive-definite ``A``.

    ``B`` may be a vector or an ``n x m`` matrix; the result has the same
    shape as ``B``. Neither input is modified.

    >>> cholesky_solve([[4.0, 2.0], [2.0, 3.0]], [[2.0], [1.0]])
    array([[0.5],
           [0. ]])
    """
    a = as_matrix(a, "A")
    b_arr = np.asarray(b, dtype=np.float64)
    if b_arr.ndim not in (1, 2):
        raise DimensionMismatch(f"B must be 1-D or 2-D, got shape {b_arr.shape}")
    if b_arr.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"A is {a.shape} but B has {b_arr.shape[0]} rows")
    if not np.all(np.isfinite(b_arr)):
        raise ValueError("B contains NaN or Inf")
    return cholesky(a).solve(b_arr)


@dataclass(frozen=True)
class GramInverseBlocks:
    """Blocks of ``(W'W)^-1`` for ``W = [W2 : W1]``.

    ``w11`` is the ``k2 x k2`` control block, ``w22`` the ``k1 x k1`` focus
    block and ``w12`` the ``k2 x k1`` off-diagonal block.
    """

    w11: np.ndarray
    w12: np.ndarray
    w22: np.ndarray

    @property
    def k1(self) -> int:
        return self.w22.shape[0]

    @property
    def k2(self) -> int:
        return self.w11.shape[0]

    def assemble(self) -> np.ndarray:
        return np.block([[self.w11, self.w12], [self.w12.T, self.w22]])


def partitioned_gram_inverse(design) -> GramInverseBlocks:
    """Invert ``W'W`` blockwise using only ``k1 x k1`` and ``k2 x k2`` solves.

    With ``M_Z`` the residual maker of ``Z``::

        w11 = (W2' M_W1 W2)^-1
        w22 = (W1' M_W2 W1)^-1
        w12 = -(W2'W2)^-1 W2'W1 w22

    The two Schur complements ``W2' M_W1 W2`` and ``W1' M_W2 W1`` are formed
    from the Gram blocks, so no ``N``-length residual matrices are built.
    """
    w1, w2 = design.w1, design.w2
    gram_ctrl = symmetrize(w2.T @ w2)
    gram_focus = symmetrize(w1.T @ w1)
    cross = w2.T @ w1
    ctrl_proj = cholesky(gram_ctrl).solve(cross)  # (W2'W2)^-1 W2'W1, k2 x k1
    focus_proj = cholesky(gram_focus).solve(cross.T)  # (W1'W1)^-1 W1'W2, k1 x k2
    # pivots are judged against the whole Gram diagonal, see ``cholesky``
    scale = max(np.max(np.diag(gram_ctrl)), np.max(np.diag(gram_focus)))
    w22 = cholesky(symmetrize(gram_focus - cross.T @ ctrl_proj), scale=scale).inverse()
    w11 = cholesky(symmetrize(gram_ctrl - cross @ focus_proj), scale=scale).inverse()
    w12 = -ctrl_proj @ w22
    return GramInverseBlocks(
        w11=frozen(w11, owned=True), w12=frozen(w12, owned=True), w22=frozen(w22, owned=True)
    )

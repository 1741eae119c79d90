"""Sparse symmetric storage, preconditioned CG, and extreme eigenvalues."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sps

from .errors import BreakdownError, ConvergenceFailure, DimensionMismatch, DomainError
from .grf import RngSeed, derive_stream


@dataclass(eq=False)
class SparseMatrix:
    """Compressed sparse row storage with validated structure.

    Column indices are strictly increasing within each row. Matrix-vector
    products are delegated to scipy; the CSR arrays themselves are the
    contract surface. Immutable by convention after construction.
    """

    n_rows: int
    row_offsets: np.ndarray
    column_indices: np.ndarray
    values: np.ndarray
    symmetric: bool = False
    _scipy: sps.csr_matrix = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.row_offsets = np.asarray(self.row_offsets)
        self.column_indices = np.asarray(self.column_indices)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.row_offsets.shape != (self.n_rows + 1,):
            raise DomainError("row_offsets must have length n_rows + 1")
        if np.any(np.diff(self.row_offsets) < 0):
            raise DomainError("row_offsets must be nondecreasing")
        nnz = int(self.row_offsets[-1])
        if self.column_indices.shape != (nnz,) or self.values.shape != (nnz,):
            raise DomainError("index/value arrays must match row_offsets[-1]")
        if nnz and (self.column_indices.min() < 0 or self.column_indices.max() >= self.n_rows):
            raise DomainError("column index out of bounds")
        # strictly increasing within each row: diffs may only be nonpositive
        # at row boundaries
        if nnz > 1:
            nonincreasing = np.flatnonzero(np.diff(self.column_indices) <= 0) + 1
            if not np.all(np.isin(nonincreasing, self.row_offsets[1:-1])):
                raise DomainError("column indices must be strictly increasing per row")
        self._scipy = sps.csr_matrix(
            (self.values, self.column_indices, self.row_offsets),
            shape=(self.n_rows, self.n_rows),
        )
        if self.symmetric:
            diff = self._scipy - self._scipy.T
            if diff.nnz and abs(diff).max() > 0:
                raise DomainError("matrix flagged symmetric is not symmetric")

    @classmethod
    def from_scipy(cls, m, symmetric: bool = False) -> "SparseMatrix":
        csr = sps.csr_matrix(m)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(
            n_rows=csr.shape[0],
            row_offsets=csr.indptr,
            column_indices=csr.indices,
            values=csr.data,
            symmetric=symmetric,
        )

    def to_scipy(self) -> sps.csr_matrix:
        return self._scipy

    def diagonal(self) -> np.ndarray:
        return self._scipy.diagonal()

    def toarray(self) -> np.ndarray:
        return self._scipy.toarray()


def spmv(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product a @ x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.n_rows,):
        raise DimensionMismatch(f"expected vector of length {a.n_rows}, got {x.shape}")
    return a.to_scipy() @ x


class CgResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float


def cg_solve(
    a: SparseMatrix,
    b: np.ndarray,
    tol: float = 1e-8,
    max_iter: Optional[int] = None,
    preconditioner: Optional[str] = "jacobi",
    callback: Optional[Callable[[np.ndarray], None]] = None,
) -> CgResult:
    """Conjugate gradients for SPD systems, to a relative residual.

    Parameters
    ----------
    a, b : the system; ``a`` must be symmetric positive definite.
    tol : stop when ||b - a x|| <= tol * ||b||, tol in (0, 1).
    max_iter : iteration cap, default 10 * n_rows.
    preconditioner : "jacobi", "none", or None.
    callback : called with the current iterate after each iteration.

    Returns (x, iterations, final relative residual). Raises
    ConvergenceFailure carrying the best iterate if the cap is hit, and
    BreakdownError on a nonpositive curvature term (non-SPD input).
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.n_rows,):
        raise DimensionMismatch(f"rhs length {b.shape} does not match {a.n_rows} rows")
    if not 0.0 < tol < 1.0:
        raise DomainError(f"tol must lie in (0, 1), got {tol}")
    if max_iter is None:
        max_iter = 10 * a.n_rows

    mat = a.to_scipy()
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return CgResult(np.zeros_like(b), 0, 0.0)

    precond = (preconditioner or "none").lower()
    if precond == "jacobi":
        diag = a.diagonal()
        if np.any(diag <= 0):
            raise BreakdownError("Jacobi preconditioner needs a positive diagonal")
        apply_m = lambda r: r / diag
    elif precond == "none":
        apply_m = lambda r: r
    else:
        raise DomainError(f"unknown preconditioner {preconditioner!r}")

    x = np.zeros_like(b)
    r = b.copy()
    z = apply_m(r)
    p = z.copy()
    rz = float(r @ z)
    best_x, best_res = x.copy(), 1.0
    for iteration in range(1, max_iter + 1):
        ap = mat @ p
        curvature = float(p @ ap)
        if curvature <= 0.0:
            raise BreakdownError(
                f"curvature p'Ap = {curvature:.3e} at iteration {iteration}; "
                "matrix is not positive definite"
            )
        alpha = rz / curvature
        x += alpha * p
        r -= alpha * ap
        if callback is not None:
            callback(x)
        res = float(np.linalg.norm(r)) / b_norm
        if res < best_res:
            best_res = res
            best_x = x.copy()
        if res <= tol:
            return CgResult(x, iteration, res)
        z = apply_m(r)
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    raise ConvergenceFailure(
        f"CG hit the {max_iter}-iteration cap at relative residual {best_res:.3e} "
        f"(target {tol:.3e})",
        iterations=max_iter,
        residual=best_res,
        best=best_x,
    )


@dataclass(frozen=True)
class SpectrumEstimate:
    """Extreme eigenvalues of an SPD operator and their ratio."""

    lambda_max: float
    lambda_min: float
    kappa: float
    iterations_used: int
    residual_max: float
    residual_min: float


def _rayleigh_residual(mat, v: np.ndarray, theta: float) -> float:
    return float(np.linalg.norm(mat @ v - theta * v)) / abs(theta)


def _start_vector(n: int, label: str) -> np.ndarray:
    rng = RngSeed(0, derive_stream(label)).generator()
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _geometric_tail(theta, theta_prev, delta_prev):
    """Remaining error of a geometrically converging scalar sequence.

    Successive increments of power/inverse iteration Rayleigh quotients
    shrink by a near-constant ratio r, so the outstanding error is about
    delta * r / (1 - r) (Aitken's argument). Returns (tail, delta).
    """
    delta = abs(theta - theta_prev)
    if delta == 0.0:
        return 0.0, delta
    if delta_prev is None or delta_prev <= 0 or delta >= delta_prev:
        return None, delta
    r = delta / delta_prev
    return delta * r / (1.0 - r), delta


def estimate_extreme_eigenvalues(a: SparseMatrix, tol: float = 1e-3) -> SpectrumEstimate:
    """Estimate lambda_max, lambda_min, and their ratio for an SPD matrix.

    lambda_max comes from power iteration and lambda_min from inverse
    iteration whose steps are CG solves at tol/10; both stop once the
    estimated geometric tail of the Rayleigh quotient drops below a third
    of the requested relative tolerance, and both use fixed-seed start
    vectors so estimates are reproducible.
    """
    if not 0.0 < tol < 1.0:
        raise DomainError(f"tol must lie in (0, 1), got {tol}")
    mat = a.to_scipy()
    n = a.n_rows
    iterations = 0

    # power iteration for the top of the spectrum
    v = _start_vector(n, "eigs-max")
    theta_prev, delta_prev = None, None
    lambda_max = None
    max_power = max(200 * int(np.sqrt(n)) + 100, 2000)
    for _ in range(max_power):
        iterations += 1
        w = mat @ v
        theta = float(v @ w)
        if theta_prev is not None:
            tail, delta = _geometric_tail(theta, theta_prev, delta_prev)
            if tail is not None and tail <= tol * abs(theta) / 3.0:
                lambda_max = float(theta + np.sign(theta - theta_prev) * tail)
                break
            delta_prev = delta
        theta_prev = theta
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            raise BreakdownError("power iteration hit the null space; matrix is singular")
        v = w / norm
    if lambda_max is None:
        raise ConvergenceFailure(
            f"power iteration did not settle within {max_power} iterations",
            iterations=iterations,
            residual=_rayleigh_residual(mat, v, theta),
            best=theta,
        )
    residual_max = _rayleigh_residual(mat, v, lambda_max)

    # inverse iteration for the bottom; each step is a CG solve
    v = _start_vector(n, "eigs-min")
    theta_prev, delta_prev = None, None
    lambda_min = None
    for _ in range(300):
        iterations += 1
        w, _, _ = cg_solve(a, v, tol=tol / 10.0, preconditioner="jacobi")
        w_norm = float(np.linalg.norm(w))
        if w_norm == 0.0:
            raise BreakdownError("inverse iteration produced a zero vector")
        w /= w_norm
        theta = float(w @ (mat @ w))
        if theta_prev is not None:
            tail, delta = _geometric_tail(theta, theta_prev, delta_prev)
            if tail is not None and tail <= tol * abs(theta) / 3.0:
                lambda_min = float(theta + np.sign(theta - theta_prev) * tail)
                v = w
                break
            delta_prev = delta
        theta_prev = theta
        v = w
    if lambda_min is None:
        partial = SpectrumEstimate(
            lambda_max=lambda_max,
            lambda_min=theta,
            kappa=abs(lambda_max) / abs(theta),
            iterations_used=iterations,
            residual_max=residual_max,
            residual_min=_rayleigh_residual(mat, v, theta),
        )
        raise ConvergenceFailure(
            "inverse iteration did not settle within 300 steps",
            iterations=iterations,
            residual=partial.residual_min,
            best=partial,
        )
    return SpectrumEstimate(
        lambda_max=lambda_max,
        lambda_min=lambda_min,
        kappa=float(abs(lambda_max) / abs(lambda_min)),
        iterations_used=iterations,
        residual_max=residual_max,
        residual_min=_rayleigh_residual(mat, v, lambda_min),
    )

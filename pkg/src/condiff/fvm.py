"""Cell-centered finite volume discretization of -div(k grad u) = f.

Unknowns, coefficients, and forcing all live at cell centers of the unit
square with homogeneous Dirichlet boundary values. Fluxes use two-point
harmonic-mean transmissibilities; on the uniform grid the geometric
factors cancel, so an interior face carries 2 k_L k_R / (k_L + k_R) and a
boundary face 2 k_cell (ghost value u = 0 at distance h/2). Rows stay in
transmissibility form with rhs f h^2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sps

from .errors import ConvergenceFailure, DomainError, GridMismatch
from .fields import CoefficientField
from .grf import GridSpec, ScalarField
from .sparse import SparseMatrix, cg_solve

DEFAULT_SOLVER_TOL = 1e-8


@dataclass(eq=False)
class Problem:
    """Assembled sparse SPD system tied to its grid and input fields."""

    grid: GridSpec
    matrix: SparseMatrix
    rhs: np.ndarray
    coefficient: CoefficientField
    forcing: ScalarField


def face_transmissibility(k_left: float, k_right: float) -> float:
    """Harmonic-mean coupling 2 k_L k_R / (k_L + k_R) across an interior face."""
    if not (k_left > 0 and k_right > 0):
        raise DomainError(
            f"coefficients must be positive, got ({k_left}, {k_right})"
        )
    return 2.0 * k_left * k_right / (k_left + k_right)


def assemble(k: CoefficientField, f: ScalarField) -> Problem:
    """Assemble the 5-point system for coefficient k and forcing f.

    Each row has the sum of its face transmissibilities on the diagonal
    and minus the transmissibility on each interior-neighbor off-diagonal;
    boundary faces add 2 k_cell to the diagonal only. rhs is f h^2.
    """
    if k.grid != f.grid:
        raise GridMismatch(f"coefficient grid {k.grid} differs from forcing grid {f.grid}")
    if np.any(k.k_values <= 0):
        raise DomainError("coefficient field must be strictly positive")
    n = k.grid.n
    h = k.grid.h
    kg = k.as_grid()
    idx = np.arange(n * n).reshape(n, n)
    diag = np.zeros((n, n))
    rows, cols, vals = [], [], []

    def couple(t, a, b):
        rows.append(idx[a].ravel())
        cols.append(idx[b].ravel())
        vals.append(-t.ravel())
        rows.append(idx[b].ravel())
        cols.append(idx[a].ravel())
        vals.append(-t.ravel())
        diag[a] += t
        diag[b] += t

    # east-west faces between columns i and i+1, north-south between rows
    t_ew = 2.0 * kg[:, :-1] * kg[:, 1:] / (kg[:, :-1] + kg[:, 1:])
    couple(t_ew, (slice(None), slice(None, -1)), (slice(None), slice(1, None)))
    t_ns = 2.0 * kg[:-1, :] * kg[1:, :] / (kg[:-1, :] + kg[1:, :])
    couple(t_ns, (slice(None, -1), slice(None)), (slice(1, None), slice(None)))

    # Dirichlet ghost at h/2 beyond each boundary face
    diag[:, 0] += 2.0 * kg[:, 0]
    diag[:, -1] += 2.0 * kg[:, -1]
    diag[0, :] += 2.0 * kg[0, :]
    diag[-1, :] += 2.0 * kg[-1, :]

    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    coo = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n * n, n * n),
    )
    matrix = SparseMatrix.from_scipy(coo, symmetric=True)
    return Problem(
        grid=k.grid,
        matrix=matrix,
        rhs=f.values * h * h,
        coefficient=k,
        forcing=f,
    )


def solve(
    problem: Problem,
    tol: float = DEFAULT_SOLVER_TOL,
    max_iter: Optional[int] = None,
    preconditioner: str = "jacobi",
) -> ScalarField:
    """Solve to a relative residual of tol; iteration cap defaults to 50 n."""
    if max_iter is None:
        max_iter = 50 * problem.grid.n
    try:
        x, _, _ = cg_solve(
            problem.matrix,
            problem.rhs,
            tol=tol,
            max_iter=max_iter,
            preconditioner=preconditioner,
        )
    except ConvergenceFailure as exc:
        raise ConvergenceFailure(
            f"solve stalled at relative residual {exc.residual:.3e} after "
            f"{exc.iterations} iterations (cap 50 n = {max_iter})",
            iterations=exc.iterations,
            residual=exc.residual,
            best=exc.best,
        ) from exc
    return ScalarField(problem.grid, x)

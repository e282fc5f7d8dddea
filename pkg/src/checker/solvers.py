"""
CF-Safe - Linear Solvers
Solvers for x = A x + b on the undetermined states of a reachability query

Rows are given as sparse dicts {column: coefficient} of A restricted to the
unknowns, indexed in ascending BFS order. All solvers eliminate or sweep in
that order.
"""

import heapq
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from src.model.errors import NoConvergence

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-12
DEFAULT_MAX_SWEEPS = 10 ** 6
DEFAULT_BUDGET_BYTES = 2 * 1024 ** 3

# rough per-entry cost of a stored factor coefficient
FLOAT_ENTRY_BYTES = 16
EXACT_ENTRY_BYTES = 160


@dataclass(frozen=True)
class SolveResult:
    values: Sequence
    solver: str
    iterations: Optional[int] = None
    residual: Optional[float] = None


def envelope_bytes(rows: Sequence[Dict[int, object]], exact: bool) -> int:
    """
    Upper bound on the memory of an unpivoted factorization.

    Fill-in of LU without pivoting stays inside the envelope (profile) of the
    matrix, so the profile bounds the number of stored coefficients.
    """
    n = len(rows)
    first_in_column = list(range(n))
    row_profile = 0
    for i, row in enumerate(rows):
        lowest = i
        for j in row:
            if j < lowest:
                lowest = j
            if i < first_in_column[j]:
                first_in_column[j] = i
        row_profile += i - lowest
    column_profile = sum(j - first for j, first in enumerate(first_in_column))
    entries = row_profile + column_profile + n
    return entries * (EXACT_ENTRY_BYTES if exact else FLOAT_ENTRY_BYTES)


def solve_elimination(rows: Sequence[Dict[int, object]], rhs: Sequence, zero, one) -> List:
    """
    Sparse Gaussian elimination of (I - A) x = b in natural order, then back substitution.

    Works on any field type; with Fractions the result is exact. (I - A) is a
    nonsingular M-matrix once states that cannot reach the target are removed,
    so every pivot is positive and no pivoting is needed.
    """
    n = len(rows)
    diagonal: List = [zero] * n
    upper: List[Dict[int, object]] = [None] * n
    reduced_rhs: List = [zero] * n

    for i in range(n):
        row: Dict[int, object] = {}
        for j, a in rows[i].items():
            row[j] = row.get(j, zero) - a
        row[i] = row.get(i, zero) + one
        value = rhs[i]

        pending = [j for j in row if j < i]
        heapq.heapify(pending)
        while pending:
            k = heapq.heappop(pending)
            coefficient = row.pop(k)
            if not coefficient:
                continue
            factor = coefficient / diagonal[k]
            value -= factor * reduced_rhs[k]
            for j, u in upper[k].items():
                if j in row:
                    row[j] -= factor * u
                else:
                    row[j] = -factor * u
                    if j < i:
                        heapq.heappush(pending, j)

        diagonal[i] = row.pop(i)
        upper[i] = {j: v for j, v in row.items() if v}
        reduced_rhs[i] = value

    x: List = [zero] * n
    for i in range(n - 1, -1, -1):
        total = reduced_rhs[i]
        for j, u in upper[i].items():
            total -= u * x[j]
        x[i] = total / diagonal[i]
    return x


def _system_matrix(rows: Sequence[Dict[int, object]]) -> scipy.sparse.csr_matrix:
    n = len(rows)
    data, row_idx, col_idx = [], [], []
    for i, row in enumerate(rows):
        for j, a in row.items():
            row_idx.append(i)
            col_idx.append(j)
            data.append(float(a))
    return scipy.sparse.csr_matrix((data, (row_idx, col_idx)), shape=(n, n))


def solve_float_lu(rows: Sequence[Dict[int, object]], rhs: Sequence) -> np.ndarray:
    """Sparse LU in natural order with diagonal pivots"""
    n = len(rows)
    if n == 0:
        return np.zeros(0)
    system = (scipy.sparse.identity(n, format="csc") - _system_matrix(rows).tocsc()).tocsc()
    b = np.asarray([float(v) for v in rhs], dtype=np.float64)
    lu = scipy.sparse.linalg.splu(system, permc_spec="NATURAL", diag_pivot_thresh=0.0)
    return lu.solve(b)


def solve_gauss_seidel(rows: Sequence[Dict[int, object]], rhs: Sequence, *,
                       tol: float = DEFAULT_TOLERANCE, max_sweeps: int = DEFAULT_MAX_SWEEPS) -> SolveResult:
    """
    Gauss-Seidel sweeps from x = 0 until the largest update is below `tol`.

    One sweep solves (I - L) x_new = U x_old + b, where L holds A on and below
    the diagonal and U strictly above it.
    """
    n = len(rows)
    if n == 0:
        return SolveResult([], "value-iteration", 0, 0.0)
    matrix = _system_matrix(rows)
    lower = (scipy.sparse.identity(n, format="csr") - scipy.sparse.tril(matrix, k=0)).tocsr()
    strict_upper = scipy.sparse.triu(matrix, k=1).tocsr()
    b = np.asarray([float(v) for v in rhs], dtype=np.float64)

    x = np.zeros(n)
    residual = float("inf")
    for sweep in range(1, max_sweeps + 1):
        x_new = scipy.sparse.linalg.spsolve_triangular(lower, strict_upper @ x + b, lower=True)
        residual = float(np.max(np.abs(x_new - x)))
        x = x_new
        if residual < tol:
            logger.debug("Gauss-Seidel converged after %d sweeps (residual %.3g)", sweep, residual)
            return SolveResult(x, "value-iteration", sweep, residual)
    raise NoConvergence(f"no convergence after {max_sweeps} sweeps (residual {residual:.3g})")

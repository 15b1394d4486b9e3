# -*- test-case-name: scdnewton.test.test_linalg -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Sparse kernels: canonical CSR storage, ILU(0), right-preconditioned
restarted GMRES, direct factorization and the power method used to pick
gamma.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Any

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from twisted.python import log

GAMMA_ITERATIONS = 5
GMRES_RESTART = 200
GMRES_MAX_INNER = 2000


class ZeroPivot(Exception):
    """
    ILU(0) met a zero pivot
    """

    def __init__(self, row: int) -> None:
        super().__init__(f"zero pivot in row {row}")
        self.row = row


class Stagnation(Exception):
    """
    GMRES ran out of inner iterations before reaching the tolerance
    """

    def __init__(self, iterations: int, relative_residual: float) -> None:
        super().__init__(
            f"GMRES stagnated after {iterations} iterations "
            f"(relative residual {relative_residual:.3e})"
        )
        self.iterations = iterations
        self.relative_residual = relative_residual


class SingularFactor(Exception):
    """
    A direct factorization found the matrix singular
    """


def as_csr(a: Any) -> sp.csr_matrix:
    """
    Canonical CSR copy: float64, duplicates summed, sorted columns
    """
    m = sp.csr_matrix(a, dtype=float, copy=True)
    m.sum_duplicates()
    m.sort_indices()
    return m


def estimate_gamma(a: Any, iterations: int = GAMMA_ITERATIONS) -> float:
    """
    Largest eigenvalue estimate by the power method.

    Starts from the normalized all-ones vector and returns the Rayleigh
    quotient of the last iterate.
    """
    n = a.shape[0]
    x = np.ones(n) / np.sqrt(n)
    for _ in range(iterations):
        y = a @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x = y / norm
    return float(x @ (a @ x)) / float(x @ x)


class ILU0:
    """
    Incomplete LU factors on the sparsity pattern of the input; `lower`
    has a unit diagonal that is not stored.
    """

    def __init__(self, lower: sp.csr_matrix, upper: sp.csr_matrix) -> None:
        self.lower = lower
        self.upper = upper
        self.shape = upper.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = spla.spsolve_triangular(self.lower, b, lower=True, unit_diagonal=True)
        return spla.spsolve_triangular(self.upper, y, lower=False)


def ilu0(a: Any) -> ILU0:
    """
    Zero fill-in incomplete LU in the given row order, without pivoting.

    @raise ZeroPivot: missing or vanishing diagonal entry
    """
    m = as_csr(a)
    n = m.shape[0]
    indptr = m.indptr
    indices = m.indices
    data = m.data

    diag = np.empty(n, dtype=np.intp)
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        k = start + int(np.searchsorted(indices[start:end], i))
        if k == end or indices[k] != i:
            raise ZeroPivot(i)
        diag[i] = k

    slot = np.full(n, -1, dtype=np.intp)
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        cols = indices[start:end]
        slot[cols] = np.arange(start, end)
        for kk in range(start, diag[i]):
            k = indices[kk]
            factor = data[kk] / data[diag[k]]
            data[kk] = factor
            upper = slice(diag[k] + 1, indptr[k + 1])
            target = slot[indices[upper]]
            hit = target >= 0
            data[target[hit]] -= factor * data[upper][hit]
        if data[diag[i]] == 0.0 or not np.isfinite(data[diag[i]]):
            raise ZeroPivot(i)
        slot[cols] = -1

    lower = sp.tril(m, k=-1, format="csr")
    upper = sp.triu(m, k=0, format="csr")
    return ILU0(lower, upper)


def gmres_solve(
    a: Any,
    b: np.ndarray,
    precond: ILU0 | None = None,
    tol: float = 0.1,
    restart: int = GMRES_RESTART,
    max_inner: int = GMRES_MAX_INNER,
    callback: Callable[[float], None] | None = None,
) -> tuple[np.ndarray, int]:
    """
    Restarted GMRES with right preconditioning, started from zero.

    Right preconditioning keeps the Arnoldi residual equal to the residual
    of the original system, so the stopping test ||b - a x|| <= tol ||b||
    is the unpreconditioned one.

    @param callback: receives the residual estimate after every inner step
    @return: (x, total inner iterations)
    @raise Stagnation: if max_inner iterations do not reach the tolerance
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, 0
    target = tol * bnorm
    total = 0

    def apply_precond(v: np.ndarray) -> np.ndarray:
        return v if precond is None else precond.solve(v)

    while True:
        r = b - a @ x
        beta = float(np.linalg.norm(r))
        if beta <= target:
            return x, total
        if total >= max_inner:
            raise Stagnation(total, beta / bnorm)

        m = min(restart, max_inner - total)
        basis = np.zeros((m + 1, n))
        search = np.zeros((m, n))
        hess = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        basis[0] = r / beta

        steps = 0
        for j in range(m):
            search[j] = apply_precond(basis[j])
            w = a @ search[j]
            for i in range(j + 1):
                hess[i, j] = w @ basis[i]
                w = w - hess[i, j] * basis[i]
            hess[j + 1, j] = np.linalg.norm(w)
            breakdown = hess[j + 1, j] == 0.0
            if not breakdown:
                basis[j + 1] = w / hess[j + 1, j]

            for i in range(j):
                upper = cs[i] * hess[i, j] + sn[i] * hess[i + 1, j]
                hess[i + 1, j] = -sn[i] * hess[i, j] + cs[i] * hess[i + 1, j]
                hess[i, j] = upper
            denom = np.hypot(hess[j, j], hess[j + 1, j])
            if denom == 0.0:
                raise Stagnation(total, float(abs(g[j])) / bnorm)
            cs[j] = hess[j, j] / denom
            sn[j] = hess[j + 1, j] / denom
            hess[j, j] = denom
            hess[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            total += 1
            steps = j + 1
            estimate = float(abs(g[j + 1]))
            if callback is not None:
                callback(estimate)
            if estimate <= target or breakdown:
                break

        y = scipy.linalg.solve_triangular(hess[:steps, :steps], g[:steps])
        x = x + search[:steps].T @ y


def direct_solve(a: Any, b: np.ndarray) -> np.ndarray:
    """
    Solve a x = b by LU factorization (SuperLU for sparse input).

    @raise SingularFactor: if the factorization breaks down
    """
    try:
        if sp.issparse(a):
            x = spla.splu(sp.csc_matrix(a, dtype=float)).solve(np.asarray(b, dtype=float))
        else:
            x = scipy.linalg.solve(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    except (RuntimeError, np.linalg.LinAlgError) as e:
        raise SingularFactor(str(e)) from e
    if not np.all(np.isfinite(x)):
        raise SingularFactor("non-finite solution")
    return x


def ilu_gmres_solve(
    a: Any, b: np.ndarray, tol: float, restart: int, max_inner: int
) -> tuple[np.ndarray, int]:
    """
    GMRES on `a` preconditioned by its own ILU(0)
    """
    m = as_csr(a)
    precond = ilu0(m)
    x, iterations = gmres_solve(m, b, precond, tol=tol, restart=restart, max_inner=max_inner)
    log.msg(
        eventid="scdnewton.linalg.gmres",
        format="GMRES: %(iterations)d iterations, n=%(n)d",
        iterations=iterations,
        n=m.shape[0],
    )
    return x, iterations

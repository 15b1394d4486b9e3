# -*- test-case-name: scdnewton.test.test_subspaces -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Subspace algebra on R^2n.

A subspace L of dimension n is carried by a basis pair (a, b) of n x n
matrices, L = rge(a, b) = {(a u, b u) : u in R^n}. Primal subspaces are read
as (x, y) pairs, adjoint subspaces as (y*, x*) pairs.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Union

import attrs
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from twisted.python import log

# relative tolerance of the rank-revealing factorizations
RANK_RTOL = 1e-10
# b is declared singular above this condition number
SINGULAR_COND = 1e14
# regular, but worth a line in the log
ILL_CONDITIONED = 1e8

Matrix = Union[np.ndarray, sp.spmatrix]


class RankDeficient(Exception):
    """
    The stacked matrix [a; b] does not have full column rank
    """

    def __init__(self, rank: int, n: int) -> None:
        super().__init__(f"column rank {rank} < {n}")
        self.rank = rank
        self.n = n


class NotRegular(Exception):
    """
    The b component of the basis is singular, the subspace has no C_L matrix
    """

    def __init__(self, cond: float) -> None:
        super().__init__(f"b is singular (condition estimate {cond:.3e})")
        self.cond = cond


def _dense(m: Matrix) -> np.ndarray:
    if sp.issparse(m):
        return np.asarray(m.toarray(), dtype=float)
    return np.asarray(m, dtype=float)


@attrs.frozen(eq=False)
class SubspaceBasis:
    """
    Basis pair (a, b) of an n-dimensional subspace of R^2n.

    a and b are either dense arrays or scipy sparse matrices; the sparse form
    is produced by the product rule and consumed by the Newton systems.
    """

    a: Matrix
    b: Matrix

    @property
    def n(self) -> int:
        return int(self.a.shape[0])

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.a) or sp.issparse(self.b)

    def stacked(self) -> np.ndarray:
        """
        Dense 2n x n matrix [a; b]
        """
        return np.vstack([_dense(self.a), _dense(self.b)])

    def dense(self) -> SubspaceBasis:
        if not self.is_sparse:
            return self
        return SubspaceBasis(_dense(self.a), _dense(self.b))


@attrs.frozen(eq=False)
class RegularSubspace:
    """
    A subspace rge(a, b) with b nonsingular, together with C_L = a b^-1
    and its spectral norm.
    """

    basis: SubspaceBasis
    c: np.ndarray
    norm: float


def _column_rank(z: np.ndarray) -> tuple[int, np.ndarray]:
    q, r, _ = scipy.linalg.qr(z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return 0, q
    return int(np.count_nonzero(diag > RANK_RTOL * diag[0])), q


def make_basis(a: Matrix, b: Matrix) -> SubspaceBasis:
    """
    Validate and wrap a basis pair.

    @param a: n x n matrix
    @param b: n x n matrix
    @return: SubspaceBasis of rge(a, b)
    """
    a = np.atleast_2d(np.asarray(a, dtype=float)) if not sp.issparse(a) else a
    b = np.atleast_2d(np.asarray(b, dtype=float)) if not sp.issparse(b) else b
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ValueError(f"basis blocks must be square and equal, got {a.shape} and {b.shape}")
    basis = SubspaceBasis(a, b)
    n = basis.n
    rank, _ = _column_rank(basis.stacked())
    if rank < n:
        raise RankDeficient(rank, n)
    return basis


def orthonormal_basis(l: SubspaceBasis) -> np.ndarray:
    """
    Orthonormal 2n x n matrix spanning rge(a, b)
    """
    n = l.n
    rank, q = _column_rank(l.stacked())
    if rank < n:
        raise RankDeficient(rank, n)
    return q[:, :n]


def projector(l: SubspaceBasis) -> np.ndarray:
    q = orthonormal_basis(l)
    return q @ q.T


def dual_subspace(l: SubspaceBasis) -> SubspaceBasis:
    """
    Basis of L* = {(-v*, u*) : (u*, v*) in L^perp}.

    L^perp is the null space of [a^T b^T]; the returned basis is orthonormal.
    """
    n = l.n
    a = _dense(l.a)
    b = _dense(l.b)
    null = scipy.linalg.null_space(np.hstack([a.T, b.T]), rcond=RANK_RTOL)
    if null.shape[1] != n:
        raise RankDeficient(2 * n - null.shape[1], n)
    u_star = null[:n]
    v_star = null[n:]
    return SubspaceBasis(-v_star, u_star)


def c_matrix(l: SubspaceBasis) -> RegularSubspace:
    """
    C_L = a b^-1 for a regular subspace.

    @raise NotRegular: b singular up to a condition estimate of 1e14
    """
    a = _dense(l.a)
    b = _dense(l.b)
    cond = float(np.linalg.cond(b)) if b.size else 1.0
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise NotRegular(cond)
    if cond > ILL_CONDITIONED:
        log.msg(f"c_matrix: ill-conditioned b (condition estimate {cond:.3e})")
    c = np.linalg.solve(b.T, a.T).T
    norm = float(np.linalg.norm(c, 2)) if c.size else 0.0
    return RegularSubspace(basis=l, c=c, norm=norm)


def subspace_metric(l1: SubspaceBasis, l2: SubspaceBasis) -> float:
    """
    Spectral norm of the difference of the orthogonal projections
    """
    if l1.n != l2.n:
        raise ValueError(f"dimension mismatch: {l1.n} != {l2.n}")
    if l1.n == 0:
        return 0.0
    return float(np.linalg.norm(projector(l1) - projector(l2), 2))


def sum_rule_transform(l: SubspaceBasis, jac: Matrix, dual: bool) -> SubspaceBasis:
    """
    Subspace of F + h from a subspace of F.

    Primal pairs (x, y) become (x, y + jac x); adjoint pairs (y*, x*)
    become (y*, x* + jac^T y*).
    """
    if dual:
        return SubspaceBasis(l.a, jac.T @ l.a + l.b)
    return SubspaceBasis(l.a, jac @ l.a + l.b)


def product_blocks(
    blocks: Sequence[SubspaceBasis], tail_dim: int, sparse: bool = False
) -> SubspaceBasis:
    """
    Block-diagonal subspace of a product mapping.

    The tail belongs to a zero mapping and contributes (I, 0) in both the
    primal and the adjoint ordering.

    @param blocks: per-factor bases
    @param tail_dim: dimension of the trailing zero factor
    @param sparse: return scipy CSR blocks instead of dense arrays
    """
    if tail_dim < 0:
        raise ValueError("tail_dim must be nonnegative")
    a_parts: list[Matrix] = [blk.a for blk in blocks]
    b_parts: list[Matrix] = [blk.b for blk in blocks]
    if tail_dim:
        a_parts.append(np.eye(tail_dim))
        b_parts.append(np.zeros((tail_dim, tail_dim)))
    if not a_parts:
        empty = sp.csr_matrix((0, 0)) if sparse else np.zeros((0, 0))
        return SubspaceBasis(empty, empty)
    if sparse:
        return SubspaceBasis(
            sp.block_diag(a_parts, format="csr"), sp.block_diag(b_parts, format="csr")
        )
    return SubspaceBasis(
        scipy.linalg.block_diag(*[_dense(m) for m in a_parts]),
        scipy.linalg.block_diag(*[_dense(m) for m in b_parts]),
    )


def stack_block_arrays(a3: np.ndarray, b3: np.ndarray, tail_dim: int) -> SubspaceBasis:
    """
    Sparse block-diagonal basis from stacked (p, k, k) block arrays.

    Same result as product_blocks(..., sparse=True) without a Python loop
    over the blocks.
    """
    p, k, _ = a3.shape
    n = p * k + tail_dim
    offsets = np.arange(p) * k
    rows = (offsets[:, None, None] + np.arange(k)[None, :, None]) * np.ones((1, 1, k), dtype=int)
    cols = (offsets[:, None, None] + np.arange(k)[None, None, :]) * np.ones((1, k, 1), dtype=int)
    tail = np.arange(p * k, n)

    a = sp.coo_matrix(
        (
            np.concatenate([a3.ravel(), np.ones(tail_dim)]),
            (np.concatenate([rows.ravel(), tail]), np.concatenate([cols.ravel(), tail])),
        ),
        shape=(n, n),
    ).tocsr()
    b = sp.coo_matrix((b3.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    a.eliminate_zeros()
    b.eliminate_zeros()
    return SubspaceBasis(a, b)


def scd_reg_estimate(duals: Sequence[SubspaceBasis]) -> float:
    """
    Largest ||C_L|| over a collection of adjoint subspaces.

    @raise NotRegular: if any member has no C_L matrix
    """
    return max((c_matrix(l).norm for l in duals), default=0.0)

"""Structured linear algebra for the joint estimators.

Everything here works on the stacked coefficient vector a of length
m*d^2, whose l-th block is the column-major vec of the l-th d x d
matrix. The regression operator Q^T Q is block diagonal with blocks
Y_l (x) I_d, so it is never materialized; the smoothing operator adds
lambda * (L (x) I_{d^2}) through the graph Laplacian acting on blocks.

A useful identity used throughout: for the column-major vec convention,
the action of (Y (x) I_d) on vec(A) equals, after reshaping the block to
a d x d matrix in row-major (C) order, the plain product Y @ M — because
the C-order reshape of vec(A) is A^T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .ensembles import TrajectoryBundle

DEFAULT_SOLVE_TOL = 1e-10
DEFAULT_DENSE_THRESHOLD = 4096
# reciprocal condition estimate below this means "numerically singular"
RCOND_SINGULAR = 1e-15


class SingularSystemError(RuntimeError):
    """The penalized operator is (numerically) singular."""


class ConvergenceError(RuntimeError):
    """Iterative solve did not reach the requested residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def stack_mats(mats: np.ndarray) -> np.ndarray:
    """Column-major vec of each d x d matrix, concatenated over nodes."""
    mats = np.asarray(mats, dtype=float)
    m, d, _ = mats.shape
    # transpose(0, 2, 1) then C-flatten == per-block Fortran flatten
    return mats.transpose(0, 2, 1).reshape(m * d * d)


def unstack_mats(a: np.ndarray, m: int, d: int) -> np.ndarray:
    """Inverse of stack_mats: (m*d^2,) -> (m, d, d)."""
    return a.reshape(m, d, d).transpose(0, 2, 1).copy()


@dataclass(frozen=True)
class GramBlocks:
    """Per-node second-moment blocks of a trajectory bundle.

    ys[l] = X_l X_l^T and cs[l] = X~_l X_l^T, where X_l stacks
    x_{l,1}..x_{l,T} and X~_l the shifted targets. The stacked right-hand
    side Q^T x~ has l-th block vec(cs[l]).
    """

    ys: np.ndarray
    cs: np.ndarray
    horizon: int

    @property
    def m(self) -> int:
        return self.ys.shape[0]

    @property
    def d(self) -> int:
        return self.ys.shape[1]

    def rhs(self) -> np.ndarray:
        """Stacked Q^T x~ in the column-major block convention."""
        return stack_mats(self.cs)


def gram_blocks(bundle: TrajectoryBundle) -> GramBlocks:
    m, d = bundle.m, bundle.d
    ys = np.empty((m, d, d))
    cs = np.empty((m, d, d))
    for l in range(m):
        x = bundle.inputs(l)
        ys[l] = x @ x.T
        cs[l] = bundle.targets(l) @ x.T
    return GramBlocks(ys=ys, cs=cs, horizon=bundle.horizon)


@dataclass
class PenalizedOperator:
    """Matrix-free action of blkdiag(Y_l (x) I_d) + lambda (L (x) I_{d^2})."""

    blocks: GramBlocks
    laplacian: np.ndarray
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.laplacian.shape != (self.blocks.m, self.blocks.m):
            raise ValueError("Laplacian size does not match the number of nodes")
        self._lap = scipy.sparse.csr_array(self.laplacian)

    @property
    def size(self) -> int:
        return self.blocks.m * self.blocks.d ** 2

    def dense(self) -> np.ndarray:
        """Materialize the operator; intended for small systems and tests."""
        m, d = self.blocks.m, self.blocks.d
        out = np.zeros((self.size, self.size))
        eye = np.eye(d)
        for l in range(m):
            s = l * d * d
            out[s:s + d * d, s:s + d * d] = np.kron(self.blocks.ys[l], eye)
        out += self.lam * np.kron(self.laplacian, np.eye(d * d))
        return out

    def apply(self, a: np.ndarray) -> np.ndarray:
        m, d = self.blocks.m, self.blocks.d
        blocks = a.reshape(m, d, d)  # C-order views; see module docstring
        out = np.einsum("lij,ljk->lik", self.blocks.ys, blocks)
        if self.lam != 0.0:
            flat = a.reshape(m, d * d)
            out += self.lam * (self._lap @ flat).reshape(m, d, d)
        return out.reshape(m * d * d)

    def norm_upper_bound(self) -> float:
        """Cheap upper bound on the operator 2-norm, for breakdown tests."""
        y_bound = float(max(np.trace(y) for y in self.blocks.ys))
        deg = float(np.max(np.diag(self.laplacian))) if self.lam else 0.0
        return y_bound + self.lam * 2.0 * deg


def apply_penalized(op: PenalizedOperator, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (op.size,):
        raise ValueError(f"expected vector of length {op.size}, got shape {a.shape}")
    return op.apply(a)


def _solve_dense(op: PenalizedOperator, rhs: np.ndarray):
    mat = op.dense()
    anorm = np.linalg.norm(mat, 1)
    try:
        cho = scipy.linalg.cho_factor(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "penalized operator is not positive definite; use lambda > 0 on a "
            "connected graph or a longer horizon T"
        ) from exc
    rcond, _ = scipy.linalg.lapack.dpocon(cho[0], anorm, uplo=b"L")
    if rcond < RCOND_SINGULAR:
        raise SingularSystemError(
            f"penalized operator is numerically singular (rcond={rcond:.2e}); "
            "use lambda > 0 or a longer horizon T"
        )
    x = scipy.linalg.cho_solve(cho, rhs, check_finite=False)
    # iterative refinement keeps ill-conditioned (huge-lambda) solves
    # accurate well past the bare factorization error
    for _ in range(2):
        r = rhs - mat @ x
        x = x + scipy.linalg.cho_solve(cho, r, check_finite=False)
    residual = np.linalg.norm(rhs - op.apply(x)) / max(np.linalg.norm(rhs), 1e-300)
    return x, {"solver": "dense_cholesky", "iterations": 0, "residual": float(residual)}


def _block_jacobi(op: PenalizedOperator):
    deg = np.diag(op.laplacian)
    inv = np.empty_like(op.blocks.ys)
    d = op.blocks.d
    for l in range(op.blocks.m):
        inv[l] = np.linalg.pinv(op.blocks.ys[l] + op.lam * deg[l] * np.eye(d))

    def precondition(r: np.ndarray) -> np.ndarray:
        blocks = r.reshape(op.blocks.m, d, d)
        return np.einsum("lij,ljk->lik", inv, blocks).reshape(r.shape)

    return precondition


def _check_structural_rank(op: PenalizedOperator) -> None:
    """Numerical singularity test that does not rely on CG breakdown.

    With lam = 0 the operator is singular iff some Y_l is rank
    deficient. With lam > 0 on a connected graph the kernel of the
    Laplacian term is the constant-across-nodes blocks, so singularity
    is exactly rank deficiency of sum_l Y_l.
    """
    d = op.blocks.d
    if op.lam == 0.0:
        candidates = op.blocks.ys
        hint = "per-node Gram matrix Y_l is rank deficient (T < d?)"
    else:
        candidates = op.blocks.ys.sum(axis=0)[None]
        hint = "aggregated Gram matrix sum_l Y_l is rank deficient"
    for y in candidates:
        vals = np.linalg.eigvalsh(y)
        if vals[-1] <= 0 or vals[0] <= d * np.finfo(float).eps * vals[-1]:
            raise SingularSystemError(
                f"penalized operator is singular: {hint}; use lambda > 0 "
                "or a longer horizon T"
            )


def _solve_cg(op: PenalizedOperator, rhs: np.ndarray, tol: float,
              max_iter: int, preconditioner=None):
    _check_structural_rank(op)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return np.zeros_like(rhs), {"solver": "cg", "iterations": 0, "residual": 0.0}
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = preconditioner(r) if preconditioner else r
    p = z.copy()
    rz = float(r @ z)
    breakdown_scale = 1e-14 * max(op.norm_upper_bound(), np.finfo(float).tiny)
    for it in range(1, max_iter + 1):
        ap = op.apply(p)
        pap = float(p @ ap)
        if pap <= breakdown_scale * float(p @ p):
            raise SingularSystemError(
                "conjugate-gradient breakdown: operator is singular or indefinite; "
                "use lambda > 0 or a longer horizon T"
            )
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = np.linalg.norm(r) / rhs_norm
        if res <= tol:
            return x, {"solver": "cg", "iterations": it, "residual": float(res)}
        z = preconditioner(r) if preconditioner else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    final = float(np.linalg.norm(rhs - op.apply(x)) / rhs_norm)
    raise ConvergenceError(
        f"conjugate gradient did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {final:.3e})",
        residual=final,
        iterations=max_iter,
    )


def solve_spd(op: PenalizedOperator, rhs: np.ndarray,
              tol: float = DEFAULT_SOLVE_TOL, max_iter: int | None = None,
              dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
              use_preconditioner: bool = False):
    """Solve op(a) = rhs for a symmetric positive definite operator.

    Small systems (size <= dense_threshold) go through a dense Cholesky
    factorization with iterative refinement; larger ones use conjugate
    gradients on the matrix-free operator, declared converged when the
    relative residual drops below tol. Returns (a, info dict).
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.size,):
        raise ValueError(f"rhs must have length {op.size}, got shape {rhs.shape}")
    if op.size <= dense_threshold:
        return _solve_dense(op, rhs)
    if max_iter is None:
        max_iter = max(10 * op.size, 1000)
    pre = _block_jacobi(op) if use_preconditioner else None
    return _solve_cg(op, rhs, tol, max_iter, pre)


def pinv_solve(mat: np.ndarray, rhs: np.ndarray, rank_tol: float | None = None):
    """Minimum-norm least-squares solution of a symmetric PSD system via
    eigendecomposition; eigenvalues <= rank_tol * max(eig) are treated as
    zero (default rank_tol: k * machine epsilon for a k x k matrix).

    rhs may be a vector or a matrix of stacked right-hand-side columns.
    Returns (solution, effective_rank).
    """
    mat = np.asarray(mat, dtype=float)
    k = mat.shape[0]
    if mat.shape != (k, k):
        raise ValueError(f"matrix must be square, got {mat.shape}")
    if not np.allclose(mat, mat.T, atol=1e-8 * max(1.0, float(np.abs(mat).max()))):
        raise ValueError("matrix must be symmetric")
    if rank_tol is None:
        rank_tol = k * np.finfo(float).eps
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    cutoff = rank_tol * max(float(vals[-1]), 0.0)
    keep = vals > cutoff
    rank = int(np.count_nonzero(keep))
    if rank == 0:
        return np.zeros_like(np.asarray(rhs, dtype=float)), 0
    vk = vecs[:, keep]
    proj = vk.T @ rhs
    sol = vk @ (proj / vals[keep].reshape(-1, *([1] * (proj.ndim - 1))))
    return sol, rank

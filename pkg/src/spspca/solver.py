"""SPPCSO solver: ridge-plus-lasso regression with a structured ridge term.

    minimise  ||y - X b||^2 + ||Z b||^2 + lam * ||b||_1

The quadratic terms are folded into one least-squares block by stacking
``Z`` under ``X`` and zeros under ``y``; the resulting plain lasso is solved
by cyclic coordinate descent with soft thresholding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DimensionMismatch, NegativeLambda, SingularSystem
from .linalg import SpectralModel

DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 10_000
REFRESH_EVERY = 50
BISECTION_RTOL = 1e-3


@dataclass
class SppcsoProblem:
    design: np.ndarray
    response: np.ndarray
    Z: np.ndarray
    lam: float = 0.0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        self.design = np.asarray(self.design, dtype=float)
        self.response = np.asarray(self.response, dtype=float).ravel()
        self.Z = np.asarray(self.Z, dtype=float)
        if self.design.ndim != 2 or self.Z.ndim != 2:
            raise DimensionMismatch("design and Z must be 2-d")
        n, p = self.design.shape
        if self.response.shape[0] != n:
            raise DimensionMismatch(f"response length {self.response.shape[0]} != {n} design rows")
        if self.Z.shape[1] != p:
            raise DimensionMismatch(f"Z has {self.Z.shape[1]} columns, design has {p}")
        if self.lam < 0:
            raise NegativeLambda(f"lambda must be >= 0, got {self.lam}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    @property
    def p(self) -> int:
        return self.design.shape[1]


@dataclass
class SolverReport:
    beta: np.ndarray
    iterations: int
    converged: bool
    final_delta: float
    lam: float = 0.0
    objective_trace: list = field(default_factory=list, repr=False)

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.beta))


def soft_threshold(r, lam):
    return np.sign(r) * np.maximum(np.abs(r) - lam, 0.0)


def augment(problem: SppcsoProblem):
    Xt = np.vstack([problem.design, problem.Z])
    yt = np.concatenate([problem.response, np.zeros(problem.Z.shape[0])])
    return Xt, yt


def objective(problem: SppcsoProblem, beta) -> float:
    beta = np.asarray(beta, dtype=float)
    r = problem.response - problem.design @ beta
    z = problem.Z @ beta
    return float(r @ r + z @ z + problem.lam * np.abs(beta).sum())


def lambda_max(problem: SppcsoProblem) -> float:
    """Smallest lambda whose solution is identically zero."""
    return _lambda_max(_operands(problem))


@numba.njit(cache=True, nogil=True)
def _sweep(X, Z, zdiag, r1, r2, beta, col_sq, half_lam, idx):
    # residual of the stacked problem is (r1; r2) = (y - X b; -Z b)
    delta = 0.0
    n = X.shape[0]
    q = Z.shape[0]
    diag = zdiag.shape[0] > 0
    for j in idx:
        cj = col_sq[j]
        if cj == 0.0:
            continue
        bj = beta[j]
        rho = 0.0
        for i in range(n):
            rho += X[i, j] * r1[i]
        if diag:
            rho += zdiag[j] * r2[j]
        else:
            for i in range(q):
                rho += Z[i, j] * r2[i]
        rho += cj * bj
        if rho > half_lam:
            new = (rho - half_lam) / cj
        elif rho < -half_lam:
            new = (rho + half_lam) / cj
        else:
            new = 0.0
        diff = new - bj
        if diff != 0.0:
            for i in range(n):
                r1[i] -= X[i, j] * diff
            if diag:
                r2[j] -= zdiag[j] * diff
            else:
                for i in range(q):
                    r2[i] -= Z[i, j] * diff
            beta[j] = new
            if abs(diff) > delta:
                delta = abs(diff)
    return delta


@numba.njit(cache=True, nogil=True)
def _objective(r1, r2, beta, lam):
    s = 0.0
    for i in range(r1.shape[0]):
        s += r1[i] * r1[i]
    for i in range(r2.shape[0]):
        s += r2[i] * r2[i]
    a = 0.0
    for j in range(beta.shape[0]):
        a += abs(beta[j])
    return s + lam * a


@numba.njit(cache=True, nogil=True)
def _residuals(X, y, Z, zdiag, beta):
    r1 = y - X @ beta
    if zdiag.shape[0] > 0:
        r2 = -zdiag * beta
    else:
        r2 = -(Z @ beta)
    return r1, r2


@numba.njit(cache=True, nogil=True)
def _coordinate_descent(X, y, Z, zdiag, beta, lam, tol, max_iter, trace):
    """Cyclic CD on the stacked design (X; Z) with active-set cycling.

    A full sweep over all coordinates alternates with sweeps restricted to the
    current nonzeros; convergence is declared only after a full sweep whose
    max-abs coefficient change is below ``tol``.  A diagonal Z is passed as
    ``zdiag`` (with Z empty) and costs O(1) per coordinate.
    """
    p = X.shape[1]
    col_sq = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(X.shape[0]):
            s += X[i, j] * X[i, j]
        if zdiag.shape[0] > 0:
            s += zdiag[j] * zdiag[j]
        else:
            for i in range(Z.shape[0]):
                s += Z[i, j] * Z[i, j]
        col_sq[j] = s
    r1, r2 = _residuals(X, y, Z, zdiag, beta)
    half = lam / 2.0
    everything = np.arange(p)
    sweeps = 0
    delta = np.inf
    n_trace = 0
    full = True
    while sweeps < max_iter:
        if full:
            idx = everything
        else:
            idx = np.flatnonzero(beta)
        delta = _sweep(X, Z, zdiag, r1, r2, beta, col_sq, half, idx)
        sweeps += 1
        if sweeps % REFRESH_EVERY == 0:
            r1, r2 = _residuals(X, y, Z, zdiag, beta)
        if n_trace < trace.shape[0]:
            trace[n_trace] = _objective(r1, r2, beta, lam)
            n_trace += 1
        if delta < tol:
            if full:
                return beta, sweeps, True, delta, n_trace
            full = True
        else:
            full = False
    return beta, sweeps, False, delta, n_trace


def _run(op, lam, tol, max_iter, warm_start, record_objective=False) -> SolverReport:
    X, y, Z, zdiag = op
    p = X.shape[1]
    if warm_start is None:
        beta = np.zeros(p)
    else:
        beta = np.array(warm_start, dtype=float).ravel()
        if beta.shape[0] != p:
            raise DimensionMismatch(f"warm start has length {beta.shape[0]}, expected {p}")
    if lam > 0 and lam >= _lambda_max(op):
        # zero is optimal; skip the sweeps so rounding cannot leave tiny entries
        return SolverReport(beta=np.zeros(p), iterations=0, converged=True, final_delta=0.0, lam=float(lam))
    trace = np.zeros(max_iter if record_objective else 0)
    beta, sweeps, converged, delta, n_trace = _coordinate_descent(
        X, y, Z, zdiag, beta, float(lam), float(tol), int(max_iter), trace
    )
    return SolverReport(
        beta=beta,
        iterations=int(sweeps),
        converged=bool(converged),
        final_delta=float(delta),
        lam=float(lam),
        objective_trace=list(trace[:n_trace]),
    )


def _operands(problem):
    X = np.asfortranarray(problem.design)
    Z = problem.Z
    p = problem.p
    if Z.shape[0] == p and np.count_nonzero(Z - np.diag(np.diagonal(Z))) == 0:
        return X, problem.response, np.zeros((0, p)), np.ascontiguousarray(np.diagonal(Z))
    return X, problem.response, np.asfortranarray(Z), np.zeros(0)


def _lambda_max(op) -> float:
    X, y, _, _ = op
    # the zero block of the stacked response contributes nothing
    return float(2 * np.abs(X.T @ y).max(initial=0.0))


def solve_sppcso(problem: SppcsoProblem, warm_start=None, record_objective=False) -> SolverReport:
    """Cyclic coordinate descent on the augmented lasso.

    Not reaching ``tol`` within ``max_iter`` sweeps is reported through
    ``converged=False`` with the last iterate, not raised.
    """
    return _run(_operands(problem), problem.lam, problem.tol, problem.max_iter, warm_start, record_objective)


def closed_form_ridge(model: SpectralModel, k_diag, gram_matrix, alpha) -> np.ndarray:
    """lambda = 0 solution ``(G + V K V^T)^{-1} G alpha`` evaluated in the eigenbasis.

    ``gram_matrix`` must be the matrix ``model`` was decomposed from; it is
    only used to check shapes.
    """
    k_diag = np.asarray(k_diag, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.shape(gram_matrix) != (model.p, model.p):
        raise DimensionMismatch("gram shape does not match the model")
    denom = model.d2 + k_diag
    if np.any(denom <= 0):
        raise SingularSystem("G + V K V^T is singular")
    shrink = model.d2 / denom
    if alpha.ndim == 2:
        shrink = shrink[:, None]
    return model.V @ (shrink * (model.V.T @ alpha))


def _bracket(probe, hint, target, lmax, warm_start, zero):
    """Expand geometrically from ``hint`` until the cardinality boundary is bracketed.

    Returns ``(lo, lo_rep, hi, hi_rep)`` with nnz(lo) > target >= nnz(hi);
    ``lo_rep`` is None when the lower end is lambda = 0 and was not probed.
    If the hint itself has the target cardinality, lo == hi == hint.
    """
    rep = probe(hint, warm_start)
    if rep.nnz == target:
        return hint, rep, hint, rep
    step = BISECTION_RTOL
    if rep.nnz < target:
        hi, hi_rep = hint, rep
        while True:
            cand = hi / (1 + step)
            if cand <= 1e-12 * lmax:
                return 0.0, None, hi, hi_rep
            rep = probe(cand, hi_rep.beta)
            if rep.nnz > target:
                return cand, rep, hi, hi_rep
            hi, hi_rep = cand, rep
            step *= 4
    lo, lo_rep = hint, rep
    while True:
        cand = lo * (1 + step)
        if cand >= lmax:
            return lo, lo_rep, lmax, zero
        rep = probe(cand, lo_rep.beta)
        if rep.nnz <= target:
            return lo, lo_rep, cand, rep
        lo, lo_rep = cand, rep
        step *= 4


def lambda_for_cardinality(problem: SppcsoProblem, target_nnz: int, lambda_hi=None, warm_start=None, hint=None):
    """Pick lambda so the solution has ``target_nnz`` nonzeros.

    Bisection on ``[0, lambda_max]`` locates the boundary between solutions
    denser than the target and solutions with at most ``target_nnz``
    nonzeros, to relative width ``BISECTION_RTOL``.  The smallest probed
    lambda with ``nnz <= target_nnz`` is returned, so the least-shrunk
    solution of the requested cardinality; it has exactly ``target_nnz``
    nonzeros unless the path jumps over that count.

    ``hint`` is a previous answer.  It is kept whenever it still yields exactly
    ``target_nnz`` nonzeros (re-bisecting on every call makes alternating
    fits cycle between neighbouring lambdas); otherwise it is used to bracket
    the boundary cheaply.
    Returns ``(lam, report)``.
    """
    p = problem.p
    if not 0 <= target_nnz <= p:
        raise ValueError(f"target_nnz must be in [0, {p}]")
    op = _operands(problem)
    lmax = _lambda_max(op) if lambda_hi is None else float(lambda_hi)
    zero = SolverReport(beta=np.zeros(p), iterations=0, converged=True, final_delta=0.0, lam=lmax)
    if target_nnz == 0 or lmax == 0.0:
        return lmax, zero

    def probe(lam, start):
        return _run(op, lam, problem.tol, problem.max_iter, start)

    if target_nnz >= p:
        return 0.0, probe(0.0, warm_start)

    # invariant: nnz(lo) > target >= nnz(hi); lambda = 0 is taken as dense until probed
    lo, hi = 0.0, lmax
    lo_rep, hi_rep = None, zero
    if hint is not None and 0 < hint < lmax:
        lo, lo_rep, hi, hi_rep = _bracket(probe, float(hint), target_nnz, lmax, warm_start, zero)
        if lo == hi:
            return hi, hi_rep
    for _ in range(200):
        if lo > 0 and hi - lo <= BISECTION_RTOL * hi:
            break
        if lo == 0 and hi <= 1e-12 * lmax:
            rep = probe(0.0, hi_rep.beta)
            if rep.nnz <= target_nnz:
                return 0.0, rep
            break
        mid = 0.5 * (lo + hi)
        if hi_rep.nnz:
            start = hi_rep.beta
        elif lo_rep is not None:
            start = lo_rep.beta
        else:
            start = warm_start
        rep = probe(mid, start)
        if rep.nnz > target_nnz:
            lo, lo_rep = mid, rep
        else:
            hi, hi_rep = mid, rep
    return hi, hi_rep

"""Alternating SP-SPCA fit and the uniform-ridge baseline.

Given orthonormal ``A`` the loadings ``B`` are found column by column as
SPPCSO problems in Gram form,

    min_b (a_j - b)^T G (a_j - b) + ||Z b||^2 + lam_j ||b||_1,

which is a regression with design ``R`` and response ``R a_j`` for any
factor ``R^T R = G`` (the centered data, or ``sigma^{1/2}``).
Given ``B`` the best orthonormal ``A`` is ``U V^T`` from the thin SVD of
``G B``.  Both data matrices and known covariances go through this path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import penalty as pen
from .errors import InvalidConfig, KTooLarge
from .linalg import (
    CovarianceInput,
    DataMatrix,
    SpectralModel,
    fix_signs,
    gram,
    spectral_decompose,
    thin_svd,
)
from .solver import DEFAULT_TOL, SppcsoProblem, lambda_for_cardinality, solve_sppcso
from .variance import VarianceReport, adjusted_variance, covariance_adjusted_variance

log = logging.getLogger(__name__)

DEGENERATE_RTOL = 1e-12


@dataclass
class SpcaConfig:
    k: int
    theta: float | str | None = None
    lambdas: list | None = None
    cardinality: list | None = None
    outer_tol: float = 1e-6
    outer_max_iter: int = 200
    baseline_lambda2: float | None = None
    baseline: bool = False
    tail_convention: str = "squared"
    inner_tol: float = DEFAULT_TOL
    inner_max_iter: int = 10_000
    rescale: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise InvalidConfig("k must be >= 1")
        if (self.lambdas is None) == (self.cardinality is None):
            raise InvalidConfig("give exactly one of lambdas / cardinality")
        vals = self.lambdas if self.lambdas is not None else self.cardinality
        if np.isscalar(vals):
            vals = [vals] * self.k
        vals = list(vals)
        if len(vals) == 1 and self.k > 1:
            vals = vals * self.k
        if len(vals) != self.k:
            raise InvalidConfig(f"sparsity list has length {len(vals)}, expected k={self.k}")
        if self.lambdas is not None:
            self.lambdas = [float(v) for v in vals]
            if min(self.lambdas) < 0:
                raise InvalidConfig("lambdas must be >= 0")
        else:
            self.cardinality = [int(v) for v in vals]
            if min(self.cardinality) < 0:
                raise InvalidConfig("cardinalities must be >= 0")
        if self.baseline_lambda2 is not None:
            self.baseline = True
        if isinstance(self.theta, str) and self.theta != "auto":
            raise InvalidConfig(f"theta must be a number, None or 'auto', got {self.theta!r}")

    @property
    def mode(self) -> str:
        return "lambda" if self.lambdas is not None else "cardinality"


@dataclass
class SpcaFit:
    A: np.ndarray
    B: np.ndarray
    V_tilde: np.ndarray
    lambdas: np.ndarray
    variance: VarianceReport
    outer_iterations: int
    converged: bool
    theta: float | None = None
    k_diag: np.ndarray | None = None
    scale: float = 1.0
    method: str = "sp-spca"
    history: list = field(default_factory=list, repr=False)

    @property
    def adjusted_variance(self) -> np.ndarray:
        return self.variance.per_component_pct

    @property
    def cumulative_variance_pct(self) -> np.ndarray:
        return self.variance.cumulative_pct

    @property
    def nnz_per_component(self) -> np.ndarray:
        return np.count_nonzero(self.B, axis=0)


def init_A(model: SpectralModel, k: int) -> np.ndarray:
    if k > model.p:
        raise KTooLarge(f"k={k} exceeds p={model.p}")
    return model.V[:, :k].copy()


def _ridge_solve(design, response, Z):
    Xt = np.vstack([design, Z])
    yt = np.concatenate([response, np.zeros(Z.shape[0])])
    beta, *_ = np.linalg.lstsq(Xt, yt, rcond=None)
    return beta


def b_step(gram_root, Z, A, lambdas=None, cardinality=None, warm=None, hints=None,
           tol=DEFAULT_TOL, max_iter=10_000):
    """Solve the k SPPCSO problems for fixed A.

    Exactly one of ``lambdas`` / ``cardinality`` is given.  ``warm`` (p x k)
    and ``hints`` (k lambdas) come from the previous outer iteration.
    Returns ``(B, lambdas, reports)``.
    """
    p, k = A.shape
    B = np.zeros((p, k))
    lams = np.zeros(k)
    reports = []
    responses = gram_root @ A
    for j in range(k):
        start = None if warm is None else warm[:, j]
        if lambdas is not None:
            lam = float(lambdas[j])
            if lam == 0.0:
                beta = _ridge_solve(gram_root, responses[:, j], Z)
                rep = None
            else:
                prob = SppcsoProblem(gram_root, responses[:, j], Z, lam, tol, max_iter)
                rep = solve_sppcso(prob, warm_start=start)
                beta = rep.beta
        elif cardinality[j] >= p:
            lam, rep = 0.0, None
            beta = _ridge_solve(gram_root, responses[:, j], Z)
        else:
            prob = SppcsoProblem(gram_root, responses[:, j], Z, 0.0, tol, max_iter)
            hint = None if hints is None else hints[j]
            lam, rep = lambda_for_cardinality(prob, cardinality[j], warm_start=start, hint=hint)
            beta = rep.beta
        B[:, j] = beta
        lams[j] = lam
        reports.append(rep)
    return B, lams, reports


def _orthonormal_completion(U_good, count):
    p, g = U_good.shape
    Q, _ = np.linalg.qr(np.hstack([U_good, np.eye(p)]))
    return Q[:, g : g + count]


def a_step(gram_matrix, B) -> np.ndarray:
    """Procrustes update: the orthonormal A maximising trace(A^T G B)."""
    M = np.asarray(gram_matrix) @ np.asarray(B)
    U, s, Vt = thin_svd(M)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("a_step needs a nonzero G B")
    bad = s < DEGENERATE_RTOL * s[0]
    if np.any(bad):
        good = ~bad
        U = U.copy()
        U[:, bad] = _orthonormal_completion(U[:, good], int(bad.sum()))
    return U @ Vt


def normalize_loadings(B) -> np.ndarray:
    B = np.array(B, dtype=float, copy=True)
    norms = np.linalg.norm(B, axis=0)
    nz = norms > 0
    B[:, nz] /= norms[nz]
    return fix_signs(B)


def sp_spca_objective(gram_matrix, Z, A, B, lambdas) -> float:
    """Reconstruction error plus ridge and lasso terms, for orthonormal A."""
    G = np.asarray(gram_matrix)
    fit = np.trace(G) - 2 * np.trace(A.T @ G @ B) + np.trace(B.T @ G @ B)
    ridge = float(np.sum((Z @ B) ** 2))
    l1 = float(np.sum(np.asarray(lambdas) * np.abs(B).sum(axis=0)))
    return float(fit + ridge + l1)


def _prepare(data):
    """Return (G, model, source) from data or a covariance."""
    if isinstance(data, CovarianceInput):
        return data.sigma, spectral_decompose(data.sigma, source="from-covariance"), data
    if isinstance(data, DataMatrix):
        G = gram(data)
        return G, spectral_decompose(G), data
    raise TypeError("data must be a DataMatrix or CovarianceInput")


def _factor(source, model: SpectralModel) -> np.ndarray:
    """A matrix R with R^T R = G: the centered data itself, or sigma^{1/2}."""
    if isinstance(source, DataMatrix):
        return source.values
    R = (model.V * np.sqrt(model.d2)) @ model.V.T
    return (R + R.T) / 2


def _scaled(model: SpectralModel, c: float) -> SpectralModel:
    d2 = model.d2 / c
    return SpectralModel(V=model.V, d2=d2, r=int(np.count_nonzero(d2 >= 1.0)), source=model.source)


def _variance(source, V_tilde) -> VarianceReport:
    if isinstance(source, CovarianceInput):
        return covariance_adjusted_variance(source, V_tilde)
    return adjusted_variance(source, V_tilde)


def _alternate(G, model, root, Z, config: SpcaConfig, source, method, theta=None, k_diag=None, scale=1.0):
    A = init_A(model, config.k)
    B_prev = None
    hints = None
    history = []
    converged = False
    lams = np.zeros(config.k)
    B = np.zeros((model.p, config.k))
    it = 0
    for it in range(1, config.outer_max_iter + 1):
        B, lams, _ = b_step(
            root, Z, A,
            lambdas=config.lambdas, cardinality=config.cardinality,
            warm=B_prev, hints=hints,
            tol=config.inner_tol, max_iter=config.inner_max_iter,
        )
        if not np.any(B):
            log.info("all components collapsed at outer iteration %d", it)
            converged = True
            break
        A = a_step(G, B)
        history.append(sp_spca_objective(G, Z, A, B, lams))
        if B_prev is not None:
            denom = max(np.linalg.norm(B_prev), np.finfo(float).tiny)
            if np.linalg.norm(B - B_prev) / denom < config.outer_tol:
                converged = True
                break
        B_prev = B
        hints = lams if config.mode == "cardinality" else None
    V_tilde = normalize_loadings(B)
    return SpcaFit(
        A=A, B=B, V_tilde=V_tilde, lambdas=lams,
        variance=_variance(source, V_tilde),
        outer_iterations=it, converged=converged,
        theta=theta, k_diag=k_diag, scale=scale, method=method, history=history,
    )


def _fit_sp_spca_at(G, model, source, config, theta):
    # penalty is built on the (optionally rescaled) spectrum; the fit itself
    # runs on the same scale so K is comparable with the eigenvalues
    root = _factor(source, model)
    scale = 1.0
    if config.rescale:
        scale = float(np.mean(model.d2))
        G = G / scale
        root = root / np.sqrt(scale)
        model = _scaled(model, scale)
    op = pen.make_penalty(model, theta, config.tail_convention)
    return _alternate(G, model, root, op.Z, config, source, "sp-spca", op.theta, op.k_diag, scale)


def fit_sp_spca(data, config: SpcaConfig) -> SpcaFit:
    G, model, source = _prepare(data)
    if config.k > model.p:
        raise KTooLarge(f"k={config.k} exceeds p={model.p}")
    if config.theta == "auto":
        return select_theta(data, config)[0]
    return _fit_sp_spca_at(G, model, source, config, config.theta)


def select_theta(data, config: SpcaConfig, points: int = 9):
    """Grid search over interior thetas; keeps the fit with the largest cumulative variance.

    Returns ``(best_fit, [(theta, cumulative_pct), ...])``.
    """
    G, model, source = _prepare(data)
    scaled = _scaled(model, float(np.mean(model.d2))) if config.rescale else model
    grid = pen.theta_grid(scaled, points)
    best, scores = None, []
    for theta in grid:
        fit = _fit_sp_spca_at(G, model, source, config, float(theta))
        scores.append((float(theta), fit.variance.cumulative))
        if best is None or fit.variance.cumulative > best.variance.cumulative:
            best = fit
    return best, scores


def default_baseline_lambda2(G) -> float:
    G = np.asarray(G)
    return 1e-6 * float(np.trace(G)) / G.shape[0]


def fit_spca_baseline(data, config: SpcaConfig) -> SpcaFit:
    G, model, source = _prepare(data)
    if config.k > model.p:
        raise KTooLarge(f"k={config.k} exceeds p={model.p}")
    lambda2 = config.baseline_lambda2
    if lambda2 is None:
        lambda2 = default_baseline_lambda2(G)
    op = pen.make_baseline_penalty(model, lambda2)
    return _alternate(G, model, _factor(source, model), op.Z, config, source, "spca", None, op.k_diag)


def fit(data, config: SpcaConfig) -> SpcaFit:
    if config.baseline:
        return fit_spca_baseline(data, config)
    return fit_sp_spca(data, config)


def with_sparsity(config: SpcaConfig, **changes) -> SpcaConfig:
    base = {"lambdas": None, "cardinality": None}
    base.update(changes)
    return replace(config, **base)

"""Variance accounting for sparse, possibly correlated components.

Scores of sparse loadings are generally correlated, so summing their
variances double-counts.  Each component is credited only with the variance
it adds beyond the components before it: the score matrix is orthogonalised
in column order (thin QR) and the squared diagonal of ``R`` is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotCentered
from .linalg import CovarianceInput, DataMatrix, SpectralModel, sym_sqrt


@dataclass(frozen=True)
class VarianceReport:
    per_component_pct: np.ndarray
    cumulative_pct: np.ndarray
    total_variance: float
    nnz_per_component: np.ndarray

    @property
    def total_nnz(self) -> int:
        return int(self.nnz_per_component.sum())

    @property
    def cumulative(self) -> float:
        return float(self.cumulative_pct[-1]) if self.cumulative_pct.size else 0.0


def _column_ordered_variance(T: np.ndarray) -> np.ndarray:
    if T.shape[1] == 0:
        return np.zeros(0)
    R = np.linalg.qr(T, mode="r")
    k = T.shape[1]
    diag = np.zeros(k)
    m = min(R.shape)
    diag[:m] = np.abs(np.diag(R)[:m])
    return diag**2


def _report(explained, total, loadings) -> VarianceReport:
    pct = 100.0 * explained / total if total > 0 else np.zeros_like(explained)
    return VarianceReport(
        per_component_pct=pct,
        cumulative_pct=np.cumsum(pct),
        total_variance=float(total),
        nnz_per_component=np.count_nonzero(loadings, axis=0),
    )


def adjusted_variance(X: DataMatrix, V_tilde) -> VarianceReport:
    if not X.centered:
        raise NotCentered("adjusted_variance() requires centered data")
    V_tilde = np.asarray(V_tilde, dtype=float)
    dof = X.n - 1
    explained = _column_ordered_variance(X.values @ V_tilde) / dof
    total = float(np.sum(X.values**2)) / dof
    return _report(explained, total, V_tilde)


def covariance_adjusted_variance(sigma, V_tilde) -> VarianceReport:
    """Same accounting on the population scale: scores are ``sigma^{1/2} V_tilde``."""
    if not isinstance(sigma, CovarianceInput):
        sigma = CovarianceInput(sigma)
    V_tilde = np.asarray(V_tilde, dtype=float)
    root = sym_sqrt(sigma.sigma)
    explained = _column_ordered_variance(root @ V_tilde)
    return _report(explained, float(np.trace(sigma.sigma)), V_tilde)


def naive_variance(sigma, V_tilde) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    V_tilde = np.asarray(V_tilde, dtype=float)
    return np.einsum("ij,ik,kj->j", V_tilde, sigma, V_tilde)


def scree_data(model: SpectralModel):
    eig = np.asarray(model.d2, dtype=float)
    total = eig.sum()
    cum = 100.0 * np.cumsum(eig) / total if total > 0 else np.zeros_like(eig)
    return eig.copy(), cum


@dataclass(frozen=True)
class SweepRow:
    target_pct: float
    total_nnz: int
    achieved_pct: float
    level: int
    reached: bool


REACH_SLACK = 1e-9


def sparsity_sweep(data, config, variance_targets, fitter=None):
    """Smallest uniform per-component cardinality reaching each variance target.

    ``config`` is a template whose sparsity is replaced by a uniform
    cardinality level.  Levels are binary-searched in ``[previous level, p]``
    so the reported nnz never decreases with the target.  A target not met
    even with dense loadings is reported with ``reached=False`` and the
    variance actually achieved.
    """
    from .spca import fit as default_fit, with_sparsity

    fitter = fitter or default_fit
    targets = [float(t) for t in variance_targets]
    if any(not 0 < t <= 100 for t in targets):
        raise ValueError("variance targets must lie in (0, 100]")
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise ValueError("variance targets must be increasing")
    p = data.p
    cache = {}

    def run(level):
        if level not in cache:
            cfg = with_sparsity(config, cardinality=[level] * config.k)
            cache[level] = fitter(data, cfg)
        return cache[level]

    def reaches(level, target):
        return run(level).variance.cumulative >= target - REACH_SLACK

    rows = []
    low = 1
    for target in targets:
        if not reaches(p, target):
            f = run(p)
            rows.append(SweepRow(target, f.variance.total_nnz, f.variance.cumulative, p, False))
            low = p
            continue
        lo, hi = low, p
        while lo < hi:
            mid = (lo + hi) // 2
            if reaches(mid, target):
                hi = mid
            else:
                lo = mid + 1
        f = run(lo)
        rows.append(SweepRow(target, f.variance.total_nnz, f.variance.cumulative, lo, True))
        low = lo
    return rows

"""Dense matrix foundations: centering, Gram matrices, eigendecomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DecompositionFailure,
    NonFinite,
    NotCentered,
    NotSymmetric,
    TooFewRows,
    TooIndefinite,
)

SYM_TOL = 1e-10
PSD_CLAMP = 1e-10
INDEFINITE_REL = 1e-6


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray
    centered: bool = False
    names: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SpectralModel:
    """Eigen-structure of a Gram (or covariance) matrix.

    ``V`` holds orthonormal eigenvectors as columns, ``d2`` the matching
    eigenvalues in descending order and ``r`` the number of eigenvalues that
    are at least one.
    """

    V: np.ndarray
    d2: np.ndarray
    r: int
    source: str = "from-data"

    @property
    def p(self) -> int:
        return self.d2.shape[0]


def _as_float_matrix(X) -> np.ndarray:
    X = np.array(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("expected a 2-d array")
    if not np.all(np.isfinite(X)):
        raise NonFinite("matrix contains NaN or Inf entries")
    return X


def center_columns(X, names=None) -> DataMatrix:
    if isinstance(X, DataMatrix):
        names = names or X.names
        X = X.values
    X = _as_float_matrix(X)
    if X.shape[0] < 2:
        raise TooFewRows(f"need at least 2 rows, got {X.shape[0]}")
    Xc = X - X.mean(axis=0)
    return DataMatrix(Xc, centered=True, names=tuple(names) if names else None)


def gram(X: DataMatrix) -> np.ndarray:
    if not X.centered:
        raise NotCentered("gram() requires a centered DataMatrix")
    G = X.values.T @ X.values
    # enforce exact symmetry; the product is symmetric only up to rounding
    return (G + G.T) / 2


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    ``argmax`` returns the first maximiser, which gives the lowest-row
    tie-break.  Zero columns are left alone.
    """
    V = np.array(V, dtype=float, copy=True)
    if V.ndim == 1:
        return fix_signs(V[:, None])[:, 0]
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def check_symmetric(G, tol=SYM_TOL) -> np.ndarray:
    G = _as_float_matrix(G)
    if G.shape[0] != G.shape[1]:
        raise NotSymmetric(f"matrix is not square: {G.shape}")
    scale = max(1.0, float(np.abs(G).max(initial=0.0)))
    if np.abs(G - G.T).max(initial=0.0) > tol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    return (G + G.T) / 2


def _eigh_desc(G):
    try:
        w, V = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure(str(exc)) from exc
    return w[::-1].copy(), V[:, ::-1].copy()


def _clamp(w):
    top = max(float(w[0]) if w.size else 0.0, 0.0)
    if w.size and w[-1] < -max(PSD_CLAMP, INDEFINITE_REL * top):
        raise TooIndefinite(f"min eigenvalue {w[-1]:.3g} vs max {top:.3g}")
    return np.clip(w, 0.0, None)


def spectral_decompose(G, source="from-data") -> SpectralModel:
    G = check_symmetric(G)
    w, V = _eigh_desc(G)
    d2 = _clamp(w)
    V = fix_signs(V)
    r = int(np.count_nonzero(d2 >= 1.0))
    return SpectralModel(V=V, d2=d2, r=r, source=source)


def sym_sqrt(sigma) -> np.ndarray:
    """Symmetric PSD square root with negative eigenvalues clamped to zero."""
    S = check_symmetric(sigma)
    w, V = _eigh_desc(S)
    w = _clamp(w)
    R = (V * np.sqrt(w)) @ V.T
    return (R + R.T) / 2


def check_covariance(sigma) -> np.ndarray:
    S = check_symmetric(sigma)
    w, _ = _eigh_desc(S)
    _clamp(w)
    return S


def thin_svd(M):
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure(str(exc)) from exc
    return U, s, Vt


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians) between the column spans of A and B."""
    Qa, _ = np.linalg.qr(A)
    Qb, _ = np.linalg.qr(B)
    s = np.linalg.svd(Qa.T @ Qb, compute_uv=False)
    s = np.clip(s, -1.0, 1.0)
    # arccos loses precision near 1; use the sine form for small angles
    sin = np.sort(np.linalg.svd(Qb - Qa @ (Qa.T @ Qb), compute_uv=False))[: s.size]
    return np.where(s > 0.5, np.arcsin(np.clip(sin, 0, 1)), np.arccos(s))


@dataclass(frozen=True)
class CovarianceInput:
    """A known covariance matrix, validated symmetric and PSD on construction."""

    sigma: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "sigma", check_covariance(self.sigma))

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

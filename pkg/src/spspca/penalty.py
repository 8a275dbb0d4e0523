"""Single-parameter ridge penalty built from the Gram spectrum.

The diagonal ``K`` shrinks dominant eigen-directions (eigenvalue >= 1) by
``d2 (1 - theta) / (d2 + theta - 1)`` and the remaining directions by
``1/theta - d2`` (or ``1/theta - sqrt(d2)`` under the linear-tail convention).
Every quadratic penalty term is then ``||Z beta||^2`` with ``Z = sqrt(K) V^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDomain, NegativeLambda, NonPositiveEntry, NonPositiveK, ThetaOutOfDomain
from .linalg import SpectralModel

CONVENTIONS = ("squared", "linear")


@dataclass(frozen=True)
class PenaltyOperator:
    k_diag: np.ndarray
    theta: float | None
    Z: np.ndarray
    convention: str = "squared"


def theta_domain(model: SpectralModel) -> tuple[float, float]:
    low = float(model.d2[-1])
    if low >= 1.0:
        raise EmptyDomain(
            f"smallest eigenvalue {low:.4g} >= 1; rescale the data "
            "(see rescale_factor) so the spectrum straddles 1"
        )
    return low, 1.0


def default_theta(model: SpectralModel) -> float:
    low, high = theta_domain(model)
    return (low + high) / 2


def theta_grid(model: SpectralModel, points: int = 9) -> np.ndarray:
    """Evenly spaced interior points of the admissible interval."""
    low, high = theta_domain(model)
    return np.linspace(low, high, points + 2)[1:-1]


def rescale_factor(d2) -> float:
    """Divisor for X (sqrt of the mean eigenvalue) that centres the spectrum on 1."""
    return float(np.sqrt(np.mean(d2)))


def build_K(model: SpectralModel, theta: float, convention: str = "squared") -> np.ndarray:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown tail convention {convention!r}")
    low, high = theta_domain(model)
    theta = float(theta)
    if not low < theta < high:
        raise ThetaOutOfDomain(f"theta={theta} outside ({low:.6g}, {high:.6g})")
    d2 = model.d2
    r = model.r
    head = d2[:r] * (1 - theta) / (d2[:r] + theta - 1)
    tail_d = d2[r:] if convention == "squared" else np.sqrt(d2[r:])
    tail = 1 / theta - tail_d
    K = np.concatenate([head, tail])
    if not np.all(K > 0):
        raise NonPositiveEntry(f"non-positive K entry at theta={theta}")
    return K


def build_Z(model: SpectralModel, k_diag) -> np.ndarray:
    k_diag = np.asarray(k_diag, dtype=float)
    if k_diag.shape != (model.p,):
        raise ValueError("k_diag length does not match the model")
    if not np.all(k_diag > 0):
        raise NonPositiveK("all K entries must be strictly positive")
    return np.sqrt(k_diag)[:, None] * model.V.T


def uniform_ridge_Z(p: int, lambda2: float) -> np.ndarray:
    if lambda2 < 0:
        raise NegativeLambda(f"lambda2 must be >= 0, got {lambda2}")
    return np.sqrt(lambda2) * np.eye(p)


def make_penalty(model: SpectralModel, theta=None, convention="squared") -> PenaltyOperator:
    if theta is None:
        theta = default_theta(model)
    K = build_K(model, theta, convention)
    return PenaltyOperator(k_diag=K, theta=float(theta), Z=build_Z(model, K), convention=convention)


def make_baseline_penalty(model: SpectralModel, lambda2: float) -> PenaltyOperator:
    """Uniform ridge expressed in the same eigenbasis form as ``make_penalty``."""
    Z = uniform_ridge_Z(model.p, lambda2)
    return PenaltyOperator(k_diag=np.full(model.p, float(lambda2)), theta=None, Z=Z, convention="uniform")

"""Finite Galerkin truncation of the diagonal operator A and its Gaussian measure.

The truncation keeps the first ``n`` modes. ``A`` acts as ``diag(alphas)`` in the
coordinate basis and the covariance is ``Q = A^{-1}/2`` with eigenvalues
``lambdas = 1/(2 alphas)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpectralModel:
    """Diagonal model with eigenvalues ``alphas`` of A, sorted nondecreasing."""

    alphas: tuple[float, ...]
    delta: float = field(default=0.0)
    preset: str | None = None

    def __post_init__(self) -> None:
        a = tuple(sorted(float(v) for v in self.alphas))
        if not a:
            raise ValueError("model needs at least one mode")
        if not all(math.isfinite(v) and v > 0 for v in a):
            raise ValueError(f"eigenvalues of A must be positive and finite, got {a}")
        object.__setattr__(self, "alphas", a)
        delta = float(self.delta) if self.delta else a[0]
        if not 0 < delta <= a[0]:
            raise ValueError(f"delta={delta} must lie in (0, min alpha]")
        object.__setattr__(self, "delta", delta)

    @classmethod
    def dirichlet_laplacian(cls, n: int, length: float = 1.0) -> SpectralModel:
        """Minus the Dirichlet Laplacian on (0, length): alpha_k = (k pi / length)^2."""
        if n < 1 or length <= 0:
            raise ValueError("need n >= 1 and length > 0")
        k = np.arange(1, n + 1)
        return cls(tuple((k * np.pi / length) ** 2), preset=f"dirichlet_laplacian(L={length:g})")

    @classmethod
    def constant(cls, n: int, alpha: float = 1.0) -> SpectralModel:
        return cls((float(alpha),) * n)

    @property
    def dim(self) -> int:
        return len(self.alphas)

    @property
    def alpha(self) -> np.ndarray:
        return _frozen(self.alphas)

    @property
    def lambdas(self) -> np.ndarray:
        return _frozen(1.0 / (2.0 * np.asarray(self.alphas)))

    @property
    def sqrt_lambdas(self) -> np.ndarray:
        return _frozen(np.sqrt(self.lambdas))

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log of the Lebesgue density of mu (normalized)."""
        x = np.asarray(x, dtype=float)
        lam = self.lambdas
        quad = np.sum(x * x / lam, axis=-1)
        return -0.5 * quad - 0.5 * np.sum(np.log(2 * np.pi * lam))

    def density(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(x))

    def to_dict(self) -> dict:
        return {"alphas": list(self.alphas), "delta": self.delta, "preset": self.preset}


def _check_dim(model: SpectralModel, v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != model.dim:
        raise ValueError(f"{name} has trailing dimension {v.shape[-1]}, model has {model.dim}")
    return v


def sample_mu(model: SpectralModel, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` i.i.d. draws from mu as an array of shape (count, n)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return rng.standard_normal((count, model.dim)) * model.sqrt_lambdas


def white_noise(model: SpectralModel, z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """W_z(x) = sum_k x_k z_k / sqrt(lambda_k); ``x`` may be batched along axis 0."""
    z = _check_dim(model, z, "z")
    x = _check_dim(model, x, "x")
    return x @ (z / model.sqrt_lambdas)


def ou_coefficients(model: SpectralModel, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode decay factor and transition standard deviation for a step of size h."""
    if h <= 0:
        raise ValueError("step must be positive")
    a = model.alpha
    decay = np.exp(-a * h)
    std = np.sqrt(-np.expm1(-2 * a * h) / (2 * a))
    return decay, std


def ou_step_exact(
    model: SpectralModel,
    x: np.ndarray,
    h: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Exact transition of dX = -AX dt + dW over time ``h``.

    ``noise`` (standard normals, same shape as ``x``) overrides ``rng``; pass zeros to
    suppress the random part.
    """
    x = _check_dim(model, x, "x")
    decay, std = ou_coefficients(model, h)
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise is required")
        noise = rng.standard_normal(x.shape)
    return x * decay + std * noise

"""Bayesian linear regression with treatment-by-biomarker interactions.

y = b0 + b1*I(z=2) + alpha.x + gamma.x*I(z=2) + e, e ~ N(0, s2), with
independent priors coef ~ N(0, scale*I) and 1/s2 ~ Gamma(shape, rate),
sampled by two-block Gibbs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import TrialDataset
from .inference import EffectGrid, LinearEffectSamples


@dataclass(frozen=True)
class LrConfig:
    shape: float = 0.1
    rate: float = 0.1
    scale: float = 20.0
    n_iter: int = 1500
    burn_in: int = 500
    seed: int = 0

    def __post_init__(self):
        if min(self.shape, self.rate, self.scale) <= 0:
            raise ValueError("prior shape, rate and scale must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")


@dataclass(frozen=True)
class LrDraws:
    intercept: np.ndarray  # (B,)
    treatment: np.ndarray  # (B,)
    alpha: np.ndarray  # (B, K)
    gamma: np.ndarray  # (B, K)
    sigma2: np.ndarray  # (B,)

    def __len__(self):
        return self.intercept.shape[0]


def design_matrix(X, z) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    trt = (np.asarray(z) == 2).astype(float)[:, None]
    return np.hstack([np.ones_like(trt), trt, X, trt * X])


def coefficient_conditional(D, y, precision: float, scale: float):
    """Mean of the coefficients given the noise precision, and the Cholesky
    factor of their conditional precision matrix."""
    A = precision * D.T @ D + np.eye(D.shape[1]) / scale
    L = np.linalg.cholesky(A)
    mean = np.linalg.solve(L.T, np.linalg.solve(L, precision * D.T @ y))
    return mean, L


def fit_lr(dataset: TrialDataset, config: LrConfig = LrConfig(), rng=None) -> LrDraws:
    if dataset.outcome != "continuous":
        raise ValueError("the regression baseline handles continuous outcomes only")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    K = len(dataset.panel)
    X = dataset.X.reshape(len(dataset), K)
    D = design_matrix(X, dataset.z)
    y = dataset.y
    n, p = D.shape
    keep = config.n_iter - config.burn_in
    coefs = np.empty((keep, p))
    s2 = np.empty(keep)
    precision = config.shape / config.rate
    for it in range(config.n_iter):
        mean, L = coefficient_conditional(D, y, precision, config.scale)
        beta = mean + np.linalg.solve(L.T, rng.standard_normal(p))
        resid = y - D @ beta
        precision = rng.gamma(config.shape + 0.5 * n, 1.0 / (config.rate + 0.5 * resid @ resid))
        if it >= config.burn_in:
            coefs[it - config.burn_in] = beta
            s2[it - config.burn_in] = 1.0 / precision
    return LrDraws(coefs[:, 0], coefs[:, 1], coefs[:, 2:2 + K], coefs[:, 2 + K:], s2)


def lr_effect_samples(draws: LrDraws, grid: EffectGrid) -> LinearEffectSamples:
    """Arm-2 minus arm-1 predicted mean at each grid point."""
    return LinearEffectSamples(grid, draws.treatment, draws.gamma)

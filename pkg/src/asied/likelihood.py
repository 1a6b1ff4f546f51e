"""Conjugate outcome models on a partition.

Binary outcomes: theta[t, m] ~ Beta(a_t, b_t).  Continuous outcomes:
theta[t, m] | s2 ~ N(theta0, s2 / kappa0) and s2 ~ IG(nu0/2, nu0*sigma0_sq/2),
with one variance shared by every cell.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _kernels as kern
from .domain import TrialDataset
from .partition import PartitionTree


@dataclass(frozen=True)
class ConjugateConfig:
    outcome: str = "continuous"
    a: tuple = (1.0, 1.0)
    b: tuple = (1.0, 1.0)
    theta0: Optional[float] = None  # None: mean of observed y
    kappa0: float = 0.1
    nu0: float = 1.0
    sigma0_sq: Optional[float] = None  # None: variance of observed y

    def __post_init__(self):
        if self.outcome not in ("binary", "continuous"):
            raise ValueError(f"unknown outcome kind {self.outcome!r}")
        vals = list(self.a) + list(self.b) + [self.kappa0, self.nu0]
        if self.sigma0_sq is not None:
            vals.append(self.sigma0_sq)
        if any(not (v > 0) for v in vals):
            raise ValueError("prior hyperparameters must be positive")

    @property
    def ss0(self) -> float:
        return self.nu0 * self.sigma0_sq

    def resolved(self, y) -> "ConjugateConfig":
        """Fill data-dependent defaults from the observed outcomes."""
        y = np.asarray(y, dtype=float)
        y = y[np.isfinite(y)]
        theta0, s0 = self.theta0, self.sigma0_sq
        if theta0 is None:
            theta0 = float(y.mean()) if y.size else 0.0
        if s0 is None:
            s0 = float(y.var()) if y.size > 1 else 1.0
            if not s0 > 0:
                s0 = 1.0
        return replace(self, theta0=theta0, sigma0_sq=s0)

    def kernel_args(self, arms: int):
        outcome = 0 if self.outcome == "binary" else 1
        a = np.resize(np.asarray(self.a, dtype=float), arms)
        b = np.resize(np.asarray(self.b, dtype=float), arms)
        theta0 = 0.0 if self.theta0 is None else self.theta0
        s0 = 1.0 if self.sigma0_sq is None else self.sigma0_sq
        hyper = np.array([theta0, self.kappa0, self.nu0, s0])
        return outcome, a, b, hyper


@dataclass(frozen=True)
class CellStats:
    """Arrays indexed [arm, leaf] (both 0-based).

    For binary outcomes ``total`` is the number of responders.
    """

    count: np.ndarray
    total: np.ndarray
    sumsq: np.ndarray

    @property
    def successes(self):
        return self.total

    @property
    def failures(self):
        return self.count - self.total


@dataclass(frozen=True)
class CellParams:
    theta: np.ndarray  # [arm, leaf]
    sigma2: Optional[float] = None


def suff_stats(dataset: TrialDataset, tree: PartitionTree) -> CellStats:
    y = dataset.y
    if np.isnan(y).any():
        raise ValueError("all outcomes must be observed")
    var, thr, mask = tree.encode(dataset.panel)
    X = np.ascontiguousarray(dataset.X, dtype=float).reshape(len(dataset), len(dataset.panel))
    count, total, sumsq = kern.cell_stats(var, thr, mask, dataset.panel.codes(), X,
                                          dataset.z - 1, y, dataset.arms)
    M = tree.n_leaves
    return CellStats(count[:, :M], total[:, :M], sumsq[:, :M])


def log_marginal(stats: CellStats, config: ConjugateConfig) -> float:
    arrays = (stats.count, stats.total, stats.sumsq)
    if not all(np.isfinite(a).all() for a in arrays):
        raise ValueError("non-finite sufficient statistics")
    outcome, a, b, hyper = config.kernel_args(stats.count.shape[0])
    if outcome == 1 and (config.theta0 is None or config.sigma0_sq is None):
        raise ValueError("resolve data-dependent hyperparameters first (ConjugateConfig.resolved)")
    return float(kern.log_marginal_stats(*(np.ascontiguousarray(x, dtype=float) for x in arrays),
                                         outcome, a, b, hyper))


def posterior_params(stats: CellStats, config: ConjugateConfig) -> dict:
    """Conjugate posterior hyperparameters of every cell.

    Binary: Beta(``alpha``, ``beta``) per cell.  Continuous: theta | s2 ~
    N(``mean``, s2 / ``kappa``) per cell, s2 ~ IG(``shape``, ``scale``) shared.
    Accepts any leading batch shape ``(..., T, M)``.
    """
    count, total, sumsq = stats.count, stats.total, stats.sumsq
    T = count.shape[-2]
    if config.outcome == "binary":
        a = np.resize(np.asarray(config.a, float), T)[:, None]
        b = np.resize(np.asarray(config.b, float), T)[:, None]
        return {"alpha": total + a, "beta": count - total + b}
    theta0, k0 = config.theta0, config.kappa0
    su = total - count * theta0
    su2 = sumsq - 2.0 * theta0 * total + count * theta0**2
    quad = np.maximum(su2 - su**2 / (k0 + count), 0.0).sum(axis=(-2, -1))
    return {"mean": (k0 * theta0 + total) / (k0 + count), "kappa": k0 + count,
            "shape": 0.5 * config.nu0 + 0.5 * count.sum(axis=(-2, -1)),
            "scale": 0.5 * config.ss0 + 0.5 * quad}


def draw_cell_params(stats: CellStats, config: ConjugateConfig, rng: np.random.Generator):
    """Posterior draw of the cell parameters.

    Works on stats with any leading batch shape ``(..., T, M)``: the variance
    (continuous case) is drawn once per batch element, theta-collapsed.
    Returns CellParams for unbatched input, else ``(theta, sigma2)`` arrays.
    """
    post = posterior_params(stats, config)
    if config.outcome == "binary":
        theta = rng.beta(post["alpha"], post["beta"])
        sigma2 = None
    else:
        sigma2 = 1.0 / rng.gamma(post["shape"], 1.0 / post["scale"])
        s2 = np.asarray(sigma2)[..., None, None]
        theta = rng.normal(post["mean"], np.sqrt(s2 / post["kappa"]))
    if stats.count.ndim == 2:
        return CellParams(theta, None if sigma2 is None else float(sigma2))
    return theta, sigma2

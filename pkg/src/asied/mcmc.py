"""Posterior simulation over partitions and cell parameters.

Each iteration runs a Metropolis sweep over the split payloads with the split
variables fixed, then an independence Metropolis-Hastings move proposing a
whole new tree from the prior.  Both use the collapsed marginal likelihood,
so the number of leaves can change without changing the sampled state's
dimension.  Cell parameters never enter the Metropolis state: they are drawn
from their conjugate full conditionals for each retained tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels as kern
from .domain import TrialDataset, validate_dataset
from .likelihood import CellParams, ConjugateConfig, CellStats, draw_cell_params
from .partition import PartitionPriorParams, PartitionTree, threshold_range


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 5000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    rw_scale: float = 0.1  # random-walk SD as a fraction of the biomarker range

    def __post_init__(self):
        if self.n_iter < 1 or not (0 <= self.burn_in < self.n_iter):
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thinning interval must be >= 1")
        if self.rw_scale <= 0:
            raise ValueError("rw_scale must be positive")

    @property
    def n_keep(self) -> int:
        return len(range(self.burn_in, self.n_iter, self.thin))


@dataclass
class _Problem:
    """Everything the kernels need about one dataset + model."""

    kinds: np.ndarray
    levels: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    nu: np.ndarray
    X: np.ndarray
    arm: np.ndarray
    y: np.ndarray
    T: int
    outcome: int
    a: np.ndarray
    b: np.ndarray
    hyper: np.ndarray

    @classmethod
    def build(cls, dataset: TrialDataset, prior: PartitionPriorParams, likelihood: ConjugateConfig):
        panel = dataset.panel
        if len(prior.nu) != len(panel) + 1:
            raise ValueError("need one selection probability per biomarker plus nu_0")
        lo, hi = threshold_range(panel, dataset)
        outcome, a, b, hyper = likelihood.kernel_args(dataset.arms)
        X = np.ascontiguousarray(dataset.X, dtype=float).reshape(len(dataset), len(panel))
        return cls(panel.codes(), panel.levels(), lo, hi, prior.array(), X,
                   np.ascontiguousarray(dataset.z - 1), np.ascontiguousarray(dataset.y, dtype=float),
                   dataset.arms, outcome, a, b, hyper)

    @property
    def prior_args(self):
        return self.kinds, self.levels, self.lo, self.hi, self.nu

    @property
    def data_args(self):
        return self.X, self.arm, self.y, self.T, self.outcome, self.a, self.b, self.hyper


@dataclass
class ChainState:
    var: np.ndarray
    thr: np.ndarray
    mask: np.ndarray
    log_prior: float
    log_marginal: float
    counters: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))

    @property
    def log_posterior(self):
        return self.log_prior + self.log_marginal

    def tree(self, panel) -> PartitionTree:
        return PartitionTree.decode(self.var, self.thr, self.mask, panel)


def initial_state(dataset, prior, likelihood, tree: Optional[PartitionTree] = None) -> ChainState:
    likelihood = likelihood.resolved(dataset.y)
    p = _Problem.build(dataset, prior, likelihood)
    tree = tree or PartitionTree()
    var, thr, mask = tree.encode(dataset.panel)
    lp = kern.log_prior(var, thr, mask, *p.prior_args)
    lm = kern.tree_log_marginal(var, thr, mask, p.kinds, *p.data_args)
    return ChainState(var, thr, mask, float(lp), float(lm))


def _rw_sd(p: _Problem, scale: float):
    return np.maximum(p.hi - p.lo, 0.0) * scale


def step_thresholds(state: ChainState, dataset, prior, likelihood, config: ChainConfig, rng) -> ChainState:
    likelihood = likelihood.resolved(dataset.y)
    p = _Problem.build(dataset, prior, likelihood)
    s = replace(state, var=state.var.copy(), thr=state.thr.copy(), mask=state.mask.copy(),
                counters=state.counters.copy())
    kern.seed(int(rng.integers(2**32)))
    lp, lm = kern.threshold_sweep(s.var, s.thr, s.mask, s.log_prior, s.log_marginal, *p.prior_args,
                                  _rw_sd(p, config.rw_scale), *p.data_args, s.counters)
    s.log_prior, s.log_marginal = float(lp), float(lm)
    return s


def step_structure(state: ChainState, dataset, prior, likelihood, rng) -> ChainState:
    likelihood = likelihood.resolved(dataset.y)
    p = _Problem.build(dataset, prior, likelihood)
    s = replace(state, var=state.var.copy(), thr=state.thr.copy(), mask=state.mask.copy(),
                counters=state.counters.copy())
    kern.seed(int(rng.integers(2**32)))
    lp, lm = kern.structure_move(s.var, s.thr, s.mask, s.log_prior, s.log_marginal, *p.prior_args,
                                 *p.data_args, s.counters)
    s.log_prior, s.log_marginal = float(lp), float(lm)
    return s


def structure_acceptance(old: PartitionTree, new: PartitionTree, dataset, prior, likelihood) -> float:
    """Acceptance probability of an independence-from-prior proposal."""
    likelihood = likelihood.resolved(dataset.y)
    p = _Problem.build(dataset, prior, likelihood)
    lm = [kern.tree_log_marginal(*t.encode(dataset.panel), p.kinds, *p.data_args) for t in (old, new)]
    return float(min(1.0, np.exp(lm[1] - lm[0])))


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained samples in array form.

    ``var/thr/mask`` have shape (B, 3) (see the kernel tree layout);
    ``theta`` has shape (B, T, 4) with unused leaves set to NaN.
    """

    panel: object
    var: np.ndarray
    thr: np.ndarray
    mask: np.ndarray
    theta: np.ndarray
    sigma2: Optional[np.ndarray]
    log_posterior: np.ndarray
    counters: np.ndarray  # threshold proposed/accepted, structure proposed/accepted
    likelihood: ConjugateConfig = None

    def __len__(self):
        return self.var.shape[0]

    def tree(self, b) -> PartitionTree:
        return PartitionTree.decode(self.var[b], self.thr[b], self.mask[b], self.panel)

    def n_leaves(self) -> np.ndarray:
        return np.array([kern.n_leaves(v) for v in self.var])

    def __getitem__(self, b):
        M = kern.n_leaves(self.var[b])
        s2 = None if self.sigma2 is None else float(self.sigma2[b])
        return self.tree(b), CellParams(self.theta[b][:, :M], s2)

    @property
    def threshold_acceptance(self) -> float:
        return self.counters[1] / max(self.counters[0], 1)

    @property
    def structure_acceptance(self) -> float:
        return self.counters[3] / max(self.counters[2], 1)

    def effect_diffs(self) -> np.ndarray:
        """(B, 4) arm-2 minus arm-1 effect per leaf; 0 beyond the last leaf."""
        d = self.theta[:, 1, :] - self.theta[:, 0, :]
        return np.nan_to_num(d, nan=0.0)

    def write_trace(self, path, burn_in: int = 0, thin: int = 1):
        with open(path, "w") as fh:
            fh.write("iteration\tleaves\tlog_posterior\ttree\n")
            for b in range(len(self)):
                fh.write(f"{burn_in + b * thin}\t{kern.n_leaves(self.var[b])}\t"
                         f"{self.log_posterior[b]:.6f}\t{self.tree(b).text()}\n")


def run_chain(dataset: TrialDataset, prior: PartitionPriorParams, likelihood: ConjugateConfig,
              config: ChainConfig, init: Optional[PartitionTree] = None) -> PosteriorDraws:
    report = validate_dataset(dataset)
    if not report.ok:
        raise ValueError("invalid dataset: " + "; ".join(report.violations[:5]))
    if not len(dataset):
        raise ValueError("cannot fit an empty dataset")
    if np.isnan(dataset.y).any():
        raise ValueError("all outcomes must be observed")
    if dataset.arms < 2:
        raise ValueError("treatment effects need at least two arms")
    likelihood = likelihood.resolved(dataset.y)
    p = _Problem.build(dataset, prior, likelihood)
    var, thr, mask = (init or PartitionTree()).encode(dataset.panel)
    rng = np.random.default_rng(config.seed)
    tv, tt, tm, trace, counters = kern.run_chain(
        var, thr, mask, *p.prior_args, _rw_sd(p, config.rw_scale), *p.data_args,
        config.n_iter, config.burn_in, config.thin, int(rng.integers(2**32)))
    count, total, sumsq = kern.batch_cell_stats(tv, tt, tm, p.kinds, p.X, p.arm, p.y, p.T)
    theta, sigma2 = draw_cell_params(CellStats(count, total, sumsq), likelihood, rng)
    leaves = np.array([kern.n_leaves(v) for v in tv])
    unused = np.arange(kern.MAX_LEAVES)[None, :] >= leaves[:, None]
    theta[np.broadcast_to(unused[:, None, :], theta.shape)] = np.nan
    return PosteriorDraws(dataset.panel, tv, tt, tm, theta, sigma2, trace, counters, likelihood)

"""Subgroup recovery over replicate datasets: how often each method's
effective subgroup covers the true benefiting region on the grid."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .domain import TrialDataset
from .inference import aggregate_repeated, build_grid, effect_samples, extract_effective_subgroup, tpr_tnr
from .likelihood import ConjugateConfig
from .lr import LrConfig, fit_lr, lr_effect_samples
from .mcmc import ChainConfig, run_chain
from .partition import PartitionPriorParams
from .simulator import ScenarioSpec, enroll, map_replicates, replicate_rng

METHODS = ("partition", "lr")


@dataclass(frozen=True)
class RecoveryConfig:
    n: int = 100
    replicates: int = 100
    lrv: float = 2.37
    xi: float = 0.9
    aggregate_level: float = 0.9
    resolution: int = 20
    chain: ChainConfig = field(default_factory=ChainConfig)
    lr: LrConfig = field(default_factory=LrConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.replicates < 1:
            raise ValueError("need n >= 2 and at least one replicate")


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    method: str
    truth: np.ndarray  # (D,) true region on the grid
    regions: np.ndarray  # (H, D) per-replicate effective subgroups
    aggregated: np.ndarray  # (D,) points kept in more than aggregate_level of replicates
    tpr: Optional[float]
    tnr: Optional[float]


def _one(scenario: ScenarioSpec, method: str, cfg: RecoveryConfig, grid, h: int) -> np.ndarray:
    rng = replicate_rng(cfg.seed, h)
    ds = TrialDataset(scenario.panel(), 2, "continuous", enroll(scenario, cfg.n, rng))
    sub_seed = int(rng.integers(2**32))
    if method == "partition":
        draws = run_chain(ds, PartitionPriorParams.uniform(len(ds.panel)), ConjugateConfig(),
                          replace(cfg.chain, seed=sub_seed))
        effects = effect_samples(draws, grid)
    else:
        effects = lr_effect_samples(fit_lr(ds, replace(cfg.lr, seed=sub_seed)), grid)
    return extract_effective_subgroup(effects, cfg.lrv, cfg.xi)


def recovery_study(scenario: ScenarioSpec, method: str = "partition", config: RecoveryConfig = RecoveryConfig(),
                   threads: int = 1) -> RecoveryResult:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    grid = build_grid(scenario.panel(), config.resolution)
    truth = scenario.true_effect(grid.points) >= config.lrv
    one = lambda h: _one(scenario, method, config, grid, h)
    regions = np.array(map_replicates(one, range(config.replicates), threads))
    tpr, tnr = tpr_tnr(regions, truth)
    return RecoveryResult(method, truth, regions, aggregate_repeated(regions, config.aggregate_level), tpr, tnr)

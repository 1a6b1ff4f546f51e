from collections import Counter

import numpy as np
import pytest

from asied.domain import Binary, BiomarkerPanel, Continuous, TrialDataset
from asied.likelihood import ConjugateConfig, log_marginal, suff_stats
from asied.mcmc import (ChainConfig, initial_state, run_chain, step_structure, step_thresholds,
                        structure_acceptance)
from asied.partition import PartitionPriorParams, PartitionTree, SplitRule

from conftest import continuous_dataset, mixed_dataset
from oracles import chain_frequencies, enumerate_discrete_trees, enumerated_posterior, total_variation

BINARY_LIK = ConjugateConfig(outcome="binary")


def test_enumeration_oracle_small_discrete_problem():
    ds = mixed_dataset(30, np.random.default_rng(12))
    nu = (1 / 3, 1 / 3, 1 / 3)
    exact = enumerated_posterior(ds, nu)
    draws = run_chain(ds, PartitionPriorParams(nu), BINARY_LIK, ChainConfig(n_iter=22_000, burn_in=2_000, seed=1))
    got = chain_frequencies(draws)
    assert set(got) <= set(exact)
    assert total_variation(got, exact) <= 0.05


def test_two_structure_problem():
    rng = np.random.default_rng(3)
    panel = BiomarkerPanel.of([Binary()])
    n = 40
    X = rng.integers(0, 2, (n, 1)).astype(float)
    z = rng.integers(1, 3, n)
    y = (rng.random(n) < 0.3 + 0.4 * ((z == 2) & (X[:, 0] == 1))).astype(float)
    ds = TrialDataset.from_arrays(panel, X, z, y, outcome="binary")
    nu = (0.5, 0.5)
    exact = enumerated_posterior(ds, nu)
    assert len(exact) == 2
    draws = run_chain(ds, PartitionPriorParams(nu), BINARY_LIK, ChainConfig(n_iter=21_000, burn_in=1_000, seed=4))
    split = PartitionTree(SplitRule(0)).text()
    assert abs(chain_frequencies(draws).get(split, 0.0) - exact[split]) <= 0.03


def test_threshold_conditional_matches_gridded_posterior():
    rng = np.random.default_rng(21)
    panel = BiomarkerPanel.of([Continuous(-1, 1)])
    n = 24
    X = rng.uniform(-1, 1, (n, 1))
    z = rng.integers(1, 3, n)
    y = 0.5 + 1.5 * ((z == 2) & (X[:, 0] > 0.1)) + rng.normal(0, 0.7, n)
    ds = TrialDataset.from_arrays(panel, X, z, y)
    prior = PartitionPriorParams((0.5, 0.5))
    lik = ConjugateConfig().resolved(ds.y)
    lo, hi = X.min(), X.max()
    # gridded exact conditional: uniform prior on (lo, hi) x collapsed marginal
    cs = lo + (np.arange(1000) + 0.5) * (hi - lo) / 1000
    logs = np.array([log_marginal(suff_stats(ds, PartitionTree(SplitRule(0, float(c)))), lik) for c in cs])
    w = np.exp(logs - logs.max())
    w /= w.sum()
    edges = np.linspace(lo, hi, 21)
    exact = np.histogram(cs, edges, weights=w)[0]

    state = initial_state(ds, prior, lik, PartitionTree(SplitRule(0, float((lo + hi) / 2))))
    cfg = ChainConfig(rw_scale=0.3)
    step_rng = np.random.default_rng(9)
    kept = []
    for it in range(30_000):
        state = step_thresholds(state, ds, prior, lik, cfg, step_rng)
        if it >= 1000:
            kept.append(state.thr[0])
    assert state.var[0] == 0 and state.var[1] < 0 and state.var[2] < 0
    got = np.histogram(kept, edges)[0] / len(kept)
    assert 0.5 * np.abs(got - exact).sum() <= 0.05


def test_no_internal_nodes_threshold_step_is_identity():
    ds = continuous_dataset(20, np.random.default_rng(0))
    prior = PartitionPriorParams.uniform(2)
    s0 = initial_state(ds, prior, ConjugateConfig())
    s1 = step_thresholds(s0, ds, prior, ConjugateConfig(), ChainConfig(), np.random.default_rng(1))
    assert (s1.var == s0.var).all() and s1.log_marginal == s0.log_marginal
    assert s1.counters[0] == 0


def test_identical_structure_proposal_has_unit_acceptance():
    ds = continuous_dataset(30, np.random.default_rng(0))
    tree = PartitionTree(SplitRule(0, 0.1))
    assert structure_acceptance(tree, tree, ds, PartitionPriorParams.uniform(2), ConjugateConfig()) == 1.0


def test_structure_step_keeps_valid_state():
    ds = continuous_dataset(40, np.random.default_rng(5))
    prior = PartitionPriorParams.uniform(2)
    lik = ConjugateConfig()
    state = initial_state(ds, prior, lik)
    rng = np.random.default_rng(2)
    for _ in range(200):
        state = step_structure(state, ds, prior, lik, rng)
        assert np.isfinite(state.log_prior) and np.isfinite(state.log_marginal)
    assert state.counters[2] == 200


def test_determinism_and_shapes():
    ds = continuous_dataset(60, np.random.default_rng(7))
    cfg = ChainConfig(n_iter=1500, burn_in=500, thin=2, seed=42)
    a = run_chain(ds, PartitionPriorParams.uniform(2), ConjugateConfig(), cfg)
    b = run_chain(ds, PartitionPriorParams.uniform(2), ConjugateConfig(), cfg)
    assert len(a) == cfg.n_keep == 500
    for name in ("var", "thr", "mask", "theta", "sigma2", "log_posterior", "counters"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True)
    assert (a.sigma2 > 0).all() and np.isfinite(a.log_posterior).all()
    leaves = a.n_leaves()
    assert ((leaves >= 1) & (leaves <= 4)).all()
    for b_ in range(0, len(a), 97):
        tree, params = a[b_]
        assert params.theta.shape == (2, tree.n_leaves) and np.isfinite(params.theta).all()
    assert 0 < a.threshold_acceptance < 1 and 0 < a.structure_acceptance < 1


def test_scenario_one_mode_splits_on_first_biomarker():
    ds = continuous_dataset(100, np.random.default_rng(1), K=4)
    draws = run_chain(ds, PartitionPriorParams.uniform(4), ConjugateConfig(), ChainConfig(seed=3))
    roots = Counter(int(v) for v in draws.var[:, 0])
    assert roots.most_common(1)[0][0] == 0


def test_null_data_prefers_small_trees():
    rng = np.random.default_rng(17)
    panel = BiomarkerPanel.of([Binary()] * 2)
    n = 100
    X = rng.integers(0, 2, (n, 2)).astype(float)
    z = rng.integers(1, 3, n)
    y = (rng.random(n) < 0.4).astype(float)
    ds = TrialDataset.from_arrays(panel, X, z, y, outcome="binary")
    nu = (1 / 3, 1 / 3, 1 / 3)
    exact = enumerated_posterior(ds, nu)
    by_leaves = Counter()
    for tree, _ in enumerate_discrete_trees(panel.kinds, nu):
        by_leaves[tree.n_leaves] += exact[tree.text()]
    draws = run_chain(ds, PartitionPriorParams(nu), BINARY_LIK, ChainConfig(n_iter=12_000, burn_in=2_000, seed=5))
    occ = Counter(draws.n_leaves().tolist())
    assert occ.most_common(1)[0][0] == by_leaves.most_common(1)[0][0] == 1
    assert total_variation(chain_frequencies(draws), exact) <= 0.05


def test_trace_dump(tmp_path):
    ds = continuous_dataset(30, np.random.default_rng(2))
    draws = run_chain(ds, PartitionPriorParams.uniform(2), ConjugateConfig(),
                      ChainConfig(n_iter=300, burn_in=100, seed=0))
    path = tmp_path / "trace.tsv"
    draws.write_trace(path, burn_in=100)
    lines = path.read_text().splitlines()
    assert lines[0].split("\t") == ["iteration", "leaves", "log_posterior", "tree"]
    assert len(lines) == 201 and lines[1].startswith("100\t")


@pytest.mark.parametrize("kw", [dict(n_iter=10, burn_in=10), dict(thin=0), dict(rw_scale=0.0)])
def test_chain_config_validation(kw):
    with pytest.raises(ValueError):
        ChainConfig(**kw)


def test_rejects_missing_outcomes():
    panel = BiomarkerPanel.of([Continuous(-1, 1)])
    ds = TrialDataset.from_arrays(panel, [[0.0], [0.5]], [1, 2], None)
    with pytest.raises(ValueError):
        run_chain(ds, PartitionPriorParams.uniform(1), ConjugateConfig(), ChainConfig(n_iter=10, burn_in=0))

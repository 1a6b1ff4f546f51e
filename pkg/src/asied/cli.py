"""Command-line entry point.

    asied identify DATA.csv --config run.yaml --seed 1 --out results/
    asied oc --config run.yaml --seed 1 --threads 4 --out results/

Every command is a pure function of its inputs, config and seed.  Results
are computed in full before anything is written, so a failing run leaves no
partial output behind.  Exit codes: 0 ok, 2 config or schema error, 3
runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _kernels as kern
from .decision import classify_zone
from .domain import TrialDataset
from .inference import build_grid, effect_samples, extract_effective_subgroup, region_text, report_region
from .io import (ConfigError, RunConfig, dataset_csv, json_lines, json_text, load_config, read_dataset, tsv)
from .lr import fit_lr, lr_effect_samples
from .mcmc import run_chain
from .simulator import (INTERIM_ORDER, OC_SCENARIOS, calibrate_thresholds, enroll, replicate_rng,
                        run_operating_characteristics, run_trials, sensitivity_n1)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _structure(var, panel) -> str:
    names = panel.names

    def sub(k):
        return "leaf" if k < 0 else f"split({names[k]})[leaf, leaf]"

    if var[0] < 0:
        return "leaf"
    return f"split({names[var[0]]})[{sub(var[1])}, {sub(var[2])}]"


def _tree_table(draws, panel, decimals):
    """Posterior frequency of each split structure, with its best-scoring tree."""
    groups = defaultdict(list)
    for b in range(len(draws)):
        groups[tuple(int(v) for v in draws.var[b])].append(b)
    rows = []
    for key, idx in groups.items():
        best = max(idx, key=lambda b: (draws.log_posterior[b], -b))
        rows.append((_structure(key, panel), kern.n_leaves(np.array(key)), len(idx),
                     len(idx) / len(draws), draws.tree(best).text()))
    rows.sort(key=lambda r: (-r[2], r[0]))
    return tsv(["structure", "leaves", "count", "frequency", "map_tree"], rows, decimals)


def _region_summary(effects, grid, cfg: RunConfig):
    tpp = cfg.trial.tpp
    full = np.ones(grid.size, dtype=bool)
    all_rep = report_region(effects, full, tpp.lrv, tpp.tv)
    region = extract_effective_subgroup(effects, tpp.lrv, cfg.trial.candidate_xi)
    sub_rep = report_region(effects, region, tpp.lrv, tpp.tv)

    def block(rep):
        zone = None if rep.pr_lrv is None else classify_zone(rep.pr_lrv, rep.pr_tv, tpp).value
        return {"points": rep.size, "pr_lrv": rep.pr_lrv, "pr_tv": rep.pr_tv,
                "mean_effect": rep.mean_effect, "zone": zone}

    summary = {"grid_points": grid.size, "all_comers": block(all_rep), "subgroup": block(sub_rep),
               "tpp": {"lrv": tpp.lrv, "tv": tpp.tv, "xi1": tpp.xi1, "xi2": tpp.xi2},
               "xi": cfg.trial.candidate_xi}
    return sub_rep, summary


def cmd_identify(args, cfg: RunConfig):
    ds = read_dataset(args.data, cfg.trial.arms)
    trial = cfg.trial
    lik = replace(trial.likelihood, outcome=ds.outcome)
    prior = trial.prior(len(ds.panel))
    draws = run_chain(ds, prior, lik, replace(trial.chain, seed=cfg.seed))
    grid = build_grid(ds.panel, trial.resolution)
    rep, summary = _region_summary(effect_samples(draws, grid), grid, cfg)
    summary.update(method="partition", n=len(ds), samples=len(draws),
                   threshold_acceptance=draws.threshold_acceptance,
                   structure_acceptance=draws.structure_acceptance)
    d = cfg.decimals
    return {"region.txt": region_text(grid, rep, d), "trees.tsv": _tree_table(draws, ds.panel, d),
            "summary.json": json_text(summary, d)}


def cmd_baseline_lr(args, cfg: RunConfig):
    ds = read_dataset(args.data, cfg.trial.arms)
    if ds.outcome != "continuous":
        raise ConfigError("the regression baseline needs a continuous outcome")
    draws = fit_lr(ds, replace(cfg.lr, seed=cfg.seed), np.random.default_rng(cfg.seed))
    grid = build_grid(ds.panel, cfg.trial.resolution)
    rep, summary = _region_summary(lr_effect_samples(draws, grid), grid, cfg)
    summary.update(method="linear-regression", n=len(ds), samples=len(draws))
    d = cfg.decimals
    return {"region.txt": region_text(grid, rep, d), "summary.json": json_text(summary, d)}


def _scenarios(cfg: RunConfig, default):
    return list(cfg.scenarios) or list(default)


def cmd_generate(args, cfg: RunConfig):
    (scen,) = _scenarios(cfg, [OC_SCENARIOS[1]])[:1]
    rng = np.random.default_rng(cfg.seed)
    ds = TrialDataset(scen.panel(), 2, "continuous", enroll(scen, cfg.n, rng))
    return {"data.csv": dataset_csv(ds, cfg.decimals)}


def _trial_log(name, results, tpp, decimals):
    records = []
    for h, res in enumerate(results):
        for a in res.analyses:
            records.append({"scenario": name, "replicate": h, **a.log_record(tpp, decimals)})
    return records


def _oc_rows(name, oc):
    row = oc.row()
    return [name, oc.replicates] + list(row.values())


def _oc_header(oc_row_keys):
    return ["scenario", "replicates"] + list(oc_row_keys)


def cmd_simulate(args, cfg: RunConfig):
    scen = _scenarios(cfg, [OC_SCENARIOS[1]])[0]
    results = run_trials(scen, cfg.trial, cfg.replicates, args.threads)
    rows = []
    for h, r in enumerate(results):
        rows.append([h, r.first.value, "NA" if r.second is None else r.second.value, r.final.a,
                     r.n_enrolled, 0 if r.region is None else int(np.sum(r.region))])
    d = cfg.decimals
    return {"trials.tsv": tsv(["replicate", "first", "second", "a", "enrolled", "region_points"], rows, d),
            "decisions.log": json_lines(_trial_log(scen.name, results, cfg.trial.tpp, d), d)}


def cmd_oc(args, cfg: RunConfig):
    rows, log, keys = [], [], None
    for scen in _scenarios(cfg, OC_SCENARIOS.values()):
        oc, results = run_operating_characteristics(scen, cfg.trial, cfg.replicates, args.threads)
        keys = oc.row().keys()
        rows.append(_oc_rows(scen.name, oc))
        log += _trial_log(scen.name, results, cfg.trial.tpp, cfg.decimals)
    d = cfg.decimals
    return {"oc.tsv": tsv(_oc_header(keys), rows, d), "decisions.log": json_lines(log, d)}


def cmd_calibrate(args, cfg: RunConfig):
    table = calibrate_thresholds(_scenarios(cfg, OC_SCENARIOS.values()), cfg.trial, cfg.xi1_grid,
                                 cfg.xi2_grid, cfg.caps, cfg.replicates, args.threads)
    rows = [[r.xi1, r.xi2, r.fsr, r.fgr, r.fer, int(r.admissible)] for r in table]
    return {"calibration.tsv": tsv(["xi1", "xi2", "fsr", "fgr", "fer", "admissible"], rows, cfg.decimals)}


def cmd_sensitivity(args, cfg: RunConfig):
    scen = _scenarios(cfg, [OC_SCENARIOS[2]])[0]
    table = sensitivity_n1(scen, cfg.trial, cfg.n1_grid, cfg.replicates, args.threads)
    header = ["n1"] + [f"Pr({act.value})" for act in INTERIM_ORDER]
    rows = [[n1] + [freq[act] for act in INTERIM_ORDER] for n1, freq in table]
    return {"sensitivity.tsv": tsv(header, rows, cfg.decimals)}


COMMANDS = {
    "identify": (cmd_identify, "fit the partition model to a CSV and report the effective subgroup"),
    "baseline-lr": (cmd_baseline_lr, "same report from the linear-regression baseline"),
    "generate": (cmd_generate, "write a simulated dataset for the configured scenario"),
    "simulate": (cmd_simulate, "run replicate adaptive trials and log every analysis"),
    "oc": (cmd_oc, "operating characteristics table over scenarios"),
    "calibrate": (cmd_calibrate, "first-interim risks over a grid of (xi1, xi2)"),
    "sensitivity": (cmd_sensitivity, "first-interim decisions against the first-look sample size"),
}


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("need a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asied", description="Adaptive subgroup-enrichment trial tools.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
    common.add_argument("--threads", type=_positive, default=os.cpu_count() or 1,
                        help="worker threads for replicate trials (default: all cores)")
    common.add_argument("--out", metavar="DIR", default="results", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name in ("identify", "baseline-lr"):
            p.add_argument("data", help="CSV with a typed header")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config).with_seed(args.seed)
        outputs = fn(args, cfg)
    except ConfigError as exc:
        print(f"asied: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001  any other failure is a runtime error
        print(f"asied: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for fname, text in outputs.items():
            (out / fname).write_text(text)
    except OSError as exc:
        print(f"asied: cannot write results: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration, CSV datasets and result files.

Configs are YAML documents with a ``schema`` version; every key is checked
against the tables below before anything runs, so a typo in a threshold
name fails loudly instead of silently falling back to a default.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np
import yaml

from .decision import Tpp
from .domain import (Biomarker, BiomarkerPanel, Binary, Categorical, Continuous, Ordinal, PatientRecord,
                     TrialDataset, validate_dataset)
from .likelihood import ConjugateConfig
from .lr import LrConfig
from .mcmc import ChainConfig
from .simulator import OC_SCENARIOS, SUBGROUP_SCENARIOS, RiskCaps, ScenarioSpec, TrialConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration or dataset schema (exit code 2)."""


PRESETS = {s.name: s for s in list(OC_SCENARIOS.values()) + list(SUBGROUP_SCENARIOS.values())}

_SECTIONS = {
    "trial": {"N", "n1", "n2", "arms", "lrv", "tv", "xi1", "xi2", "resolution", "candidate_xi", "prior_nu"},
    "chain": {"n_iter", "burn_in", "thin", "rw_scale"},
    "likelihood": {"a", "b", "theta0", "kappa0", "nu0", "sigma0_sq"},
    "lr": {"shape", "rate", "scale", "n_iter", "burn_in"},
    "calibration": {"xi1", "xi2", "fsr", "fgr", "fer"},
    "sensitivity": {"n1"},
}
_SCENARIO_KEYS = {"name", "biomarkers", "beta0", "beta1", "region", "noise_sd", "baseline"}
_TOP = {"schema", "seed", "decimals", "replicates", "scenario", "scenarios", "n", *_SECTIONS}


@dataclass(frozen=True)
class RunConfig:
    seed: Optional[int] = None
    decimals: int = 4
    replicates: int = 100
    n: int = 100  # patients for `generate`
    trial: TrialConfig = field(default_factory=TrialConfig)
    lr: LrConfig = field(default_factory=LrConfig)
    scenarios: tuple = ()
    xi1_grid: tuple = (0.7, 0.75, 0.8, 0.85, 0.9)
    xi2_grid: tuple = (0.05, 0.1, 0.15, 0.2)
    caps: RiskCaps = field(default_factory=RiskCaps)
    n1_grid: tuple = (40, 60, 80, 100, 120)

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        seed = self.seed if seed is None else seed
        if seed is None:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        trial = replace(self.trial, seed=seed)
        return replace(self, seed=seed, trial=trial, lr=replace(self.lr, seed=seed))


def _check_keys(where: str, doc, allowed):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")


def _scenario(doc, where: str) -> ScenarioSpec:
    if isinstance(doc, str):
        if doc not in PRESETS:
            raise ConfigError(f"{where}: unknown scenario preset {doc!r} (have {', '.join(sorted(PRESETS))})")
        return PRESETS[doc]
    _check_keys(where, doc, _SCENARIO_KEYS)
    return ScenarioSpec(**{"name": "custom", **doc})


def parse_config(doc) -> RunConfig:
    """Validate a parsed YAML document and build the run configuration."""
    if doc is None:
        doc = {}
    _check_keys("config", doc, _TOP)
    if doc.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {doc.get('schema')!r}; expected {SCHEMA_VERSION}")
    for name, allowed in _SECTIONS.items():
        _check_keys(name, doc.get(name, {}), allowed)
    try:
        t = dict(doc.get("trial", {}))
        tpp = Tpp(**{k: t.pop(k) for k in ("lrv", "tv", "xi1", "xi2") if k in t})
        if "prior_nu" in t:
            t["prior_nu"] = tuple(t["prior_nu"])
        lik = {k: tuple(v) if k in ("a", "b") else v for k, v in doc.get("likelihood", {}).items()}
        trial = TrialConfig(tpp=tpp, chain=ChainConfig(**doc.get("chain", {})),
                            likelihood=ConjugateConfig(**lik), **t)
        lr = LrConfig(**doc.get("lr", {}))
        scen = []
        if "scenario" in doc:
            scen.append(_scenario(doc["scenario"], "scenario"))
        for i, s in enumerate(doc.get("scenarios", []) or []):
            scen.append(_scenario(s, f"scenarios[{i}]"))
        cal = doc.get("calibration", {})
        caps = RiskCaps(**{k: cal[k] for k in ("fsr", "fgr", "fer") if k in cal})
        cfg = RunConfig(trial=trial, lr=lr, scenarios=tuple(scen), caps=caps)
        updates = {k: doc[k] for k in ("seed", "decimals", "replicates", "n") if k in doc}
        if "xi1" in cal:
            updates["xi1_grid"] = tuple(float(v) for v in cal["xi1"])
        if "xi2" in cal:
            updates["xi2_grid"] = tuple(float(v) for v in cal["xi2"])
        if "n1" in doc.get("sensitivity", {}):
            updates["n1_grid"] = tuple(int(v) for v in doc["sensitivity"]["n1"])
        cfg = replace(cfg, **updates)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    for key in ("decimals", "replicates", "n"):
        v = getattr(cfg, key)
        if not isinstance(v, int) or isinstance(v, bool) or v < (0 if key == "decimals" else 1):
            raise ConfigError(f"{key} must be a {'nonnegative' if key == 'decimals' else 'positive'} integer")
    if cfg.seed is not None and (not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool)):
        raise ConfigError("seed must be an integer")
    return cfg


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return parse_config(doc)


# ------------------------------------------------------------------ datasets

@dataclass(frozen=True)
class _Column:
    name: str
    role: str  # biomarker | arm | outcome
    kind: str = ""
    levels: int = 0
    labels: Optional[tuple] = None


def _parse_header_cell(cell: str) -> _Column:
    parts = [p.strip() for p in cell.split(":")]
    if len(parts) < 2 or not parts[0]:
        raise ConfigError(f"header cell {cell!r} must look like name:type")
    name, kind, rest = parts[0], parts[1], parts[2:]
    if kind == "arm" and not rest:
        return _Column(name, "arm")
    if kind == "outcome" and len(rest) <= 1:
        out = rest[0] if rest else "continuous"
        if out not in ("binary", "continuous"):
            raise ConfigError(f"column {name}: outcome must be binary or continuous")
        return _Column(name, "outcome", out)
    if kind in ("continuous", "binary") and not rest:
        return _Column(name, "biomarker", kind)
    if kind in ("ordinal", "categorical") and len(rest) == 1:
        spec = rest[0]
        if spec.isdigit():
            return _Column(name, "biomarker", kind, int(spec))
        labels = tuple(s.strip() for s in spec.split("|"))
        if len(labels) < 2 or len(set(labels)) != len(labels) or not all(labels):
            raise ConfigError(f"column {name}: need two or more distinct labels")
        return _Column(name, "biomarker", kind, len(labels), labels)
    raise ConfigError(f"cannot interpret header cell {cell!r}")


def _parse_value(col: _Column, raw: str, line: int) -> float:
    raw = raw.strip()
    if col.labels is not None:
        if raw not in col.labels:
            raise ConfigError(f"line {line}: {raw!r} is not a level of {col.name}")
        return float(col.labels.index(raw) + 1)
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {line}: {col.name} value {raw!r} is not a number") from None


def read_dataset(path, arms: int = 2) -> TrialDataset:
    """Read a CSV whose header types each column, e.g.
    ``age:continuous,stage:ordinal:3,site:categorical:a|b|c,z:arm,y:outcome``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read dataset: {exc}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigError("dataset file is empty")
    cols = [_parse_header_cell(c) for c in rows[0]]
    roles = [c.role for c in cols]
    if roles.count("arm") != 1 or roles.count("outcome") != 1:
        raise ConfigError("header needs exactly one arm column and one outcome column")
    bio = [c for c in cols if c.role == "biomarker"]
    if not bio:
        raise ConfigError("header declares no biomarker columns")
    values = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(cols):
            raise ConfigError(f"line {i}: expected {len(cols)} fields, got {len(row)}")
        values.append([_parse_value(c, v, i) for c, v in zip(cols, row)])
    V = np.array(values, dtype=float).reshape(len(values), len(cols))
    kinds = []
    for j, c in enumerate(cols):
        if c.role != "biomarker":
            continue
        if c.kind == "continuous":
            col = V[:, j]
            lo, hi = (float(col.min()), float(col.max())) if len(col) else (0.0, 1.0)
            kinds.append(Biomarker(c.name, Continuous(lo, hi if hi > lo else lo + 1.0)))
        elif c.kind == "binary":
            kinds.append(Biomarker(c.name, Binary()))
        else:
            kind = Ordinal(c.levels) if c.kind == "ordinal" else Categorical(c.levels)
            kinds.append(Biomarker(c.name, kind, c.labels))
    panel = BiomarkerPanel(tuple(kinds))
    xi = [j for j, c in enumerate(cols) if c.role == "biomarker"]
    zi, yi = roles.index("arm"), roles.index("outcome")
    outcome = cols[yi].kind
    recs = []
    for i in range(V.shape[0]):
        z = V[i, zi]
        if z != int(z):
            raise ConfigError(f"line {i + 2}: arm must be an integer")
        recs.append(PatientRecord(i, tuple(V[i, xi].tolist()), int(z), float(V[i, yi])))
    ds = TrialDataset(panel, arms, outcome, tuple(recs))
    report = validate_dataset(ds)
    if not report.ok:
        raise ConfigError("invalid dataset: " + "; ".join(report.violations[:5]))
    return ds


def dataset_csv(dataset: TrialDataset, decimals: int = 4) -> str:
    """Inverse of :func:`read_dataset` (labels are written as codes)."""
    head = []
    for b in dataset.panel:
        kind = b.kind
        if isinstance(kind, Continuous):
            head.append(f"{b.name}:continuous")
        elif isinstance(kind, Binary):
            head.append(f"{b.name}:binary")
        else:
            name = "ordinal" if isinstance(kind, Ordinal) else "categorical"
            head.append(f"{b.name}:{name}:{kind.levels}")
    head += ["z:arm", "y:outcome" + (":binary" if dataset.outcome == "binary" else "")]
    lines = [",".join(head)]
    for r in dataset.records:
        xs = [f"{v:.{decimals}f}" if isinstance(b.kind, Continuous) else str(int(v))
              for b, v in zip(dataset.panel, r.x)]
        lines.append(",".join(xs + [str(r.z), f"{r.y:.{decimals}f}"]))
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------- writers

def fmt(v, decimals: int) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)) and not isinstance(v, Fraction):
        return str(int(v))
    return f"{float(v):.{decimals}f}"


def tsv(header, rows, decimals: int) -> str:
    out = ["\t".join(header)]
    for r in rows:
        out.append("\t".join(c if isinstance(c, str) else fmt(c, decimals) for c in r))
    return "\n".join(out) + "\n"


def rounded(obj, decimals: int):
    """Round every float in a JSON-like structure for stable output."""
    if isinstance(obj, dict):
        return {k: rounded(v, decimals) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v, decimals) for v in obj]
    if isinstance(obj, (float, np.floating, Fraction)):
        v = float(obj)
        return round(v, decimals) if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def json_text(obj, decimals: int) -> str:
    return json.dumps(rounded(obj, decimals), indent=2, sort_keys=True) + "\n"


def json_lines(records, decimals: int) -> str:
    return "".join(json.dumps(rounded(r, decimals), sort_keys=True) + "\n" for r in records)

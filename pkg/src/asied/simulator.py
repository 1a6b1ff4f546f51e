"""Virtual trials: scenario generators, the adaptive trial flow, and
replicate-level summaries (operating characteristics, risk calibration and
first-interim sample-size sensitivity)."""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from .decision import (Action, FinalRec, InterimDecision, Tpp, Zone, classify_zone, final_recommendation,
                       interim_decision, second_interim_decision)
from .domain import Binary, BiomarkerPanel, Continuous, PatientRecord, TrialDataset
from .inference import (EffectGrid, SubgroupReport, build_grid, effect_samples, extract_effective_subgroup,
                        report_region)
from .likelihood import ConjugateConfig
from .mcmc import ChainConfig, run_chain
from .partition import PartitionPriorParams

_COND = re.compile(r"^\s*x(\d+)\s*(<=|>=|==|<|>)\s*([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)\s*$")
_OPS = {
    "<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal, "==": np.equal,
}


def parse_region(text: str):
    """'x1 > -0.4 & x2 <= 0.3' -> ((0, '>', -0.4), (1, '<=', 0.3)); '' -> ()."""
    if not text or not text.strip():
        return ()
    conds = []
    for part in text.split("&"):
        m = _COND.match(part)
        if not m:
            raise ValueError(f"cannot parse region condition {part!r}")
        conds.append((int(m.group(1)) - 1, m.group(2), float(m.group(3))))
    return tuple(conds)


@dataclass(frozen=True)
class ScenarioSpec:
    """y = baseline + beta0*I(z=2) + beta1*I(x in region)*I(z=2) + N(0, noise_sd^2).

    Continuous biomarkers are Uniform(-1, 1); binary ones Bernoulli(0.5).
    """

    name: str
    biomarkers: tuple = ("continuous",) * 4
    beta0: float = 0.25
    beta1: float = 0.0
    region: str = "x1 > -0.4"
    noise_sd: float = 1.0
    baseline: float = 0.75

    def __post_init__(self):
        object.__setattr__(self, "biomarkers", tuple(self.biomarkers))
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        bad = [b for b in self.biomarkers if b not in ("continuous", "binary")]
        if bad:
            raise ValueError(f"unsupported scenario biomarker kinds: {bad}")
        for k, _, _ in self.conditions:
            if not 0 <= k < len(self.biomarkers):
                raise ValueError(f"region refers to x{k + 1}, which does not exist")

    @property
    def conditions(self):
        return parse_region(self.region)

    def panel(self) -> BiomarkerPanel:
        kinds = [Continuous(-1.0, 1.0) if b == "continuous" else Binary() for b in self.biomarkers]
        return BiomarkerPanel.of(kinds)

    def in_region(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.ones(X.shape[0], dtype=bool)
        for k, op, v in self.conditions:
            out &= _OPS[op](X[:, k], v)
        return out

    def true_effect(self, X) -> np.ndarray:
        return self.beta0 + self.beta1 * self.in_region(X)

    def mean_response(self, X, z) -> np.ndarray:
        return self.baseline + (np.asarray(z) == 2) * self.true_effect(X)

    def truth(self, lrv: float) -> str:
        """'null', 'subgroup' or 'all-comers' by where the true effect exceeds lrv."""
        if self.beta0 > lrv and self.beta0 + self.beta1 > lrv:
            return "all-comers"
        if self.beta0 + self.beta1 > lrv or self.beta0 > lrv:
            return "subgroup"
        return "null"

    def draw_biomarkers(self, n: int, rng) -> np.ndarray:
        X = np.empty((n, len(self.biomarkers)))
        for k, b in enumerate(self.biomarkers):
            X[:, k] = rng.uniform(-1.0, 1.0, n) if b == "continuous" else rng.integers(0, 2, n)
        return X


# scenarios for subgroup recovery (noise sd 1)
SUBGROUP_SCENARIOS = {
    1: ScenarioSpec("subgroup-1", beta0=0.25, beta1=3.0, region="x1 > -0.4"),
    2: ScenarioSpec("subgroup-2", beta0=0.25, beta1=3.0, region="x1 < 0.3 & x2 > -0.4"),
    3: ScenarioSpec("subgroup-3", beta0=0.25, beta1=1.5, region="x1 > 0.4"),
    4: ScenarioSpec("subgroup-4", biomarkers=("binary", "continuous", "continuous", "continuous"),
                    beta0=0.25, beta1=3.5, region="x1 == 1 & x2 > -0.4"),
}

# scenarios for trial operating characteristics (noise sd 0.5)
OC_SCENARIOS = {
    1: ScenarioSpec("oc-1", beta0=0.25, beta1=2.0, noise_sd=0.5),
    2: ScenarioSpec("oc-2", beta0=0.25, beta1=2.55, noise_sd=0.5),
    3: ScenarioSpec("oc-3", beta0=0.25, beta1=2.83, noise_sd=0.5),
    4: ScenarioSpec("oc-4", beta0=2.6, beta1=0.0, noise_sd=0.5),
    5: ScenarioSpec("oc-5", beta0=3.08, beta1=0.0, noise_sd=0.5),
}


def generate_patient(scenario: ScenarioSpec, z: int, rng, id: int = 0) -> PatientRecord:
    x = scenario.draw_biomarkers(1, rng)
    y = scenario.mean_response(x, [z])[0] + rng.normal(0.0, scenario.noise_sd)
    return PatientRecord(id, tuple(x[0].tolist()), int(z), float(y))


class DegenerateRegion(RuntimeError):
    pass


def enroll(scenario: ScenarioSpec, n: int, rng, eligible=None, start_id: int = 0,
           min_rate: float = 1e-4) -> List[PatientRecord]:
    """n patients, equally randomised to arms 1 and 2.

    ``eligible(X) -> bool array`` filters candidates by rejection sampling.
    """
    if n <= 0:
        return []
    if eligible is None:
        X = scenario.draw_biomarkers(n, rng)
    else:
        kept, tried = [], 0
        need = n
        while need > 0:
            batch = scenario.draw_biomarkers(max(4 * need, 64), rng)
            tried += len(batch)
            ok = batch[eligible(batch)]
            kept.append(ok[:need])
            need -= len(ok[:need])
            if tried >= 100_000 and (n - need) / tried < min_rate:
                raise DegenerateRegion(f"eligibility rate below {min_rate} after {tried} candidates")
        X = np.concatenate(kept)
    z = rng.integers(1, 3, n)
    y = scenario.mean_response(X, z) + rng.normal(0.0, scenario.noise_sd, n)
    return [PatientRecord(start_id + i, tuple(X[i].tolist()), int(z[i]), float(y[i])) for i in range(n)]


@dataclass(frozen=True)
class TrialConfig:
    N: int = 180
    n1: int = 100
    n2: int = 40
    arms: int = 2
    tpp: Tpp = field(default_factory=Tpp)
    chain: ChainConfig = field(default_factory=ChainConfig)
    resolution: int = 20
    candidate_xi: float = 0.9
    prior_nu: Optional[tuple] = None  # None: uniform over stop + each biomarker
    likelihood: ConjugateConfig = field(default_factory=ConjugateConfig)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.n1 < self.N:
            raise ValueError("need 0 < n1 < N")
        if self.n2 < 1 or self.n1 + self.n2 >= self.N:
            raise ValueError("need n2 >= 1 and n1 + n2 < N")
        if not 0 < self.candidate_xi < 1:
            raise ValueError("candidate_xi must lie in (0, 1)")

    def prior(self, n_biomarkers: int) -> PartitionPriorParams:
        if self.prior_nu is None:
            return PartitionPriorParams.uniform(n_biomarkers)
        return PartitionPriorParams(self.prior_nu)


@dataclass(frozen=True, eq=False)
class Analysis:
    """Posterior summaries at one look at the data."""

    stage: str
    n: int
    context: str  # "all" or "enriched"
    all_comers: SubgroupReport
    candidate: Optional[SubgroupReport]  # best subgroup (all-comers context only)
    region: Optional[SubgroupReport] = None  # frozen enrichment region (enriched context)
    decision: str = ""

    def zones(self, tpp: Tpp):
        z_all = classify_zone(self.all_comers.pr_lrv, self.all_comers.pr_tv, tpp)
        cand = None
        if self.candidate is not None:
            cand = (self.candidate.region, classify_zone(self.candidate.pr_lrv, self.candidate.pr_tv, tpp))
        z_reg = None
        if self.region is not None:
            z_reg = classify_zone(self.region.pr_lrv, self.region.pr_tv, tpp)
        return z_all, cand, z_reg

    def log_record(self, tpp: Tpp, decimals: int = 4) -> dict:
        z_all, cand, z_reg = self.zones(tpp)
        r = lambda v: round(float(v), decimals)
        rec = {"stage": self.stage, "n": self.n, "context": self.context,
               "all": {"pr_lrv": r(self.all_comers.pr_lrv), "pr_tv": r(self.all_comers.pr_tv),
                       "zone": z_all.value}}
        if self.candidate is not None:
            rec["candidate"] = {"points": self.candidate.size, "pr_lrv": r(self.candidate.pr_lrv),
                                "pr_tv": r(self.candidate.pr_tv), "zone": cand[1].value}
        if self.region is not None:
            rec["region"] = {"points": self.region.size, "pr_lrv": r(self.region.pr_lrv),
                             "pr_tv": r(self.region.pr_tv), "zone": z_reg.value}
        rec["decision"] = self.decision
        return rec


def candidate_region(effects, lrv: float, xi: float) -> Optional[np.ndarray]:
    """Effective subgroup at confidence xi; failing that, the points whose
    posterior mean effect reaches lrv; failing that, None."""
    region = extract_effective_subgroup(effects, lrv, xi)
    if region.any():
        return region
    region = effects.mean() >= lrv
    return region if region.any() else None


def analyze(dataset: TrialDataset, grid: EffectGrid, config: TrialConfig, rng, stage: str,
            region=None) -> Analysis:
    chain = replace(config.chain, seed=int(rng.integers(2**32)))
    draws = run_chain(dataset, config.prior(len(dataset.panel)), config.likelihood, chain)
    effects = effect_samples(draws, grid)
    tpp = config.tpp
    full = np.ones(grid.size, dtype=bool)
    all_rep = report_region(effects, full, tpp.lrv, tpp.tv)
    if region is not None:
        return Analysis(stage, len(dataset), "enriched", all_rep, None,
                        report_region(effects, region, tpp.lrv, tpp.tv))
    cand = candidate_region(effects, tpp.lrv, config.candidate_xi)
    cand_rep = None if cand is None else report_region(effects, cand, tpp.lrv, tpp.tv)
    return Analysis(stage, len(dataset), "all", all_rep, cand_rep)


@dataclass(frozen=True, eq=False)
class TrialResult:
    first: Action
    second: Optional[Action]
    final: FinalRec
    region: Optional[np.ndarray]
    analyses: tuple
    enrolled: tuple  # patients per phase
    eligible_ok: bool = True  # every post-enrichment patient lies in the region

    @property
    def n_enrolled(self) -> int:
        return sum(self.enrolled)


def _first_look(scenario, config, grid, rng):
    records = enroll(scenario, config.n1, rng)
    ds = TrialDataset(scenario.panel(), config.arms, "continuous", records)
    a1 = analyze(ds, grid, config, rng, "interim1")
    return ds, a1


def simulate_trial(scenario: ScenarioSpec, config: TrialConfig, rng) -> TrialResult:
    tpp = config.tpp
    grid = build_grid(scenario.panel(), config.resolution)
    ds, a1 = _first_look(scenario, config, grid, rng)
    z_all, cand, _ = a1.zones(tpp)
    d1 = interim_decision(z_all, cand)
    analyses = [replace(a1, decision=d1.action.value)]
    enrolled = [config.n1]
    second = None
    region = d1.region
    eligible_ok = True

    def member(X):
        return region[grid.locate_many(X)]

    def add(n, enriched):
        nonlocal ds, eligible_ok
        recs = enroll(scenario, n, rng, member if enriched else None, start_id=len(ds))
        if enriched and recs:
            eligible_ok &= bool(member(np.array([r.x for r in recs])).all())
        ds = ds.extend(recs)
        enrolled.append(n)

    def finish(enriched):
        add(config.N - len(ds), enriched)
        a = analyze(ds, grid, config, rng, "final", region if enriched else None)
        z_all, cand, z_reg = a.zones(tpp)
        if enriched:
            rec = final_recommendation(False, z_reg, region)
        else:
            rec = final_recommendation(False, z_all, candidate=cand)
        analyses.append(replace(a, decision=f"a={rec.a}"))
        return rec

    action = d1.action
    if action is Action.STOP_FUTILITY:
        final = final_recommendation(True)
    elif action is Action.CONTINUE_ALL:
        final = finish(False)
    elif action is Action.ENRICH_GO:
        final = finish(True)
    else:
        enriched = action is Action.SECOND_INTERIM_ENRICHED
        add(config.n2, enriched)
        a2 = analyze(ds, grid, config, rng, "interim2", region if enriched else None)
        z_all, cand, z_reg = a2.zones(tpp)
        if enriched:
            d2 = second_interim_decision(z_reg, region=region)
        else:
            d2 = second_interim_decision(z_all, candidate=cand)
        second = d2.action
        analyses.append(replace(a2, decision=d2.action.value))
        if d2.action is Action.STOP_FUTILITY:
            final = final_recommendation(True)
        elif d2.action is Action.ENRICH_GO:
            region = d2.region
            final = finish(True)
        else:
            final = finish(False)
    return TrialResult(action, second, final, region, tuple(analyses), tuple(enrolled), eligible_ok)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Stream for replicate ``index``; depends only on (seed, index)."""
    return np.random.default_rng([seed, index])


def map_replicates(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


INTERIM_ORDER = (Action.CONTINUE_ALL, Action.ENRICH_GO, Action.STOP_FUTILITY,
                 Action.SECOND_INTERIM_ALL, Action.SECOND_INTERIM_ENRICHED)


@dataclass(frozen=True)
class OperatingCharacteristics:
    replicates: int
    interim_counts: Dict[Action, int]
    final_counts: Dict[int, int]

    def interim(self, action: Action) -> Fraction:
        return Fraction(self.interim_counts.get(action, 0), self.replicates)

    def final(self, a: int) -> Fraction:
        return Fraction(self.final_counts.get(a, 0), self.replicates)

    def row(self) -> dict:
        out = {f"Pr({act.value})": self.interim(act) for act in INTERIM_ORDER}
        out.update({f"Pr(a={a})": self.final(a) for a in (2, 1, 0)})
        return out


def summarize(results: Sequence[TrialResult]) -> OperatingCharacteristics:
    interim = {act: 0 for act in INTERIM_ORDER}
    final = {2: 0, 1: 0, 0: 0}
    for r in results:
        interim[r.first] += 1
        final[r.final.a] += 1
    return OperatingCharacteristics(len(results), interim, final)


def run_trials(scenario, config, replicates: int, threads: int = 1) -> List[TrialResult]:
    if replicates < 1:
        raise ValueError("need at least one replicate")
    return map_replicates(lambda h: simulate_trial(scenario, config, replicate_rng(config.seed, h)),
                range(replicates), threads)


def run_operating_characteristics(scenario, config, replicates: int = 100, threads: int = 1):
    results = run_trials(scenario, config, replicates, threads)
    return summarize(results), results


# -------------------------------------------------------- first interim only

def first_interim(scenario, config, rng) -> Analysis:
    """The first look of :func:`simulate_trial` (same random stream)."""
    grid = build_grid(scenario.panel(), config.resolution)
    return _first_look(scenario, config, grid, rng)[1]


def first_interims(scenario, config, replicates: int, threads: int = 1) -> List[Analysis]:
    return map_replicates(lambda h: first_interim(scenario, config, replicate_rng(config.seed, h)),
                range(replicates), threads)


def first_action(analysis: Analysis, tpp: Tpp) -> Action:
    z_all, cand, _ = analysis.zones(tpp)
    return interim_decision(z_all, cand).action


def decision_frequencies(analyses: Sequence[Analysis], tpp: Tpp) -> Dict[Action, Fraction]:
    counts = {act: 0 for act in INTERIM_ORDER}
    for a in analyses:
        counts[first_action(a, tpp)] += 1
    return {act: Fraction(c, len(analyses)) for act, c in counts.items()}


@dataclass(frozen=True)
class RiskCaps:
    fsr: float = 0.05
    fgr: float = 0.10
    fer: float = 0.15


def risk_rates(suite: Dict[str, tuple], tpp: Tpp) -> dict:
    """Worst-case first-interim risks over the suite.

    ``suite`` maps a scenario name to (truth, analyses) with truth one of
    'null', 'subgroup', 'all-comers'.  FSR: early stop when an effect
    exists; FGR: anything but a stop under the null; FER: enrichment when
    all-comers are effective.  A risk with no applicable scenario is None.
    """
    fsr, fgr, fer = [], [], []
    for truth, analyses in suite.values():
        freq = decision_frequencies(analyses, tpp)
        stop = freq[Action.STOP_FUTILITY]
        if truth in ("subgroup", "all-comers"):
            fsr.append(stop)
        if truth == "null":
            fgr.append(1 - stop)
        if truth == "all-comers":
            fer.append(freq[Action.ENRICH_GO] + freq[Action.SECOND_INTERIM_ENRICHED])
    worst = lambda v: max(v) if v else None
    return {"fsr": worst(fsr), "fgr": worst(fgr), "fer": worst(fer)}


@dataclass(frozen=True)
class CalibrationRow:
    xi1: float
    xi2: float
    fsr: Optional[Fraction]
    fgr: Optional[Fraction]
    fer: Optional[Fraction]
    admissible: bool


def calibrate_from_analyses(suite: Dict[str, tuple], lrv: float, tv: float, xi1_values, xi2_values,
                            caps: RiskCaps) -> List[CalibrationRow]:
    rows = []
    for xi1 in xi1_values:
        for xi2 in xi2_values:
            rates = risk_rates(suite, Tpp(lrv, tv, xi1, xi2))
            ok = all(rates[k] is None or rates[k] <= getattr(caps, k) for k in ("fsr", "fgr", "fer"))
            rows.append(CalibrationRow(xi1, xi2, rates["fsr"], rates["fgr"], rates["fer"], ok))
    return rows


def calibrate_thresholds(scenarios: Sequence[ScenarioSpec], config: TrialConfig, xi1_values, xi2_values,
                         caps: RiskCaps = RiskCaps(), replicates: int = 100, threads: int = 1):
    """Risks of every (xi1, xi2) pair over the scenario suite and whether
    each pair meets all the caps.  Only the first interim is simulated; the
    candidate subgroup does not depend on (xi1, xi2), so each replicate's
    posterior summaries are reclassified for every pair."""
    tpp = config.tpp
    suite = {s.name: (s.truth(tpp.lrv), first_interims(s, config, replicates, threads)) for s in scenarios}
    truths = {t for t, _ in suite.values()}
    if not {"null", "subgroup", "all-comers"} <= truths:
        raise ValueError(f"suite needs null, subgroup and all-comers truths, got {sorted(truths)}")
    return calibrate_from_analyses(suite, tpp.lrv, tpp.tv, xi1_values, xi2_values, caps)


def sensitivity_n1(scenario, config: TrialConfig, n1_values, replicates: int = 100, threads: int = 1):
    """First-interim decision frequencies for each first-look sample size."""
    rows = []
    for n1 in n1_values:
        if not n1 < config.N:
            raise ValueError(f"n1={n1} must be below N={config.N}")
        cfg = replace(config, n1=n1, n2=min(config.n2, config.N - n1 - 1))
        analyses = first_interims(scenario, cfg, replicates, threads)
        rows.append((n1, decision_frequencies(analyses, config.tpp)))
    return rows

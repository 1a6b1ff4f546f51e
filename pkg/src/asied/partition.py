"""Random partitions of the biomarker space.

A partition is built by at most two rounds of axis-aligned splits, so it has
between one and four leaves.  Each round, every current leaf either stops
(probability nu_0) or splits on biomarker k (probability nu_k), with the
choice restricted to biomarkers that can still split the leaf without
leaving an empty child, and the probabilities renormalised over them.

Split payloads by biomarker type:

* binary -- none; value 0 goes left
* continuous -- threshold uniform on the observed data range; x <= c goes left
* ordinal -- cutoff c in 1..V-1; levels <= c go left
* categorical -- nonempty proper subset of categories, stored in canonical
  form (the half holding the smallest category); members go left

A second split on the same biomarker inside a child draws its payload
uniformly from the payloads that keep both grandchildren nonempty, and the
prior density below is that of this generating process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import _kernels as kern
from .domain import BINARY, CATEGORICAL, CONTINUOUS, ORDINAL, BiomarkerPanel, TrialDataset


@dataclass(frozen=True)
class SplitRule:
    """Split on biomarker ``k`` (0-based).

    ``payload`` is a float threshold (continuous), an int cutoff (ordinal),
    a frozenset of 1-based categories sent left (categorical) or None (binary).
    """

    k: int
    payload: object = None

    def __post_init__(self):
        if isinstance(self.payload, (set, list, tuple)):
            object.__setattr__(self, "payload", frozenset(self.payload))

    def text(self) -> str:
        p = self.payload
        if p is None:
            s = "-"
        elif isinstance(p, frozenset):
            s = "{" + ",".join(str(c) for c in sorted(p)) + "}"
        elif isinstance(p, float):
            s = repr(round(p, 6))
        else:
            s = str(p)
        return f"split({self.k + 1}, {s})"


@dataclass(frozen=True)
class PartitionPriorParams:
    nu: tuple  # (nu_0, nu_1, ..., nu_K)

    def __post_init__(self):
        nu = tuple(float(v) for v in self.nu)
        object.__setattr__(self, "nu", nu)
        if any(v < 0 for v in nu) or abs(sum(nu) - 1.0) > 1e-9:
            raise ValueError(f"selection probabilities must be nonnegative and sum to 1: {nu}")

    @classmethod
    def uniform(cls, n_biomarkers: int):
        return cls(tuple([1.0 / (n_biomarkers + 1)] * (n_biomarkers + 1)))

    def array(self) -> np.ndarray:
        return np.asarray(self.nu, dtype=float)


@dataclass(frozen=True)
class PartitionTree:
    """At most two rounds of splits.

    ``root`` splits the whole space; ``left``/``right`` split the root's
    children.  Leaves are numbered left to right from 0.
    """

    root: Optional[SplitRule] = None
    left: Optional[SplitRule] = None
    right: Optional[SplitRule] = None

    def __post_init__(self):
        if self.root is None and (self.left is not None or self.right is not None):
            raise ValueError("child splits need a root split")

    @property
    def n_leaves(self) -> int:
        if self.root is None:
            return 1
        return (2 if self.left else 1) + (2 if self.right else 1)

    def rules(self):
        return [r for r in (self.root, self.left, self.right) if r is not None]

    def text(self) -> str:
        counter = iter(range(1, 5))

        def sub(rule):
            if rule is None:
                return f"leaf({next(counter)})"
            return f"{rule.text()}[leaf({next(counter)}), leaf({next(counter)})]"

        if self.root is None:
            return "leaf(1)"
        head = self.root.text()
        left = sub(self.left)
        right = sub(self.right)
        return f"{head}[{left}, {right}]"

    __str__ = text

    # -- array form used by the kernels
    def encode(self, panel: BiomarkerPanel):
        var = np.full(3, -1, dtype=np.int64)
        thr = np.zeros(3)
        mask = np.zeros(3, dtype=np.int64)
        for j, rule in enumerate((self.root, self.left, self.right)):
            if rule is None:
                continue
            var[j] = rule.k
            code = panel[rule.k].kind.code
            if code == BINARY:
                thr[j] = 0.5
            elif code == CATEGORICAL:
                mask[j] = sum(1 << (c - 1) for c in rule.payload)
            else:
                thr[j] = float(rule.payload)
        return var, thr, mask

    @classmethod
    def decode(cls, var, thr, mask, panel: BiomarkerPanel) -> "PartitionTree":
        rules = []
        for j in range(3):
            k = int(var[j])
            if k < 0:
                rules.append(None)
                continue
            code = panel[k].kind.code
            if code == BINARY:
                payload = None
            elif code == CATEGORICAL:
                m = int(mask[j])
                payload = frozenset(c + 1 for c in range(panel[k].kind.levels) if (m >> c) & 1)
            elif code == ORDINAL:
                payload = int(thr[j])
            else:
                payload = float(thr[j])
            rules.append(SplitRule(k, payload))
        return cls(*rules)


def threshold_range(panel: BiomarkerPanel, dataset: Optional[TrialDataset]):
    """(lo, hi) arrays for continuous thresholds: the observed data range."""
    K = len(panel)
    lo, hi = np.zeros(K), np.zeros(K)
    if dataset is not None and len(dataset):
        lo, hi = dataset.observed_range()
        lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
    for k, b in enumerate(panel):
        if b.kind.code != CONTINUOUS:
            lo[k], hi[k] = 0.0, 0.0
    return lo, hi


def _kernel_args(panel, params, dataset):
    lo, hi = threshold_range(panel, dataset)
    return panel.codes(), panel.levels(), lo, hi, params.array()


def sample_prior(panel: BiomarkerPanel, params: PartitionPriorParams, dataset: TrialDataset,
                 rng: np.random.Generator) -> PartitionTree:
    if not len(dataset):
        raise ValueError("the threshold prior needs a nonempty dataset")
    if len(params.nu) != len(panel) + 1:
        raise ValueError("need one selection probability per biomarker plus nu_0")
    kern.seed(int(rng.integers(2**32)))
    var, thr, mask = kern.sample_prior(*_kernel_args(panel, params, dataset))
    return PartitionTree.decode(var, thr, mask, panel)


def prior_log_density(tree: PartitionTree, panel: BiomarkerPanel, params: PartitionPriorParams,
                      dataset: TrialDataset) -> float:
    var, thr, mask = tree.encode(panel)
    return float(kern.log_prior(var, thr, mask, *_kernel_args(panel, params, dataset)))


def _goes_left(rule: SplitRule, code: int, x) -> bool:
    v = x[rule.k]
    if code == BINARY:
        return v == 0
    if code == CATEGORICAL:
        return int(v) in rule.payload
    return v <= rule.payload


def assign(tree: PartitionTree, x, panel: BiomarkerPanel) -> int:
    """0-based leaf index of biomarker vector ``x``."""
    if tree.root is None:
        return 0
    code = lambda r: panel[r.k].kind.code
    n_left = 2 if tree.left else 1
    if _goes_left(tree.root, code(tree.root), x):
        if tree.left is None:
            return 0
        return 0 if _goes_left(tree.left, code(tree.left), x) else 1
    if tree.right is None:
        return n_left
    return n_left if _goes_left(tree.right, code(tree.right), x) else n_left + 1


def assign_many(tree: PartitionTree, X, panel: BiomarkerPanel) -> np.ndarray:
    var, thr, mask = tree.encode(panel)
    return kern.assign_all(var, thr, mask, panel.codes(), np.ascontiguousarray(X, dtype=float))


def leaf_regions(tree: PartitionTree, panel: BiomarkerPanel) -> List[Callable]:
    """One predicate per leaf; each is the conjunction of the path's conditions."""

    def cond(rule, left):
        code = panel[rule.k].kind.code
        return lambda x: _goes_left(rule, code, x) == left

    paths = []
    if tree.root is None:
        paths.append([])
    else:
        for side, child in ((True, tree.left), (False, tree.right)):
            first = cond(tree.root, side)
            if child is None:
                paths.append([first])
            else:
                paths.append([first, cond(child, True)])
                paths.append([first, cond(child, False)])

    def make(conds):
        return lambda x: all(c(x) for c in conds)

    return [make(p) for p in paths]

"""Biomarkers, patients and trial datasets.

Arms are numbered from 1, with arm 1 the control and arm 2 the
investigational drug; treatment effects are always arm 2 minus arm 1.
Ordinal and categorical biomarkers are coded 1..V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

# integer codes shared with the compiled kernels
CONTINUOUS, BINARY, ORDINAL, CATEGORICAL = 0, 1, 2, 3


@dataclass(frozen=True)
class Continuous:
    low: float
    high: float

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high)) or self.low >= self.high:
            raise ValueError(f"continuous range needs low < high, got [{self.low}, {self.high}]")

    code = CONTINUOUS
    levels = 0


@dataclass(frozen=True)
class Binary:
    code = BINARY
    levels = 2


@dataclass(frozen=True)
class Ordinal:
    levels: int

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("ordinal biomarker needs at least 2 levels")

    code = ORDINAL


@dataclass(frozen=True)
class Categorical:
    levels: int

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("categorical biomarker needs at least 2 categories")
        if self.levels > 30:
            raise ValueError("categorical biomarkers are limited to 30 categories")

    code = CATEGORICAL


BiomarkerKind = Union[Continuous, Binary, Ordinal, Categorical]


@dataclass(frozen=True)
class Biomarker:
    name: str
    kind: BiomarkerKind
    # label -> code, for ordinal/categorical columns read from text
    labels: Optional[tuple] = None

    def accepts(self, value) -> bool:
        kind = self.kind
        try:
            v = float(value)
        except (TypeError, ValueError):
            return False
        if not math.isfinite(v):
            return False
        if isinstance(kind, Continuous):
            return True
        if isinstance(kind, Binary):
            return v in (0.0, 1.0)
        return v == int(v) and 1 <= v <= kind.levels


@dataclass(frozen=True)
class BiomarkerPanel:
    biomarkers: tuple

    def __post_init__(self):
        object.__setattr__(self, "biomarkers", tuple(self.biomarkers))
        if not self.biomarkers:
            raise ValueError("a panel needs at least one biomarker")
        names = [b.name for b in self.biomarkers]
        if len(set(names)) != len(names):
            raise ValueError(f"biomarker names must be unique: {names}")

    @classmethod
    def of(cls, kinds: Sequence[BiomarkerKind], names: Optional[Sequence[str]] = None):
        names = names or [f"x{k + 1}" for k in range(len(kinds))]
        return cls(tuple(Biomarker(n, k) for n, k in zip(names, kinds)))

    def __len__(self):
        return len(self.biomarkers)

    def __iter__(self):
        return iter(self.biomarkers)

    def __getitem__(self, k) -> Biomarker:
        return self.biomarkers[k]

    @property
    def kinds(self):
        return tuple(b.kind for b in self.biomarkers)

    @property
    def names(self):
        return tuple(b.name for b in self.biomarkers)

    def codes(self) -> np.ndarray:
        return np.array([b.kind.code for b in self.biomarkers], dtype=np.int64)

    def levels(self) -> np.ndarray:
        return np.array([b.kind.levels for b in self.biomarkers], dtype=np.int64)


@dataclass(frozen=True)
class PatientRecord:
    id: int
    x: tuple
    z: int
    y: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))


@dataclass(frozen=True)
class TrialDataset:
    panel: BiomarkerPanel
    arms: int
    outcome: str  # "binary" | "continuous"
    records: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.outcome not in ("binary", "continuous"):
            raise ValueError(f"unknown outcome kind {self.outcome!r}")
        if self.arms < 1:
            raise ValueError("need at least one arm")

    @classmethod
    def from_arrays(cls, panel, X, z, y, arms=2, outcome="continuous", start_id=0):
        X = np.asarray(X, dtype=float)
        recs = tuple(
            PatientRecord(start_id + i, tuple(X[i].tolist()), int(z[i]), None if y is None else float(y[i]))
            for i in range(X.shape[0])
        )
        return cls(panel, arms, outcome, recs)

    def __len__(self):
        return len(self.records)

    def extend(self, records) -> "TrialDataset":
        return TrialDataset(self.panel, self.arms, self.outcome, self.records + tuple(records))

    @cached_property
    def X(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, len(self.panel)))
        return np.array([r.x for r in self.records], dtype=float)

    @cached_property
    def z(self) -> np.ndarray:
        return np.array([r.z for r in self.records], dtype=np.int64)

    @cached_property
    def y(self) -> np.ndarray:
        return np.array([np.nan if r.y is None else r.y for r in self.records], dtype=float)

    def observed_range(self):
        """Per-biomarker (min, max) over the records; (0, 0) when empty."""
        if not self.records:
            K = len(self.panel)
            return np.zeros(K), np.zeros(K)
        return self.X.min(axis=0), self.X.max(axis=0)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()
    warnings: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_dataset(dataset: TrialDataset) -> ValidationReport:
    violations, warnings = [], []
    panel = dataset.panel
    if not dataset.records:
        warnings.append("no records")
    for r in dataset.records:
        if len(r.x) != len(panel):
            violations.append(f"record {r.id}: expected {len(panel)} biomarkers, got {len(r.x)}")
            continue
        for b, v in zip(panel, r.x):
            if not b.accepts(v):
                violations.append(f"record {r.id}: value {v!r} out of range for {b.name}")
        if not (isinstance(r.z, (int, np.integer)) and 1 <= r.z <= dataset.arms):
            violations.append(f"record {r.id}: arm index out of range ({r.z} not in 1..{dataset.arms})")
        if r.y is not None:
            if not math.isfinite(r.y):
                violations.append(f"record {r.id}: non-finite outcome")
            elif dataset.outcome == "binary" and r.y not in (0, 1):
                violations.append(f"record {r.id}: binary outcome must be 0 or 1, got {r.y}")
    return ValidationReport(tuple(violations), tuple(warnings))

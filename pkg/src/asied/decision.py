"""Go / Stop / Gray rules against a two-level target product profile and the
interim and final decisions built on them."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Tpp:
    lrv: float = 2.37
    tv: float = 3.08
    xi1: float = 0.8
    xi2: float = 0.1

    def __post_init__(self):
        if not self.tv > self.lrv:
            raise ValueError("TV must exceed LRV")
        if not (0 < self.xi1 < 1 and 0 < self.xi2 < 1):
            raise ValueError("xi1 and xi2 must lie in (0, 1)")


class Zone(enum.Enum):
    GO = "Go"
    STOP = "Stop"
    GRAY = "Gray"


class Action(enum.Enum):
    CONTINUE_ALL = "All"
    ENRICH_GO = "Sub"
    STOP_FUTILITY = "EarS"
    SECOND_INTERIM_ALL = "2All"
    SECOND_INTERIM_ENRICHED = "2Sub"


@dataclass(frozen=True, eq=False)
class InterimDecision:
    action: Action
    region: Optional[np.ndarray] = None

    def __post_init__(self):
        enriching = self.action in (Action.ENRICH_GO, Action.SECOND_INTERIM_ENRICHED)
        if enriching and (self.region is None or not np.asarray(self.region).any()):
            raise ValueError(f"{self.action.name} needs a nonempty region")

    def __eq__(self, other):
        if not isinstance(other, InterimDecision) or self.action != other.action:
            return False
        if self.region is None or other.region is None:
            return self.region is None and other.region is None
        return np.array_equal(self.region, other.region)


@dataclass(frozen=True, eq=False)
class FinalRec:
    a: int
    region: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.a not in (0, 1, 2):
            raise ValueError("a must be 0, 1 or 2")
        if self.a == 1 and (self.region is None or not np.asarray(self.region).any()):
            raise ValueError("a subgroup recommendation needs a nonempty region")


def classify_zone(pr_lrv: float, pr_tv: float, tpp: Tpp) -> Zone:
    if pr_lrv >= tpp.xi1:
        return Zone.GO
    if pr_tv < tpp.xi2:
        return Zone.STOP
    return Zone.GRAY


def interim_decision(zone_all: Zone, candidate=None) -> InterimDecision:
    """``candidate`` is None or a (region, zone) pair for the best subgroup."""
    if zone_all is Zone.GO:
        return InterimDecision(Action.CONTINUE_ALL)
    if zone_all is Zone.GRAY:
        return InterimDecision(Action.SECOND_INTERIM_ALL)
    if candidate is None:
        return InterimDecision(Action.STOP_FUTILITY)
    region, zone_sub = candidate
    if zone_sub is Zone.GO:
        return InterimDecision(Action.ENRICH_GO, region)
    if zone_sub is Zone.GRAY:
        return InterimDecision(Action.SECOND_INTERIM_ENRICHED, region)
    return InterimDecision(Action.STOP_FUTILITY)


def second_interim_decision(zone: Zone, region=None, candidate=None) -> InterimDecision:
    """Decision at the second interim.

    Enriched trial (``region`` given): Stop ends the trial, anything else
    continues the enriched trial to N.  All-comers trial: Go continues,
    Stop with a Go subgroup enriches, Gray continues with all-comers and
    any other Stop ends the trial.
    """
    if region is not None:
        if zone is Zone.STOP:
            return InterimDecision(Action.STOP_FUTILITY)
        return InterimDecision(Action.ENRICH_GO, region)
    if zone in (Zone.GO, Zone.GRAY):
        return InterimDecision(Action.CONTINUE_ALL)
    if candidate is not None and candidate[1] is Zone.GO:
        return InterimDecision(Action.ENRICH_GO, candidate[0])
    return InterimDecision(Action.STOP_FUTILITY)


def final_recommendation(stopped_early: bool, zone: Optional[Zone] = None, region=None,
                         candidate=None) -> FinalRec:
    """a = 2 for a Go on all-comers, a = 1 for a Go on a subgroup, else 0.

    ``zone`` is the final-analysis zone of the enriched region when
    ``region`` is given, otherwise of all-comers; ``candidate`` is the
    (region, zone) subgroup found at the end of an all-comers trial.
    """
    if stopped_early:
        return FinalRec(0)
    if region is not None:
        return FinalRec(1, region) if zone is Zone.GO else FinalRec(0)
    if zone is Zone.GO:
        return FinalRec(2)
    if zone is Zone.STOP and candidate is not None and candidate[1] is Zone.GO:
        return FinalRec(1, candidate[0])
    return FinalRec(0)

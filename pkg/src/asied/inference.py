"""Grid summaries of posterior treatment effects.

Subgroups are reported as sets of points on a product grid over the
biomarker space, stored as boolean masks over the grid in C order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels as kern
from .domain import BINARY, CONTINUOUS, BiomarkerPanel


@dataclass(frozen=True)
class EffectGrid:
    panel: BiomarkerPanel
    axes: tuple  # one 1-D array of grid values per biomarker

    @property
    def dims(self):
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self):
        return self.size

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def _padded_axes(self):
        width = max(self.dims)
        out = np.zeros((len(self.axes), width))
        for k, a in enumerate(self.axes):
            out[k, : len(a)] = a
        return out

    def leaf_map(self, var, thr, mask) -> np.ndarray:
        return kern.grid_leaf_map(var, thr, mask, self.panel.codes(), self._padded_axes,
                                  np.asarray(self.dims, dtype=np.int64))

    def locate(self, x) -> int:
        """Index of the grid point nearest to ``x`` (per axis; ties go to the
        smaller coordinate)."""
        idx = []
        for a, v in zip(self.axes, x):
            j = int(np.argmin(np.abs(a - v)))  # argmin picks the first (smaller) on ties
            idx.append(j)
        return int(np.ravel_multi_index(idx, self.dims))

    def locate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        idx = [np.argmin(np.abs(X[:, [k]] - a[None, :]), axis=1) for k, a in enumerate(self.axes)]
        return np.ravel_multi_index(idx, self.dims)


def build_grid(panel: BiomarkerPanel, resolution: Union[int, Sequence[int]] = 20,
               ranges: Optional[Sequence] = None) -> EffectGrid:
    """Equally spaced points (endpoints included) for continuous biomarkers,
    {0, 1} for binary ones and every level for ordinal/categorical ones.

    ``ranges`` overrides the continuous spans (default: the panel's ranges).
    """
    K = len(panel)
    res = [resolution] * K if np.isscalar(resolution) else list(resolution)
    if len(res) != K:
        raise ValueError("need one resolution per biomarker")
    axes = []
    for k, b in enumerate(panel):
        code = b.kind.code
        if code == CONTINUOUS:
            if res[k] < 2:
                raise ValueError(f"grid resolution for {b.name} must be >= 2")
            lo, hi = (b.kind.low, b.kind.high) if ranges is None or ranges[k] is None else ranges[k]
            axes.append(np.linspace(lo, hi, int(res[k])))
        elif code == BINARY:
            axes.append(np.array([0.0, 1.0]))
        else:
            axes.append(np.arange(1, b.kind.levels + 1, dtype=float))
    return EffectGrid(panel, tuple(axes))


class EffectSamples:
    """Per-sample, per-grid-point effects from piecewise-constant trees.

    The (B, grid) matrix is never formed unless asked for: samples whose
    trees route the grid identically share one cached leaf map.
    """

    def __init__(self, grid: EffectGrid, var, thr, mask, diffs):
        self.grid = grid
        self.diffs = np.asarray(diffs, dtype=float)
        keys = self._grid_keys(var, thr, mask)
        uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        self._inverse = inverse.ravel()
        self._reps = [(var[i], thr[i], mask[i]) for i in first]
        self._maps = {}
        order = np.argsort(self._inverse, kind="stable")
        bounds = np.searchsorted(self._inverse[order], np.arange(len(self._reps) + 1))
        self._groups = [order[bounds[u]:bounds[u + 1]] for u in range(len(self._reps))]

    def _grid_keys(self, var, thr, mask):
        codes = self.grid.panel.codes()
        binned = np.zeros(thr.shape, dtype=np.int64)
        for j in range(3):
            for k in np.unique(var[:, j]):
                if k < 0:
                    continue
                rows = var[:, j] == k
                if codes[k] == CONTINUOUS:
                    binned[rows, j] = np.searchsorted(self.grid.axes[k], thr[rows, j], side="right")
                else:
                    binned[rows, j] = np.round(thr[rows, j] * 2).astype(np.int64)
        return np.concatenate([var, binned, mask], axis=1)

    @property
    def n_samples(self) -> int:
        return self.diffs.shape[0]

    @property
    def n_routings(self) -> int:
        return len(self._reps)

    def leaf_map(self, u) -> np.ndarray:
        if u not in self._maps:
            self._maps[u] = self.grid.leaf_map(*self._reps[u])
        return self._maps[u]

    def dense(self) -> np.ndarray:
        out = np.empty((self.n_samples, self.grid.size))
        for u, rows in enumerate(self._groups):
            out[rows] = self.diffs[rows][:, self.leaf_map(u)]
        return out

    def exceedance_counts(self, threshold: float) -> np.ndarray:
        counts = np.zeros(self.grid.size, dtype=np.int64)
        for u, rows in enumerate(self._groups):
            c = (self.diffs[rows] >= threshold).sum(axis=0)
            counts += c[self.leaf_map(u)]
        return counts

    def mean(self) -> np.ndarray:
        s = np.zeros(self.grid.size)
        for u, rows in enumerate(self._groups):
            s += self.diffs[rows].sum(axis=0)[self.leaf_map(u)]
        return s / self.n_samples

    def region_effects(self, region: np.ndarray) -> np.ndarray:
        region = np.asarray(region, dtype=bool)
        n = region.sum()
        out = np.empty(self.n_samples)
        for u, rows in enumerate(self._groups):
            frac = np.bincount(self.leaf_map(u)[region], minlength=kern.MAX_LEAVES) / n
            out[rows] = self.diffs[rows] @ frac
        return out


class LinearEffectSamples:
    """Effects that are affine in the biomarkers: intercept + slopes @ x."""

    def __init__(self, grid: EffectGrid, intercept, slopes):
        self.grid = grid
        self.intercept = np.asarray(intercept, dtype=float)
        self.slopes = np.asarray(slopes, dtype=float)

    @property
    def n_samples(self) -> int:
        return self.intercept.shape[0]

    def dense(self) -> np.ndarray:
        return self.intercept[:, None] + self.slopes @ self.grid.points.T

    def exceedance_counts(self, threshold: float) -> np.ndarray:
        axes = self.grid.axes
        K = len(axes)
        counts = np.zeros(self.grid.dims, dtype=np.int64)
        for b in range(self.n_samples):
            total = np.full((1,) * K, self.intercept[b])
            for k, a in enumerate(axes):
                shape = [1] * K
                shape[k] = len(a)
                total = total + (self.slopes[b, k] * a).reshape(shape)
            counts += total >= threshold
        return counts.ravel()

    def mean(self) -> np.ndarray:
        return self.intercept.mean() + self.grid.points @ self.slopes.mean(axis=0)

    def region_effects(self, region) -> np.ndarray:
        centre = self.grid.points[np.asarray(region, dtype=bool)].mean(axis=0)
        return self.intercept + self.slopes @ centre


def effect_samples(draws, grid: EffectGrid) -> EffectSamples:
    if len(draws) == 0:
        raise ValueError("no posterior draws")
    return EffectSamples(grid, draws.var, draws.thr, draws.mask, draws.effect_diffs())


def subgroup_effect_prob(effects, region, threshold: float) -> float:
    """Share of samples whose region-averaged effect is >= threshold."""
    region = np.asarray(region, dtype=bool)
    if not region.any():
        raise ValueError("empty region")
    return int((effects.region_effects(region) >= threshold).sum()) / effects.n_samples


def extract_effective_subgroup(effects, lrv: float, xi: float = 0.9) -> np.ndarray:
    """Grid points whose share of samples with effect >= lrv is strictly above xi."""
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    return effects.exceedance_counts(lrv) / effects.n_samples > xi


def aggregate_repeated(indicators, level: float = 0.9) -> np.ndarray:
    """Grid points inside the per-trial subgroup in more than ``level`` of trials."""
    ind = np.atleast_2d(np.asarray(indicators, dtype=bool))
    if ind.shape[0] < 1:
        raise ValueError("need at least one trial")
    return ind.sum(axis=0) / ind.shape[0] > level


def tpr_tnr(estimated, truth):
    """True positive and true negative rates over grid points.

    ``estimated`` is one mask or a stack of per-trial masks (rates are then
    averaged over trials).  A rate whose reference set is empty is None.
    """
    est = np.atleast_2d(np.asarray(estimated, dtype=bool))
    truth = np.asarray(truth, dtype=bool)
    n_pos, n_neg = int(truth.sum()), int((~truth).sum())
    tpr = est[:, truth].sum() / (n_pos * est.shape[0]) if n_pos else None
    tnr = (~est[:, ~truth]).sum() / (n_neg * est.shape[0]) if n_neg else None
    return tpr, tnr


@dataclass(frozen=True)
class SubgroupReport:
    region: np.ndarray
    pr_lrv: Optional[float]
    pr_tv: Optional[float]
    mean_effect: Optional[float]

    @property
    def size(self) -> int:
        return int(np.asarray(self.region).sum())


def report_region(effects, region, lrv: float, tv: float) -> SubgroupReport:
    """Probabilities for a region; all None when the region is empty."""
    region = np.asarray(region, dtype=bool)
    if not region.any():
        return SubgroupReport(region, None, None, None)
    eff = effects.region_effects(region)
    return SubgroupReport(region, int((eff >= lrv).sum()) / len(eff), int((eff >= tv).sum()) / len(eff),
                          float(eff.mean()))


def region_text(grid: EffectGrid, report: SubgroupReport, decimals: int = 4) -> str:
    """Header lines with the region's probabilities, then one grid point per row."""
    lines = [f"# points\t{report.size}"]
    for key in ("pr_lrv", "pr_tv", "mean_effect"):
        v = getattr(report, key)
        lines.append(f"# {key}\t" + ("NA" if v is None else f"{v:.{decimals}f}"))
    lines.append("\t".join(grid.panel.names))
    for p in grid.points[np.asarray(report.region, dtype=bool)]:
        lines.append("\t".join(f"{v:.{decimals}f}" for v in p))
    return "\n".join(lines) + "\n"


def write_region(path, grid: EffectGrid, report: SubgroupReport, decimals: int = 4):
    with open(path, "w") as fh:
        fh.write(region_text(grid, report, decimals))


def read_region(path, grid: EffectGrid) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            rows.append(line.rstrip("\n").split("\t"))
    pts = np.array([[float(v) for v in r] for r in rows[1:]]) if len(rows) > 1 else np.zeros((0, len(grid.axes)))
    region = np.zeros(grid.size, dtype=bool)
    if len(pts):
        region[grid.locate_many(pts)] = True
    return region

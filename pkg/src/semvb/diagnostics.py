"""Density-approximation accuracy, KDE over draws, and coverage tabulation.

The accuracy of an approximating density q against a reference density p is

    accuracy = 100 * (1 - 0.5 * integral |q - p|) percent,

evaluated by the trapezoid rule on the union of both grids after both curves
are renormalized to unit mass there. 100 means perfect overlap, 0 disjoint
support. In practice p is a kernel density estimate over MCMC draws.
"""

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

__all__ = ["DensityGrid", "kde", "accuracy", "coverage_table", "CoverageTable"]


@dataclass(frozen=True)
class DensityGrid:
    """A density sampled on a strictly increasing grid.

    Construction requires trapezoid mass within [0.98, 1.02]: the grid must
    essentially cover the support. Comparisons renormalize to exactly 1.
    """

    x: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        f = np.asarray(self.f, dtype=np.float64)
        if x.ndim != 1 or x.shape != f.shape or x.size < 2:
            raise ValueError("x and f must be equal-length 1-D arrays (>= 2 points)")
        if not np.all(np.diff(x) > 0):
            raise ValueError("grid must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(f))):
            raise ValueError("grid and densities must be finite")
        if np.any(f < 0):
            raise ValueError("densities must be nonnegative")
        mass = float(np.trapezoid(f, x))
        if not 0.98 <= mass <= 1.02:
            raise ValueError(
                f"grid captures mass {mass:.4f}, outside [0.98, 1.02]; widen the grid"
            )
        x.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "f", f)

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.f, self.x))

    def normalized(self) -> "DensityGrid":
        return DensityGrid(x=self.x, f=self.f / self.mass)

    def to_csv(self, path) -> None:
        pd.DataFrame({"x": self.x, "f": self.f}).to_csv(path, index=False)


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5); falls back to sd if IQR is 0."""
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.size
    sd = samples.std()
    q75, q25 = np.percentile(samples, [75.0, 25.0])
    iqr = q75 - q25
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        raise ValueError("samples have zero spread; no bandwidth exists")
    return 0.9 * spread * n ** (-0.2)


def kde(samples, grid_size: int = 1024) -> DensityGrid:
    """Gaussian-kernel density estimate on a 3-bandwidth-padded grid."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < 10:
        raise ValueError(f"need at least 10 samples, got {samples.size}")
    h = silverman_bandwidth(samples)
    x = np.linspace(samples.min() - 3.0 * h, samples.max() + 3.0 * h, grid_size)
    f = np.zeros(grid_size)
    norm_const = 1.0 / (samples.size * h * np.sqrt(2.0 * np.pi))
    for start in range(0, samples.size, 4096):
        block = samples[start:start + 4096]
        z = (x[:, None] - block[None, :]) / h
        f += np.exp(-0.5 * z * z).sum(axis=1)
    return DensityGrid(x=x, f=f * norm_const)


def accuracy(q: DensityGrid, p: DensityGrid) -> float:
    """100 * (1 - 0.5 L1 distance) on the union grid; symmetric in (q, p)."""
    grid = np.union1d(q.x, p.x)
    qf = np.interp(grid, q.x, q.f, left=0.0, right=0.0)
    pf = np.interp(grid, p.x, p.f, left=0.0, right=0.0)
    qf = qf / np.trapezoid(qf, grid)
    pf = pf / np.trapezoid(pf, grid)
    l1 = float(np.trapezoid(np.abs(qf - pf), grid))
    # |q-p| <= q+p pointwise makes 2 the mathematical ceiling; trim rounding
    l1 = min(l1, 2.0)
    return 100.0 * (1.0 - 0.5 * l1)


@dataclass(frozen=True)
class CoverageTable:
    """Coverage proportions, methods as rows and parameters as columns."""

    proportions: pd.DataFrame
    runs: pd.DataFrame   # run counts entering each cell

    def binomial_sd(self) -> pd.DataFrame:
        c = self.proportions
        return np.sqrt(c * (1.0 - c) / self.runs)

    def to_csv(self, path) -> None:
        self.proportions.rename_axis("method").to_csv(path)

    def to_json(self, path) -> None:
        doc = {
            "coverage": {m: self.proportions.loc[m].to_dict() for m in self.proportions.index},
            "runs": {m: self.runs.loc[m].astype(int).to_dict() for m in self.runs.index},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)


def coverage_table(runs) -> CoverageTable:
    """Fraction of runs whose interval contains the generating truth.

    ``runs`` is a sequence of (interval reports, truth mapping) pairs; every
    run must report the same parameter set per method.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("need at least one run")
    hits = {}
    totals = {}
    reference = {}
    methods = []
    params = []
    for idx, (reports, truths) in enumerate(runs):
        seen = {}
        for r in reports:
            seen.setdefault(r.method, set()).add(r.parameter)
            if r.method not in methods:
                methods.append(r.method)
            if r.parameter not in params:
                params.append(r.parameter)
            if r.parameter not in truths:
                raise ValueError(f"run {idx}: no truth for parameter {r.parameter!r}")
            key = (r.method, r.parameter)
            hits[key] = hits.get(key, 0) + int(r.covers(truths[r.parameter]))
            totals[key] = totals.get(key, 0) + 1
        for method, pset in seen.items():
            if method in reference and reference[method] != pset:
                raise ValueError(
                    f"run {idx}: parameter set for method {method!r} differs "
                    "from earlier runs"
                )
            reference.setdefault(method, pset)
    prop = pd.DataFrame(index=methods, columns=params, dtype=float)
    cnt = pd.DataFrame(0, index=methods, columns=params, dtype=float)
    for (method, parameter), total in totals.items():
        prop.loc[method, parameter] = hits[(method, parameter)] / total
        cnt.loc[method, parameter] = total
    return CoverageTable(proportions=prop, runs=cnt)

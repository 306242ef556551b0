"""Simulation-study harness: replicate datasets, all methods, summary tables.

Each replicate simulates a dataset from fixed generating parameters, runs the
requested interval methods, and records intervals and per-method wall times.
Aggregation produces a coverage table (methods x parameters) and wall-time
quartiles. Replicate substreams derive from (seed, replicate), so the tables
are identical across runs and across any parallelism level.
"""

import json
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ._rng import substream
from .diagnostics import CoverageTable, accuracy, coverage_table, kde, DensityGrid
from .gibbs import ChainConfig, chain_summary, gibbs_multi, gibbs_single
from .mfvb import FitReport, fit, point_estimates, q_marginal
from .model import (
    Dataset,
    FactorSpec,
    Hyperparameters,
    TrueParameters,
    simulate,
    true_values,
)
from .resample import (
    BootstrapConfig,
    bootstrap_replicates,
    intervals_from_replicates,
    intervals_to_frame,
    jackknife_intervals,
    mfvb_intervals,
    quantile,
)

__all__ = ["StudyConfig", "StudyResult", "run_study", "density_figure_export"]

_METHODS = ("mfvb", "jackknife", "percentile", "pivotal", "mcmc")


class StudyError(RuntimeError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    """Replicate count, generating truth, methods and their knobs."""

    replicates: int
    true_params: TrueParameters
    spec: FactorSpec
    n: int
    methods: tuple = ("mfvb", "percentile")
    b_values: tuple = (100,)
    alpha: float = 0.05
    seed: int = 0
    hyper: Hyperparameters = None
    tol: float = 0.01
    max_iter: int = 10000
    mcmc_iterations: int = 5000
    mcmc_burn_in: int = 2500
    mcmc_chains: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        bad = [m for m in self.methods if m not in _METHODS]
        if bad:
            raise ValueError(f"unknown method(s) {bad}; choose from {_METHODS}")
        if ("percentile" in self.methods or "pivotal" in self.methods) and not self.b_values:
            raise ValueError("bootstrap methods requested but b_values is empty")
        self.true_params.validate_against(self.spec)
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "b_values", tuple(int(b) for b in self.b_values))

    @classmethod
    def from_dict(cls, doc: dict) -> "StudyConfig":
        doc = dict(doc)
        spec = FactorSpec.from_dict({"factors": doc.pop("factors")})
        tp = TrueParameters.from_dict(doc.pop("true_params"))
        hyper = doc.pop("hyper", None)
        mcmc = doc.pop("mcmc", {})
        return cls(
            spec=spec,
            true_params=tp,
            hyper=None if hyper is None else Hyperparameters.from_dict(hyper),
            mcmc_iterations=int(mcmc.get("iterations", 5000)),
            mcmc_burn_in=int(mcmc.get("burn_in", 2500)),
            mcmc_chains=int(mcmc.get("chains", 1)),
            **doc,
        )

    def to_dict(self) -> dict:
        return {
            "replicates": self.replicates,
            "n": self.n,
            "methods": list(self.methods),
            "b_values": list(self.b_values),
            "alpha": self.alpha,
            "seed": self.seed,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "factors": self.spec.to_dict()["factors"],
            "true_params": self.true_params.to_dict(),
            "hyper": None if self.hyper is None else self.hyper.to_dict(),
            "mcmc": {
                "iterations": self.mcmc_iterations,
                "burn_in": self.mcmc_burn_in,
                "chains": self.mcmc_chains,
            },
        }

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class StudyResult:
    coverage: CoverageTable
    timing: pd.DataFrame
    failures: tuple
    intervals: tuple      # one (reports, truths) pair per successful replicate
    out_dir: str = None


def _replicate(cfg: StudyConfig, r: int):
    """All methods on one simulated dataset; returns (reports, timings, fails)."""
    rng = substream(cfg.seed, "study-data", r)
    data = simulate(cfg.true_params, cfg.spec, cfg.n, rng)
    reports = []
    timings = {}
    fails = []

    base = None
    t0 = time.perf_counter()
    try:
        base = fit(data, cfg.hyper, tol=cfg.tol, max_iter=cfg.max_iter)
        timings["mfvb"] = time.perf_counter() - t0
        if not base.converged:
            raise StudyError(f"base fit did not converge after {base.iterations} sweeps")
    except Exception as err:  # noqa: BLE001 - per-replicate isolation
        fails.append((r, "mfvb", repr(err)))
        base = None

    if base is not None and "mfvb" in cfg.methods:
        reports.extend(mfvb_intervals(base, cfg.alpha))

    if base is not None and "jackknife" in cfg.methods:
        t0 = time.perf_counter()
        try:
            reports.extend(
                jackknife_intervals(
                    data, cfg.hyper, cfg.alpha, base=base,
                    tol=cfg.tol, max_iter=cfg.max_iter,
                )
            )
            timings["jackknife"] = time.perf_counter() - t0
        except Exception as err:  # noqa: BLE001
            fails.append((r, "jackknife", repr(err)))

    want_boot = [m for m in ("percentile", "pivotal") if m in cfg.methods]
    if base is not None and want_boot:
        for B in cfg.b_values:
            bcfg = BootstrapConfig(
                B=B,
                method=want_boot[0],
                alpha=cfg.alpha,
                seed=int(substream(cfg.seed, "study-boot-seed", r, B).integers(2**31)),
            )
            t0 = time.perf_counter()
            try:
                reps = bootstrap_replicates(
                    data, cfg.hyper, bcfg, base=base,
                    need_tau="pivotal" in want_boot,
                    tol=cfg.tol, max_iter=cfg.max_iter,
                )
                timings[f"bootstrap-{B}"] = time.perf_counter() - t0
                for method in want_boot:
                    tagged = [
                        _retag(ir, f"{method}-{B}")
                        for ir in intervals_from_replicates(reps, method, cfg.alpha)
                    ]
                    reports.extend(tagged)
            except Exception as err:  # noqa: BLE001
                for method in want_boot:
                    fails.append((r, f"{method}-{B}", repr(err)))

    if "mcmc" in cfg.methods:
        ccfg = ChainConfig(
            iterations=cfg.mcmc_iterations,
            burn_in=cfg.mcmc_burn_in,
            chains=cfg.mcmc_chains,
            seed=int(substream(cfg.seed, "study-mcmc-seed", r).integers(2**31)),
        )
        t0 = time.perf_counter()
        try:
            sampler = gibbs_single if cfg.spec.p == 1 else gibbs_multi
            draws = sampler(data, cfg.hyper, ccfg)
            reports.extend(chain_summary(draws, cfg.alpha))
            timings["mcmc"] = time.perf_counter() - t0
        except Exception as err:  # noqa: BLE001
            fails.append((r, "mcmc", repr(err)))

    return reports, timings, fails


def _retag(report, method):
    from dataclasses import replace

    return replace(report, method=method)


def run_study(
    cfg: StudyConfig,
    out_dir=None,
    threads: int = None,
    verbose: bool = True,
) -> StudyResult:
    """Run the full study; write tables and the interval archive if asked."""
    truths = true_values(cfg.true_params, cfg.spec)

    indices = list(range(1, cfg.replicates + 1))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _replicate(cfg, r), indices))
    else:
        results = [_replicate(cfg, r) for r in indices]

    failures = []
    pairs = []
    timing_rows = {}
    for r, (reports, timings, fails) in zip(indices, results):
        failures.extend(fails)
        if reports:
            pairs.append((reports, truths))
        for token, seconds in timings.items():
            timing_rows.setdefault(token, []).append(seconds)

    # a method failing in more than 5% of replicates voids the study
    fail_counts = {}
    for _, token, _ in failures:
        fail_counts[token] = fail_counts.get(token, 0) + 1
    for token, count in fail_counts.items():
        if count > 0.05 * cfg.replicates:
            raise StudyError(
                f"method {token!r} failed in {count}/{cfg.replicates} replicates"
            )

    cov = coverage_table(pairs)
    timing = pd.DataFrame(
        {
            "method": list(timing_rows),
            "replicates": [len(v) for v in timing_rows.values()],
            "q1_seconds": [quantile(v, 0.25) for v in timing_rows.values()],
            "median_seconds": [quantile(v, 0.5) for v in timing_rows.values()],
            "q3_seconds": [quantile(v, 0.75) for v in timing_rows.values()],
        }
    ).set_index("method")

    if verbose:
        sd = cov.binomial_sd()
        for method in cov.proportions.index:
            parts = []
            for param in cov.proportions.columns:
                c = cov.proportions.loc[method, param]
                if np.isnan(c):
                    continue
                parts.append(f"{param}={c:.3f}+-{sd.loc[method, param]:.3f}")
            print(f"[coverage] {method}: " + " ".join(parts))
        for token in timing.index:
            print(
                f"[timing] {token}: median {timing.loc[token, 'median_seconds']:.4f} s "
                f"(q1 {timing.loc[token, 'q1_seconds']:.4f}, "
                f"q3 {timing.loc[token, 'q3_seconds']:.4f})"
            )

    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        (out_path / "intervals").mkdir(parents=True, exist_ok=True)
        with open(out_path / "config.json", "w", encoding="utf-8") as fh:
            json.dump(cfg.to_dict(), fh, indent=1)
        cov.to_csv(out_path / "coverage.csv")
        cov.to_json(out_path / "coverage.json")
        timing.to_csv(out_path / "timing.csv")
        with open(out_path / "failures.log", "w", encoding="utf-8") as fh:
            for r, token, msg in failures:
                fh.write(f"replicate={r} method={token} error={msg}\n")
        for r, (reports, _, _) in zip(indices, results):
            doc = {
                "replicate": r,
                "intervals": intervals_to_frame(reports).to_dict(orient="records"),
            }
            with open(
                out_path / "intervals" / f"replicate_{r:04d}.json",
                "w",
                encoding="utf-8",
            ) as fh:
                json.dump(doc, fh, indent=1)

    return StudyResult(
        coverage=cov,
        timing=timing,
        failures=tuple(failures),
        intervals=tuple(pairs),
        out_dir=None if out_path is None else str(out_path),
    )


def _q_grid(marg, grid_size=512) -> DensityGrid:
    lo = float(marg.quantile(1e-5))
    hi = float(marg.quantile(1.0 - 1e-5))
    x = np.linspace(lo, hi, grid_size)
    return DensityGrid(x=x, f=marg.pdf(x))


def density_figure_export(
    fit_report: FitReport,
    draws=None,
    bootstrap_deltas=None,
    parameters=None,
    out_dir=None,
    grid_size: int = 512,
):
    """Per-parameter plot-ready bundle: aligned q / MCMC-KDE / bootstrap-KDE.

    ``draws`` is ChainDraws or a mapping of parameter name to pooled draws;
    ``bootstrap_deltas`` maps parameter name to the replicate deviations.
    Returns {name: DataFrame}; also writes ``<out_dir>/density_<name>.csv``
    when ``out_dir`` is given.
    """
    est = point_estimates(fit_report)
    if parameters is None:
        parameters = list(est.keys())

    def pooled(name):
        if draws is None:
            return None
        if hasattr(draws, "pooled"):
            return draws.pooled(name)
        return draws.get(name)

    out = {}
    for name in parameters:
        sources = {}
        if name in est:
            try:
                sources["q_density"] = _q_grid(q_marginal(fit_report, name), grid_size)
            except ValueError:
                pass
        mc = pooled(name)
        if mc is not None:
            sources["mcmc_kde"] = kde(np.asarray(mc), grid_size)
        if bootstrap_deltas is not None and name in bootstrap_deltas:
            boot_points = est[name] + np.asarray(bootstrap_deltas[name])
            sources["bootstrap_kde"] = kde(boot_points, grid_size)
        if not sources:
            raise ValueError(f"no density source available for parameter {name!r}")

        grid = sources[next(iter(sources))].x
        for g in sources.values():
            grid = np.union1d(grid, g.x)
        frame = pd.DataFrame({"x": grid})
        for col in ("q_density", "mcmc_kde", "bootstrap_kde"):
            if col in sources:
                g = sources[col]
                frame[col] = np.interp(grid, g.x, g.f, left=0.0, right=0.0)
            else:
                frame[col] = np.nan
        if "q_density" in sources and "mcmc_kde" in sources:
            frame["accuracy_pct"] = accuracy(sources["q_density"], sources["mcmc_kde"])
        else:
            frame["accuracy_pct"] = np.nan
        out[name] = frame
        if out_dir is not None:
            safe = name.replace("[", "_").replace("]", "")
            path = Path(out_dir) / f"density_{safe}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False)
    return out

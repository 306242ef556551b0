"""Bootstrap and jackknife credible intervals around the variational fit.

The bootstrap resamples whole rows with replacement (groups are kept intact;
no second-stage resampling) and refits the model to every replicate. With
``theta_hat`` the point estimate from the original fit and ``theta_b`` the
replicate estimates, ``delta_b = theta_b - theta_hat``:

* percentile: [theta_hat + q_{a/2}(delta), theta_hat + q_{1-a/2}(delta)];
* pivotal:    theta_hat -+ sigma_hat * q_{1-a/2}(|delta_b / sigma_b|), where
  the sigma values are the standard deviations of the fitted q densities
  (a documented switch restores the literal variance reading).

The jackknife refits on each leave-one-out dataset and intervals are
theta_hat -+ z_{1-a/2} * sigma_J with the usual jackknife standard error.

Replicates that fail to converge are dropped and recorded; a run where more
than 5% drop is refused. Replicate streams derive from (seed, b), so serial
and parallel execution agree exactly.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import norm

from ._rng import substream
from .mfvb import FitReport, fit, point_estimates, q_marginal
from .model import Dataset, Hyperparameters

__all__ = [
    "IntervalReport",
    "BootstrapConfig",
    "BootstrapReplicates",
    "bootstrap_dataset",
    "bootstrap_replicates",
    "bootstrap_intervals",
    "intervals_from_replicates",
    "jackknife_intervals",
    "jackknife_se",
    "mfvb_intervals",
    "quantile",
    "intervals_to_frame",
]

MAX_DROP_FRACTION = 0.05


@dataclass(frozen=True)
class IntervalReport:
    """One parameter's point estimate and credible bounds for one method."""

    parameter: str
    point: float
    lower: float
    upper: float
    method: str
    alpha: float
    n_used: int

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(
                f"{self.parameter}: lower {self.lower} exceeds upper {self.upper}"
            )

    def covers(self, truth: float) -> bool:
        return self.lower <= truth <= self.upper


@dataclass(frozen=True)
class BootstrapConfig:
    """Replicate count, interval method, level, seed and parallelism hint."""

    B: int = 1000
    method: str = "percentile"
    alpha: float = 0.05
    seed: int = 0
    threads: int = None
    pivotal_scale: str = "sd"   # "variance" restores the literal reading

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.method not in ("percentile", "pivotal"):
            raise ValueError(f"method must be percentile or pivotal, got {self.method!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.pivotal_scale not in ("sd", "variance"):
            raise ValueError("pivotal_scale must be 'sd' or 'variance'")


def quantile(values, q) -> float:
    """Linear-interpolation empirical quantile (the common type-7 rule)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("quantile of an empty vector")
    return float(np.quantile(values, q, method="linear"))


def bootstrap_dataset(data: Dataset, rng: np.random.Generator) -> Dataset:
    """Resample n rows i.i.d. with replacement, keeping each row intact."""
    idx = rng.integers(0, data.n, size=data.n)
    return data.take_rows(idx)


def _q_scale(state, names, kind: str) -> np.ndarray:
    out = np.empty(len(names))
    for i, name in enumerate(names):
        marg = q_marginal(state, name)
        try:
            out[i] = marg.sd() if kind == "sd" else marg.variance()
        except ValueError as err:
            raise ValueError(
                f"pivotal scale undefined for {name!r}: {err}"
            ) from err
    return out


@dataclass(frozen=True)
class BootstrapReplicates:
    """Replicate point-estimate deviations shared by both interval methods."""

    names: tuple
    theta_hat: np.ndarray        # (K,) estimates from the original fit
    sigma_hat: np.ndarray        # (K,) q-density scale of the original fit, or None
    deltas: np.ndarray           # (B_kept, K) replicate deviations
    taus: np.ndarray             # (B_kept, K) studentized deviations, or None
    dropped: tuple               # replicate indices dropped for non-convergence
    B: int


def bootstrap_replicates(
    data: Dataset,
    hyper: Hyperparameters = None,
    cfg: BootstrapConfig = None,
    base: FitReport = None,
    need_tau: bool = None,
    tol: float = 0.01,
    max_iter: int = 10000,
) -> BootstrapReplicates:
    """Run the B refits once; interval construction happens afterwards."""
    cfg = cfg or BootstrapConfig()
    if need_tau is None:
        need_tau = cfg.method == "pivotal"
    if base is None:
        base = fit(data, hyper, tol=tol, max_iter=max_iter)
    if not base.converged:
        raise ValueError("the base fit on the original data did not converge")

    names = tuple(point_estimates(base).keys())
    theta_hat = np.array([point_estimates(base)[k] for k in names])
    sigma_hat = _q_scale(base.state, names, cfg.pivotal_scale) if need_tau else None

    def one(b):
        rng = substream(cfg.seed, "bootstrap", b)
        idx = rng.integers(0, data.n, size=data.n)
        rep = fit(
            data.take_rows(idx), hyper,
            tol=tol, max_iter=max_iter, init=base.state, init_rows=idx,
        )
        if not rep.converged:
            return None
        est = point_estimates(rep)
        theta = np.array([est[k] for k in names])
        sig = _q_scale(rep.state, names, cfg.pivotal_scale) if need_tau else None
        return theta, sig

    if cfg.threads and cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, range(cfg.B)))
    else:
        results = [one(b) for b in range(cfg.B)]

    dropped = tuple(b for b, r in enumerate(results) if r is None)
    if len(dropped) > MAX_DROP_FRACTION * cfg.B:
        raise RuntimeError(
            f"{len(dropped)} of {cfg.B} bootstrap replicates failed to "
            f"converge (> {MAX_DROP_FRACTION:.0%}); refusing the run"
        )
    kept = [r for r in results if r is not None]
    thetas = np.stack([t for t, _ in kept])
    deltas = thetas - theta_hat
    taus = None
    if need_tau:
        sigs = np.stack([s for _, s in kept])
        taus = deltas / sigs
    return BootstrapReplicates(
        names=names,
        theta_hat=theta_hat,
        sigma_hat=sigma_hat,
        deltas=deltas,
        taus=taus,
        dropped=dropped,
        B=cfg.B,
    )


def intervals_from_replicates(
    reps: BootstrapReplicates, method: str, alpha: float
) -> list:
    out = []
    for i, name in enumerate(reps.names):
        theta = float(reps.theta_hat[i])
        if method == "percentile":
            lo = theta + quantile(reps.deltas[:, i], alpha / 2.0)
            hi = theta + quantile(reps.deltas[:, i], 1.0 - alpha / 2.0)
        elif method == "pivotal":
            if reps.taus is None:
                raise ValueError("replicates were run without studentized deviations")
            q = quantile(np.abs(reps.taus[:, i]), 1.0 - alpha / 2.0)
            half = float(reps.sigma_hat[i]) * q
            lo, hi = theta - half, theta + half
        else:
            raise ValueError(f"unknown bootstrap method {method!r}")
        out.append(
            IntervalReport(
                parameter=name, point=theta, lower=float(lo), upper=float(hi),
                method=method, alpha=alpha, n_used=reps.B - len(reps.dropped),
            )
        )
    return out


def bootstrap_intervals(
    data: Dataset,
    hyper: Hyperparameters = None,
    cfg: BootstrapConfig = None,
    base: FitReport = None,
    tol: float = 0.01,
    max_iter: int = 10000,
) -> list:
    """Percentile or pivotal bootstrap intervals per ``cfg.method``."""
    cfg = cfg or BootstrapConfig()
    reps = bootstrap_replicates(
        data, hyper, cfg, base=base, tol=tol, max_iter=max_iter
    )
    return intervals_from_replicates(reps, cfg.method, cfg.alpha)


def jackknife_se(loo_estimates) -> np.ndarray:
    """Jackknife standard error from the n leave-one-out estimates.

    sigma_J = sqrt{ (n-1)/n * sum_i (theta_i - mean(theta))^2 }, columnwise.
    """
    loo = np.atleast_2d(np.asarray(loo_estimates, dtype=np.float64))
    n = loo.shape[0]
    if n < 2:
        raise ValueError("jackknife needs at least 2 leave-one-out estimates")
    center = loo.mean(axis=0)
    return np.sqrt((n - 1) / n * ((loo - center) ** 2).sum(axis=0))


def jackknife_intervals(
    data: Dataset,
    hyper: Hyperparameters = None,
    alpha: float = 0.05,
    base: FitReport = None,
    tol: float = 0.01,
    max_iter: int = 10000,
    threads: int = None,
) -> list:
    """Leave-one-out intervals theta_hat -+ z_{1-a/2} sigma_J."""
    if data.n < 3:
        raise ValueError(f"jackknife needs n >= 3 rows, got {data.n}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if base is None:
        base = fit(data, hyper, tol=tol, max_iter=max_iter)
    if not base.converged:
        raise ValueError("the base fit on the original data did not converge")
    names = tuple(point_estimates(base).keys())
    theta_hat = np.array([point_estimates(base)[k] for k in names])

    def one(i):
        rows = np.delete(np.arange(data.n), i)
        rep = fit(
            data.take_rows(rows), hyper,
            tol=tol, max_iter=max_iter, init=base.state, init_rows=rows,
        )
        if not rep.converged:
            raise RuntimeError(f"leave-one-out refit {i} did not converge")
        est = point_estimates(rep)
        return np.array([est[k] for k in names])

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            loo = np.stack(list(pool.map(one, range(data.n))))
    else:
        loo = np.stack([one(i) for i in range(data.n)])

    se = jackknife_se(loo)
    z = norm.ppf(1.0 - alpha / 2.0)
    return [
        IntervalReport(
            parameter=name,
            point=float(theta_hat[i]),
            lower=float(theta_hat[i] - z * se[i]),
            upper=float(theta_hat[i] + z * se[i]),
            method="jackknife",
            alpha=alpha,
            n_used=data.n,
        )
        for i, name in enumerate(names)
    ]


def mfvb_intervals(base: FitReport, alpha: float = 0.05) -> list:
    """Raw q-density (alpha/2, 1 - alpha/2) quantile intervals, no resampling."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    est = point_estimates(base)
    out = []
    for name, point in est.items():
        marg = q_marginal(base.state, name)
        lo = float(marg.quantile(alpha / 2.0))
        hi = float(marg.quantile(1.0 - alpha / 2.0))
        out.append(
            IntervalReport(
                parameter=name, point=float(point),
                lower=min(lo, hi), upper=max(lo, hi),
                method="mfvb", alpha=alpha, n_used=base.state.n,
            )
        )
    return out


def intervals_to_frame(reports) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "parameter": r.parameter,
                "method": r.method,
                "point": r.point,
                "lower": r.lower,
                "upper": r.upper,
                "alpha": r.alpha,
                "n_used": r.n_used,
            }
            for r in reports
        ]
    )

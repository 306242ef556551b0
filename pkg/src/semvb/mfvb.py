"""Coordinate-ascent mean-field fitters for the single- and multi-factor models.

``fit_single`` cycles closed-form updates over the factorized approximation

    q(nu) q(lambda) q(psi) q(sigma2) prod_i q(eta_i)

until the largest relative change across all scalar q-parameters between two
consecutive sweeps drops below ``tol``. ``fit_multi`` does the same for the
multi-factor model, where q(Sigma) is Inverse-G-Wishart and the per-row
factor-score approximations are p-variate Normal with one shared covariance.

Shapes never move after initialization: kappa_q(psi_j) = n + kappa_psi + 1,
kappa_q(sigma2) = n + kappa_sigma2 and xi_q(Sigma) = n + xi_Sigma are set once.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import _kernels
from ._rng import substream
from .distributions import (
    InvChiSq,
    inv_chisq_logpdf,
    inv_chisq_mean,
    inv_chisq_quantile,
    inv_chisq_variance,
    InvGWishart,
    sample_igw,
)
from .model import Dataset, FactorSpec, Hyperparameters, column_names

__all__ = [
    "SingleFactorVariationalState",
    "MultiFactorVariationalState",
    "FitReport",
    "fit",
    "fit_single",
    "fit_multi",
    "point_estimates",
    "marginal_density_grid",
    "q_marginal",
]


@dataclass(frozen=True)
class SingleFactorVariationalState:
    """Optimal q-density parameters of the single-factor fit."""

    spec: FactorSpec
    n: int
    mu_q_nu: np.ndarray
    sigma2_q_nu: np.ndarray
    kappa_q_psi: float
    delta_q_psi: np.ndarray
    mu_q_lambda: np.ndarray       # entry 0 pinned to 1
    sigma2_q_lambda: np.ndarray   # entry 0 is 0 (constant)
    mu_q_eta: np.ndarray
    sigma2_q_eta: float           # shared across rows
    kappa_q_sigma2: float
    delta_q_sigma2: float

    @property
    def m(self) -> int:
        return self.mu_q_nu.shape[0]

    @property
    def mu_q_nu2(self) -> np.ndarray:
        return self.sigma2_q_nu + self.mu_q_nu**2

    @property
    def mu_q_lambda2(self) -> np.ndarray:
        return self.sigma2_q_lambda + self.mu_q_lambda**2

    @property
    def mu_q_eta2(self) -> np.ndarray:
        return self.sigma2_q_eta + self.mu_q_eta**2

    @property
    def mu_q_inv_psi(self) -> np.ndarray:
        return self.kappa_q_psi / self.delta_q_psi

    @property
    def mu_q_inv_sigma2(self) -> float:
        return self.kappa_q_sigma2 / self.delta_q_sigma2


@dataclass(frozen=True)
class MultiFactorVariationalState:
    """Optimal q-density parameters of the multi-factor fit."""

    spec: FactorSpec
    n: int
    mu_q_nu: np.ndarray
    sigma2_q_nu: np.ndarray
    kappa_q_psi: float
    delta_q_psi: np.ndarray
    mu_q_lambda: np.ndarray       # reference entries pinned to 1
    sigma2_q_lambda: np.ndarray   # reference entries 0
    mu_q_eta: np.ndarray          # (n, p)
    Sigma_q_eta: np.ndarray       # (p, p), shared across rows
    xi_q_Sigma: float
    Lambda_q_Sigma: np.ndarray    # (p, p)

    @property
    def m(self) -> int:
        return self.mu_q_nu.shape[0]

    @property
    def p(self) -> int:
        return self.Lambda_q_Sigma.shape[0]

    @property
    def mu_q_nu2(self) -> np.ndarray:
        return self.sigma2_q_nu + self.mu_q_nu**2

    @property
    def mu_q_lambda2(self) -> np.ndarray:
        return self.sigma2_q_lambda + self.mu_q_lambda**2

    @property
    def mu_q_eta2(self) -> np.ndarray:
        return np.diag(self.Sigma_q_eta) + self.mu_q_eta**2

    @property
    def mu_q_inv_psi(self) -> np.ndarray:
        return self.kappa_q_psi / self.delta_q_psi

    @property
    def M_q_Sigma_inv(self) -> np.ndarray:
        return (self.xi_q_Sigma - self.p + 1.0) * np.linalg.inv(self.Lambda_q_Sigma)


@dataclass(frozen=True)
class FitReport:
    """Outcome of one fit: the converged state plus run metadata."""

    state: object
    iterations: int
    converged: bool
    final_relative_error: float
    wall_time: float

    def to_json_dict(self) -> dict:
        s = self.state
        single = isinstance(s, SingleFactorVariationalState)
        doc = {
            "model": "single" if single else "multi",
            "spec": s.spec.to_dict(),
            "n": s.n,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_relative_error": self.final_relative_error,
            "wall_time": self.wall_time,
            "q": {
                "mu_q_nu": s.mu_q_nu.tolist(),
                "sigma2_q_nu": s.sigma2_q_nu.tolist(),
                "kappa_q_psi": s.kappa_q_psi,
                "delta_q_psi": s.delta_q_psi.tolist(),
                "mu_q_lambda": s.mu_q_lambda.tolist(),
                "sigma2_q_lambda": s.sigma2_q_lambda.tolist(),
                "mu_q_eta": s.mu_q_eta.tolist(),
            },
        }
        if single:
            doc["q"]["sigma2_q_eta"] = s.sigma2_q_eta
            doc["q"]["kappa_q_sigma2"] = s.kappa_q_sigma2
            doc["q"]["delta_q_sigma2"] = s.delta_q_sigma2
        else:
            doc["q"]["Sigma_q_eta"] = s.Sigma_q_eta.tolist()
            doc["q"]["xi_q_Sigma"] = s.xi_q_Sigma
            doc["q"]["Lambda_q_Sigma"] = s.Lambda_q_Sigma.tolist()
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FitReport":
        spec = FactorSpec.from_dict(doc["spec"])
        q = doc["q"]
        common = dict(
            spec=spec,
            n=int(doc["n"]),
            mu_q_nu=np.asarray(q["mu_q_nu"]),
            sigma2_q_nu=np.asarray(q["sigma2_q_nu"]),
            kappa_q_psi=float(q["kappa_q_psi"]),
            delta_q_psi=np.asarray(q["delta_q_psi"]),
            mu_q_lambda=np.asarray(q["mu_q_lambda"]),
            sigma2_q_lambda=np.asarray(q["sigma2_q_lambda"]),
        )
        if doc["model"] == "single":
            state = SingleFactorVariationalState(
                mu_q_eta=np.asarray(q["mu_q_eta"]),
                sigma2_q_eta=float(q["sigma2_q_eta"]),
                kappa_q_sigma2=float(q["kappa_q_sigma2"]),
                delta_q_sigma2=float(q["delta_q_sigma2"]),
                **common,
            )
        else:
            state = MultiFactorVariationalState(
                mu_q_eta=np.asarray(q["mu_q_eta"]),
                Sigma_q_eta=np.asarray(q["Sigma_q_eta"]),
                xi_q_Sigma=float(q["xi_q_Sigma"]),
                Lambda_q_Sigma=np.asarray(q["Lambda_q_Sigma"]),
                **common,
            )
        return cls(
            state=state,
            iterations=int(doc["iterations"]),
            converged=bool(doc["converged"]),
            final_relative_error=float(doc["final_relative_error"]),
            wall_time=float(doc["wall_time"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "FitReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _default_init_common(data: Dataset):
    y = data.y
    mu_nu = y.mean(axis=0)
    col_var = y.var(axis=0)
    mu_inv_psi = 1.0 / np.maximum(col_var, 1e-12)
    mu_lam = np.ones(data.m)
    mu_lam2 = np.ones(data.m)
    return mu_nu, mu_inv_psi, mu_lam, mu_lam2


def _check_finite(report: FitReport) -> None:
    s = report.state
    arrays = [s.mu_q_nu, s.sigma2_q_nu, s.delta_q_psi, s.mu_q_lambda,
              s.sigma2_q_lambda, s.mu_q_eta]
    if isinstance(s, SingleFactorVariationalState):
        arrays += [np.array([s.sigma2_q_eta, s.delta_q_sigma2])]
        positive = [s.sigma2_q_nu, s.delta_q_psi,
                    np.array([s.sigma2_q_eta, s.delta_q_sigma2])]
    else:
        arrays += [s.Sigma_q_eta, s.Lambda_q_Sigma]
        positive = [s.sigma2_q_nu, s.delta_q_psi,
                    np.diag(s.Sigma_q_eta), np.diag(s.Lambda_q_Sigma)]
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise RuntimeError(
                "non-finite value in a q-parameter update; the data or "
                "hyperparameters are pathological"
            )
    for a in positive:
        if not np.all(a > 0):
            raise RuntimeError("a q-density variance or scale is non-positive")


def fit_single(
    data: Dataset,
    hyper: Hyperparameters = None,
    tol: float = 0.01,
    max_iter: int = 10000,
    init: SingleFactorVariationalState = None,
    init_rows=None,
    backend: str = None,
) -> FitReport:
    """Fit the single-factor model; see the module docstring for the scheme.

    ``init`` warm-starts all q-parameters from a previous state; ``init_rows``
    maps this dataset's rows to that state's row indices (bootstrap refits
    hand the resampled index vector here). Non-convergence after ``max_iter``
    sweeps is reported, not raised.
    """
    if data.spec.p != 1:
        raise ValueError(f"fit_single requires a 1-factor spec, got p = {data.spec.p}")
    hyper = (hyper or Hyperparameters()).resolve(data.spec)

    if init is None:
        mu_nu, mu_inv_psi, mu_lam, mu_lam2 = _default_init_common(data)
        mu_eta = np.zeros(data.n)
        mu_eta2 = np.ones(data.n)
        mu_inv_sigma2 = 1.0
    else:
        rows = np.arange(data.n) if init_rows is None else np.asarray(init_rows)
        mu_nu = init.mu_q_nu.copy()
        mu_inv_psi = init.mu_q_inv_psi.copy()
        mu_lam = init.mu_q_lambda.copy()
        mu_lam2 = init.mu_q_lambda2.copy()
        mu_eta = init.mu_q_eta[rows].copy()
        mu_eta2 = init.mu_q_eta2[rows].copy()
        mu_inv_sigma2 = init.mu_q_inv_sigma2

    impl = _kernels.get_impl(backend)
    t0 = time.perf_counter()
    (mu_nu, s2_nu, delta_psi, mu_lam, s2_lam, mu_eta, s2_eta, delta_s2,
     iters, converged, rho) = impl.mfvb_single(
        data.y,
        hyper.mu_lambda, hyper.sigma2_nu, hyper.sigma2_lambda,
        hyper.kappa_psi, hyper.delta_psi,
        hyper.kappa_sigma2, hyper.delta_sigma2,
        mu_nu, mu_inv_psi, mu_lam, mu_lam2, mu_eta, mu_eta2, mu_inv_sigma2,
        float(tol), int(max_iter),
    )
    wall = time.perf_counter() - t0

    state = SingleFactorVariationalState(
        spec=data.spec,
        n=data.n,
        mu_q_nu=mu_nu,
        sigma2_q_nu=s2_nu,
        kappa_q_psi=data.n + hyper.kappa_psi + 1.0,
        delta_q_psi=delta_psi,
        mu_q_lambda=mu_lam,
        sigma2_q_lambda=s2_lam,
        mu_q_eta=mu_eta,
        sigma2_q_eta=float(s2_eta),
        kappa_q_sigma2=data.n + hyper.kappa_sigma2,
        delta_q_sigma2=float(delta_s2),
    )
    report = FitReport(
        state=state,
        iterations=int(iters),
        converged=bool(converged),
        final_relative_error=float(rho),
        wall_time=wall,
    )
    _check_finite(report)
    return report


def fit_multi(
    data: Dataset,
    hyper: Hyperparameters = None,
    tol: float = 0.01,
    max_iter: int = 10000,
    init: MultiFactorVariationalState = None,
    init_rows=None,
    backend: str = None,
) -> FitReport:
    """Fit the multi-factor model (accepts p = 1 as the 1 x 1 special case)."""
    hyper = (hyper or Hyperparameters()).resolve(data.spec)
    p = data.spec.p

    if init is None:
        mu_nu, mu_inv_psi, mu_lam, mu_lam2 = _default_init_common(data)
        mu_eta = np.zeros((data.n, p))
        mu_eta2 = np.ones((data.n, p))
        M_inv = np.eye(p)
    else:
        rows = np.arange(data.n) if init_rows is None else np.asarray(init_rows)
        mu_nu = init.mu_q_nu.copy()
        mu_inv_psi = init.mu_q_inv_psi.copy()
        mu_lam = init.mu_q_lambda.copy()
        mu_lam2 = init.mu_q_lambda2.copy()
        mu_eta = init.mu_q_eta[rows].copy()
        mu_eta2 = init.mu_q_eta2[rows].copy()
        M_inv = init.M_q_Sigma_inv.copy()

    impl = _kernels.get_impl(backend)
    t0 = time.perf_counter()
    (mu_nu, s2_nu, delta_psi, mu_lam, s2_lam, mu_eta, Sigma_eta, Lambda_q,
     iters, converged, rho) = impl.mfvb_multi(
        data.y,
        data.spec.column_factor().astype(np.int64),
        data.spec.reference_mask(),
        hyper.mu_lambda, hyper.sigma2_nu, hyper.sigma2_lambda,
        hyper.kappa_psi, hyper.delta_psi,
        hyper.xi_Sigma, hyper.Lambda_Sigma,
        mu_nu, mu_inv_psi, mu_lam, mu_lam2, mu_eta, mu_eta2, M_inv,
        float(tol), int(max_iter),
    )
    wall = time.perf_counter() - t0

    state = MultiFactorVariationalState(
        spec=data.spec,
        n=data.n,
        mu_q_nu=mu_nu,
        sigma2_q_nu=s2_nu,
        kappa_q_psi=data.n + hyper.kappa_psi + 1.0,
        delta_q_psi=delta_psi,
        mu_q_lambda=mu_lam,
        sigma2_q_lambda=s2_lam,
        mu_q_eta=mu_eta,
        Sigma_q_eta=Sigma_eta,
        xi_q_Sigma=data.n + hyper.xi_Sigma,
        Lambda_q_Sigma=Lambda_q,
    )
    report = FitReport(
        state=state,
        iterations=int(iters),
        converged=bool(converged),
        final_relative_error=float(rho),
        wall_time=wall,
    )
    _check_finite(report)
    return report


def fit(data: Dataset, hyper: Hyperparameters = None, **kw) -> FitReport:
    """Route to fit_single / fit_multi by the spec's factor count."""
    if data.spec.p == 1:
        return fit_single(data, hyper, **kw)
    return fit_multi(data, hyper, **kw)


def _as_state(state_or_report):
    return state_or_report.state if isinstance(state_or_report, FitReport) else state_or_report


# ---------------------------------------------------------------------------
# q-density access by canonical parameter name
# ---------------------------------------------------------------------------

class QMarginal:
    """Marginal optimal q density of one named scalar parameter."""

    def __init__(self, kind, **kw):
        self.kind = kind
        self.kw = kw

    def mean(self) -> float:
        if self.kind == "normal":
            return self.kw["mu"]
        if self.kind == "invchisq":
            return inv_chisq_mean(InvChiSq(self.kw["kappa"], self.kw["delta"]))
        xi, lam, r, c = (self.kw[k] for k in ("xi", "Lambda", "r", "c"))
        p = lam.shape[0]
        return lam[r, c] / (xi - 2.0 * p)

    def sd(self) -> float:
        if self.kind == "normal":
            return float(np.sqrt(self.kw["sigma2"]))
        if self.kind == "invchisq":
            return float(
                np.sqrt(inv_chisq_variance(InvChiSq(self.kw["kappa"], self.kw["delta"])))
            )
        return float(np.sqrt(self.variance()))

    def variance(self) -> float:
        if self.kind == "normal":
            return self.kw["sigma2"]
        if self.kind == "invchisq":
            return inv_chisq_variance(InvChiSq(self.kw["kappa"], self.kw["delta"]))
        # Inverse-Wishart cross moment, nu = xi - p + 1
        xi, lam, r, c = (self.kw[k] for k in ("xi", "Lambda", "r", "c"))
        p = lam.shape[0]
        a = xi - 2.0 * p   # nu - p - 1
        if a - 2.0 <= 0:
            raise ValueError("variance undefined: xi_q too small")
        num = (a + 2.0) * lam[r, c] ** 2 + a * lam[r, r] * lam[c, c]
        den = (a + 1.0) * a**2 * (a - 2.0)
        return num / den

    def quantile(self, q):
        if self.kind == "normal":
            return self.kw["mu"] + np.sqrt(self.kw["sigma2"]) * norm.ppf(q)
        if self.kind == "invchisq":
            return inv_chisq_quantile(InvChiSq(self.kw["kappa"], self.kw["delta"]), q)
        # no closed form off the diagonal: deterministic seeded Monte Carlo
        xi, lam, r, c = (self.kw[k] for k in ("xi", "Lambda", "r", "c"))
        draws = sample_igw(
            InvGWishart(xi=xi, scale=lam),
            substream(0, "igw-marginal-quantile"),
            size=100_000,
        )[:, r, c]
        return np.quantile(draws, q, method="linear")

    def pdf(self, grid) -> np.ndarray:
        grid = np.asarray(grid, dtype=np.float64)
        if self.kind == "normal":
            return norm.pdf(grid, loc=self.kw["mu"], scale=np.sqrt(self.kw["sigma2"]))
        if self.kind == "invchisq":
            d = InvChiSq(self.kw["kappa"], self.kw["delta"])
            out = np.zeros_like(grid, dtype=np.float64)
            pos = grid > 0
            out[pos] = np.exp(inv_chisq_logpdf(grid[pos], d))
            return out
        raise ValueError(
            "no closed-form marginal density for off-diagonal Sigma entries"
        )


def q_marginal(state_or_report, name: str) -> QMarginal:
    """Look up the q density of a canonical parameter name."""
    s = _as_state(state_or_report)
    spec = s.spec
    single = isinstance(s, SingleFactorVariationalState)

    for base, mu_arr, var_arr in (
        ("nu", s.mu_q_nu, s.sigma2_q_nu),
        ("lambda", s.mu_q_lambda, s.sigma2_q_lambda),
    ):
        free_only = base == "lambda"
        names = column_names(spec, base, free_only=free_only)
        if name in names:
            cols = np.flatnonzero(~spec.reference_mask()) if free_only else np.arange(spec.m)
            j = int(cols[names.index(name)])
            return QMarginal("normal", mu=float(mu_arr[j]), sigma2=float(var_arr[j]))

    psi_names = column_names(spec, "psi")
    if name in psi_names:
        j = psi_names.index(name)
        return QMarginal(
            "invchisq", kappa=s.kappa_q_psi, delta=float(s.delta_q_psi[j])
        )

    if single and name == "sigma2":
        return QMarginal("invchisq", kappa=s.kappa_q_sigma2, delta=s.delta_q_sigma2)

    if not single and name.startswith("Sigma["):
        try:
            r, c = (int(t) - 1 for t in name[6:-1].split("]["))
        except ValueError as err:
            raise ValueError(f"malformed Sigma parameter name {name!r}") from err
        p = s.p
        if not (0 <= r < p and 0 <= c < p):
            raise ValueError(f"{name!r} out of range for p = {p}")
        if r == c:
            # diagonal Inverse-Wishart marginal is Inverse-chi-squared
            return QMarginal(
                "invchisq",
                kappa=s.xi_q_Sigma - 2.0 * p + 2.0,
                delta=float(s.Lambda_q_Sigma[r, r]),
            )
        return QMarginal(
            "iw_offdiag", xi=s.xi_q_Sigma, Lambda=s.Lambda_q_Sigma, r=r, c=c
        )

    if name.startswith("eta["):
        try:
            i, k = (int(t) - 1 for t in name[4:-1].split("]["))
        except ValueError as err:
            raise ValueError(f"malformed eta parameter name {name!r}") from err
        if single:
            if k != 0 or not 0 <= i < s.n:
                raise ValueError(f"{name!r} out of range")
            return QMarginal("normal", mu=float(s.mu_q_eta[i]), sigma2=s.sigma2_q_eta)
        if not (0 <= i < s.n and 0 <= k < s.p):
            raise ValueError(f"{name!r} out of range")
        return QMarginal(
            "normal", mu=float(s.mu_q_eta[i, k]), sigma2=float(s.Sigma_q_eta[k, k])
        )

    raise ValueError(f"unknown parameter name {name!r}")


def point_estimates(state_or_report, include_eta: bool = False) -> dict:
    """q-density means: mu_q for Normal blocks, delta_q/(kappa_q - 2) for
    Inverse-chi-squared blocks, Lambda_q/(xi_q - 2p) for Sigma."""
    s = _as_state(state_or_report)
    spec = s.spec
    single = isinstance(s, SingleFactorVariationalState)
    out = {}

    out.update(zip(column_names(spec, "nu"), (float(v) for v in s.mu_q_nu)))
    free = ~spec.reference_mask()
    out.update(
        zip(column_names(spec, "lambda", free_only=True),
            (float(v) for v in s.mu_q_lambda[free]))
    )
    if s.kappa_q_psi <= 2:
        raise ValueError("psi point estimate undefined: kappa_q <= 2")
    out.update(
        zip(column_names(spec, "psi"),
            (float(v) for v in s.delta_q_psi / (s.kappa_q_psi - 2.0)))
    )
    if single:
        if s.kappa_q_sigma2 <= 2:
            raise ValueError("sigma2 point estimate undefined: kappa_q <= 2")
        out["sigma2"] = s.delta_q_sigma2 / (s.kappa_q_sigma2 - 2.0)
    else:
        p = s.p
        if s.xi_q_Sigma <= 2 * p:
            raise ValueError("Sigma point estimate undefined: xi_q <= 2p")
        sig = s.Lambda_q_Sigma / (s.xi_q_Sigma - 2.0 * p)
        for r in range(p):
            for c in range(r, p):
                out[f"Sigma[{r + 1}][{c + 1}]"] = float(sig[r, c])
    if include_eta:
        eta = s.mu_q_eta.reshape(-1, 1) if single else s.mu_q_eta
        for i in range(s.n):
            for k in range(eta.shape[1]):
                out[f"eta[{i + 1}][{k + 1}]"] = float(eta[i, k])
    return out


def marginal_density_grid(state_or_report, name: str, grid) -> np.ndarray:
    """Evaluate the optimal q density of ``name`` on ``grid``."""
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    return q_marginal(state_or_report, name).pdf(grid)

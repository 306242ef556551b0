"""Systematic-scan conjugate Gibbs samplers for both models.

These samplers are built directly from the models' full conditionals
(Normal for nu, lambda and the factor scores; Inverse-chi-squared for psi and
sigma2; Inverse-G-Wishart for Sigma) and serve as the MCMC benchmark and the
brute-force oracle for the variational fitters.

Every conditional's shape parameter is iteration-invariant, so each chain
pre-draws its standard variates (unit normals plus chi-squared draws with
fixed degrees of freedom) from one seeded stream and then evolves
deterministically. Fixing the seed replays a chain bit-for-bit; chains own
disjoint substreams and may run in parallel.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import _kernels
from ._rng import substream
from .model import Dataset, FactorSpec, Hyperparameters, column_names, parameter_names
from .resample import IntervalReport, quantile

__all__ = ["ChainConfig", "ChainDraws", "gibbs_single", "gibbs_multi", "chain_summary"]


@dataclass(frozen=True)
class ChainConfig:
    """Chain shape: total iterations, burn-in discarded, thinning, chains."""

    iterations: int = 15000
    burn_in: int = 7500
    chains: int = 1
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if self.thin < 1 or self.chains < 1 or self.iterations < 1:
            raise ValueError("iterations, chains and thin must be >= 1")

    @property
    def retained(self) -> int:
        return -(-(self.iterations - self.burn_in) // self.thin)


@dataclass(frozen=True)
class ChainDraws:
    """Retained draws for every model unknown, partitioned by chain.

    Arrays are indexed (chain, draw, ...); ``pooled`` flattens chains in
    chain order. Single-factor runs carry ``sigma2`` (chain, draw); multi
    runs carry ``Sigma`` (chain, draw, p, p).
    """

    spec: FactorSpec
    n: int
    nu: np.ndarray
    lam: np.ndarray
    psi: np.ndarray
    eta: np.ndarray
    sigma2: np.ndarray = None
    Sigma: np.ndarray = None

    @property
    def chains(self) -> int:
        return self.nu.shape[0]

    @property
    def retained(self) -> int:
        return self.nu.shape[1]

    def names(self, include_eta: bool = False) -> list:
        return parameter_names(self.spec, include_eta=include_eta, n=self.n)

    def pooled(self, name: str) -> np.ndarray:
        """All retained draws of one named parameter, chains concatenated."""
        return self._locate(name).reshape(-1)

    def _locate(self, name: str) -> np.ndarray:
        spec = self.spec
        for base, arr in (("nu", self.nu), ("lambda", self.lam), ("psi", self.psi)):
            names = column_names(spec, base, free_only=base == "lambda")
            if name in names:
                cols = (
                    np.flatnonzero(~spec.reference_mask())
                    if base == "lambda"
                    else np.arange(spec.m)
                )
                return arr[:, :, int(cols[names.index(name)])]
        if name == "sigma2" and self.sigma2 is not None:
            return self.sigma2
        if name.startswith("Sigma[") and self.Sigma is not None:
            r, c = (int(t) - 1 for t in name[6:-1].split("]["))
            return self.Sigma[:, :, r, c]
        if name.startswith("eta["):
            i, k = (int(t) - 1 for t in name[4:-1].split("]["))
            if self.eta.ndim == 3:
                if k != 0:
                    raise ValueError(f"{name!r} out of range for a 1-factor model")
                return self.eta[:, :, i]
            return self.eta[:, :, i, k]
        raise ValueError(f"unknown parameter name {name!r}")

    def to_frame(self, include_eta: bool = True) -> pd.DataFrame:
        """Columnar layout: chain, draw, then one column per scalar unknown."""
        cols = {
            "chain": np.repeat(np.arange(1, self.chains + 1), self.retained),
            "draw": np.tile(np.arange(1, self.retained + 1), self.chains),
        }
        for name in self.names(include_eta=include_eta):
            cols[name] = self.pooled(name)
        return pd.DataFrame(cols)


def _single_chain(data, hyper, cfg, chain):
    n, m = data.n, data.m
    T = cfg.iterations
    rng = substream(cfg.seed, "gibbs-single", chain)
    z_nu = rng.standard_normal((T, m))
    chi_psi = rng.chisquare(n + hyper.kappa_psi + 1.0, (T, m))
    z_lam = rng.standard_normal((T, m - 1))
    z_eta = rng.standard_normal((T, n))
    chi_s2 = rng.chisquare(n + hyper.kappa_sigma2, T)

    nu0 = np.zeros(m)
    lam0 = np.ones(m)
    psi0 = np.full(m, hyper.delta_psi / (hyper.kappa_psi + 2.0))
    eta0 = np.zeros(n)
    sigma20 = hyper.delta_sigma2 / (hyper.kappa_sigma2 + 2.0)

    R = cfg.retained
    nu_out = np.empty((R, m))
    lam_out = np.empty((R, m))
    psi_out = np.empty((R, m))
    eta_out = np.empty((R, n))
    s2_out = np.empty(R)

    impl = _kernels.get_impl()
    got = impl.gibbs_single_chain(
        data.y,
        hyper.mu_lambda, hyper.sigma2_nu, hyper.sigma2_lambda,
        hyper.delta_psi, hyper.delta_sigma2,
        nu0, lam0, psi0, eta0, sigma20,
        z_nu, chi_psi, z_lam, z_eta, chi_s2,
        int(cfg.burn_in), int(cfg.thin),
        nu_out, lam_out, psi_out, eta_out, s2_out,
    )
    if got != R:
        raise RuntimeError(f"chain retained {got} draws, expected {R}")
    _check_support(psi_out, s2_out, None, chain)
    return nu_out, lam_out, psi_out, eta_out, s2_out


def _multi_chain(data, hyper, cfg, chain):
    n, m, p = data.n, data.m, data.spec.p
    T = cfg.iterations
    nu_dof = n + hyper.xi_Sigma - p + 1.0
    rng = substream(cfg.seed, "gibbs-multi", chain)
    n_free = int((~data.spec.reference_mask()).sum())
    z_nu = rng.standard_normal((T, m))
    chi_psi = rng.chisquare(n + hyper.kappa_psi + 1.0, (T, m))
    z_lam = rng.standard_normal((T, n_free))
    z_eta = rng.standard_normal((T, n, p))
    chi_bart = np.empty((T, p))
    for i in range(p):
        chi_bart[:, i] = rng.chisquare(nu_dof - i, T)
    z_bart = rng.standard_normal((T, p * (p - 1) // 2))

    nu0 = np.zeros(m)
    lam0 = np.ones(m)
    psi0 = np.full(m, hyper.delta_psi / (hyper.kappa_psi + 2.0))
    eta0 = np.zeros((n, p))
    Sigma0 = hyper.Lambda_Sigma / (hyper.xi_Sigma + 2.0)
    Sigma_inv0 = np.linalg.inv(Sigma0)
    Sigma_inv0 = (Sigma_inv0 + Sigma_inv0.T) / 2.0

    R = cfg.retained
    nu_out = np.empty((R, m))
    lam_out = np.empty((R, m))
    psi_out = np.empty((R, m))
    eta_out = np.empty((R, n, p))
    Sigma_out = np.empty((R, p, p))

    impl = _kernels.get_impl()
    got = impl.gibbs_multi_chain(
        data.y,
        data.spec.column_factor().astype(np.int64),
        data.spec.reference_mask(),
        hyper.mu_lambda, hyper.sigma2_nu, hyper.sigma2_lambda,
        hyper.delta_psi, hyper.Lambda_Sigma,
        nu0, lam0, psi0, eta0, Sigma_inv0,
        z_nu, chi_psi, z_lam, z_eta, chi_bart, z_bart,
        int(cfg.burn_in), int(cfg.thin),
        nu_out, lam_out, psi_out, eta_out, Sigma_out,
    )
    if got != R:
        raise RuntimeError(f"chain retained {got} draws, expected {R}")
    _check_support(psi_out, None, Sigma_out, chain)
    return nu_out, lam_out, psi_out, eta_out, Sigma_out


def _check_support(psi_out, s2_out, Sigma_out, chain):
    if not np.all(psi_out > 0) or not np.all(np.isfinite(psi_out)):
        raise RuntimeError(f"chain {chain}: non-positive or non-finite psi draw")
    if s2_out is not None and not np.all((s2_out > 0) & np.isfinite(s2_out)):
        raise RuntimeError(f"chain {chain}: non-positive or non-finite sigma2 draw")
    if Sigma_out is not None:
        if not np.all(np.isfinite(Sigma_out)):
            raise RuntimeError(f"chain {chain}: non-finite Sigma draw")
        try:
            np.linalg.cholesky(Sigma_out)
        except np.linalg.LinAlgError as err:
            raise RuntimeError(f"chain {chain}: non-SPD Sigma draw") from err


def _run_chains(worker, data, hyper, cfg, threads):
    max_workers = min(cfg.chains, threads) if threads else 1
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [
                pool.submit(worker, data, hyper, cfg, c) for c in range(cfg.chains)
            ]
            results = [f.result() for f in futures]
    else:
        results = [worker(data, hyper, cfg, c) for c in range(cfg.chains)]
    return [np.stack(part) for part in zip(*results)]


def gibbs_single(
    data: Dataset,
    hyper: Hyperparameters = None,
    cfg: ChainConfig = None,
    threads: int = None,
) -> ChainDraws:
    """Sample the single-factor posterior; see the module docstring."""
    if data.spec.p != 1:
        raise ValueError(f"gibbs_single requires a 1-factor spec, got p = {data.spec.p}")
    hyper = (hyper or Hyperparameters()).resolve(data.spec)
    cfg = cfg or ChainConfig()
    nu, lam, psi, eta, s2 = _run_chains(_single_chain, data, hyper, cfg, threads)
    return ChainDraws(
        spec=data.spec, n=data.n, nu=nu, lam=lam, psi=psi, eta=eta, sigma2=s2
    )


def gibbs_multi(
    data: Dataset,
    hyper: Hyperparameters = None,
    cfg: ChainConfig = None,
    threads: int = None,
) -> ChainDraws:
    """Sample the multi-factor posterior (accepts p = 1 with Sigma 1 x 1)."""
    hyper = (hyper or Hyperparameters()).resolve(data.spec)
    cfg = cfg or ChainConfig()
    nu, lam, psi, eta, Sigma = _run_chains(_multi_chain, data, hyper, cfg, threads)
    return ChainDraws(
        spec=data.spec, n=data.n, nu=nu, lam=lam, psi=psi, eta=eta, Sigma=Sigma
    )


def chain_summary(
    draws: ChainDraws, alpha: float = 0.05, include_eta: bool = False
) -> list:
    """Pooled posterior means and (alpha/2, 1 - alpha/2) quantile intervals."""
    total = draws.chains * draws.retained
    if total < 100:
        raise ValueError(f"need at least 100 retained draws, have {total}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    out = []
    for name in draws.names(include_eta=include_eta):
        x = draws.pooled(name)
        out.append(
            IntervalReport(
                parameter=name,
                point=float(x.mean()),
                lower=float(quantile(x, alpha / 2.0)),
                upper=float(quantile(x, 1.0 - alpha / 2.0)),
                method="mcmc",
                alpha=alpha,
                n_used=total,
            )
        )
    return out

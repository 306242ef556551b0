"""Inverse-chi-squared, Inverse-G-Wishart and Gaussian-moment building blocks.

The Inverse-chi-squared(kappa, delta) distribution has density

    p(x) = {(delta/2)^(kappa/2) / Gamma(kappa/2)} x^(-(kappa+2)/2)
           exp{-delta/(2x)},   x > 0,

i.e. it is Inverse-Gamma(kappa/2, rate=delta/2). The Inverse-G-Wishart used
here is restricted to the fully connected graph, where it coincides with a
reparameterized Inverse-Wishart: a p x p draw with shape ``xi`` and scale
``Lambda`` is Inverse-Wishart with ``nu = xi - p + 1`` degrees of freedom and
the same scale (the density exponents -(nu+p+1)/2 and -(xi+2)/2 match).

All densities are evaluated in log space so that shapes of order n ~ 300 do
not overflow the Gamma function.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "InvChiSq",
    "InvGWishart",
    "GaussianMoment",
    "inv_chisq_logpdf",
    "inv_chisq_mean",
    "inv_chisq_variance",
    "inv_chisq_mean_of_inverse",
    "inv_chisq_mode",
    "inv_chisq_quantile",
    "sample_inv_chisq",
    "igw_mean_inverse",
    "igw_mean",
    "sample_igw",
    "gaussian_second_moment",
    "spd_project",
]


def spd_project(a: np.ndarray, *, rtol: float = 1e-8) -> np.ndarray:
    """Symmetrize ``a`` and verify it is positive definite via Cholesky.

    Asymmetry beyond ``rtol`` relative to the largest entry is rejected
    rather than silently absorbed.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > rtol * scale:
        raise ValueError("matrix is not symmetric")
    sym = (a + a.T) / 2.0
    try:
        np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError("matrix is not positive definite") from err
    return sym


@dataclass(frozen=True)
class InvChiSq:
    """Inverse-chi-squared with shape ``kappa`` > 0 and scale ``delta`` > 0."""

    kappa: float
    delta: float

    def __post_init__(self):
        if not (self.kappa > 0 and np.isfinite(self.kappa)):
            raise ValueError(f"kappa must be a positive real, got {self.kappa}")
        if not (self.delta > 0 and np.isfinite(self.delta)):
            raise ValueError(f"delta must be a positive real, got {self.delta}")


@dataclass(frozen=True)
class InvGWishart:
    """Inverse-G-Wishart on the fully connected graph.

    ``scale`` must be p x p symmetric positive definite and ``xi > 2p - 2``.
    """

    xi: float
    scale: np.ndarray = field(repr=False)

    def __post_init__(self):
        scale = spd_project(self.scale)
        scale.setflags(write=False)
        object.__setattr__(self, "scale", scale)
        p = scale.shape[0]
        if not (self.xi > 2 * p - 2):
            raise ValueError(f"xi must exceed 2p - 2 = {2 * p - 2}, got {self.xi}")

    @property
    def p(self) -> int:
        return self.scale.shape[0]


@dataclass(frozen=True)
class GaussianMoment:
    """First two moments of a Normal: mean ``mu`` and variance ``sigma2`` > 0."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and np.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")


def inv_chisq_logpdf(x, d: InvChiSq):
    """Log density of ``d`` at ``x`` (scalar or array, all entries > 0)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("inv_chisq_logpdf requires x > 0")
    k, dl = d.kappa, d.delta
    out = (
        0.5 * k * (np.log(dl) - np.log(2.0))
        - gammaln(0.5 * k)
        - 0.5 * (k + 2.0) * np.log(x)
        - 0.5 * dl / x
    )
    return float(out) if out.ndim == 0 else out


def inv_chisq_mean(d: InvChiSq) -> float:
    """E[X] = delta / (kappa - 2); defined only for kappa > 2."""
    if d.kappa <= 2:
        raise ValueError(f"mean undefined for kappa = {d.kappa} <= 2")
    return d.delta / (d.kappa - 2.0)


def inv_chisq_variance(d: InvChiSq) -> float:
    """Var[X] = 2 delta^2 / {(kappa-2)^2 (kappa-4)}; needs kappa > 4."""
    if d.kappa <= 4:
        raise ValueError(f"variance undefined for kappa = {d.kappa} <= 4")
    return 2.0 * d.delta**2 / ((d.kappa - 2.0) ** 2 * (d.kappa - 4.0))


def inv_chisq_mean_of_inverse(d: InvChiSq) -> float:
    """E[1/X] = kappa / delta."""
    return d.kappa / d.delta


def inv_chisq_mode(d: InvChiSq) -> float:
    """argmax of the density, delta / (kappa + 2)."""
    return d.delta / (d.kappa + 2.0)


def inv_chisq_quantile(d: InvChiSq, q) -> float:
    """Quantile function, via X = delta / chi2_kappa."""
    from scipy.stats import chi2

    return d.delta / chi2.ppf(1.0 - np.asarray(q, dtype=np.float64), d.kappa)


def sample_inv_chisq(d: InvChiSq, rng: np.random.Generator, size=None):
    """Draw from ``d`` as delta divided by a chi-squared(kappa) variate."""
    return d.delta / rng.chisquare(d.kappa, size=size)


def igw_mean_inverse(d: InvGWishart) -> np.ndarray:
    """E[X^{-1}] = (xi - p + 1) scale^{-1}, symmetric positive definite."""
    inv = np.linalg.inv(d.scale)
    return spd_project((d.xi - d.p + 1.0) * inv)


def igw_mean(d: InvGWishart) -> np.ndarray:
    """E[X] = scale / (xi - 2p); defined only for xi > 2p."""
    if d.xi <= 2 * d.p:
        raise ValueError(f"mean undefined for xi = {d.xi} <= 2p = {2 * d.p}")
    return d.scale / (d.xi - 2.0 * d.p)


def sample_igw(d: InvGWishart, rng: np.random.Generator, size=None):
    """Draw from ``d`` via the Inverse-Wishart mapping nu = xi - p + 1.

    Uses the Bartlett decomposition of Wishart(nu, scale^{-1}) and inverts.
    Returns a (p, p) array, or (size, p, p) when ``size`` is given.
    """
    p = d.p
    nu = d.xi - p + 1.0
    squeeze = size is None
    n_draws = 1 if squeeze else int(size)

    scale_inv = spd_project(np.linalg.inv(d.scale))
    chol = np.linalg.cholesky(scale_inv)

    bartlett = np.zeros((n_draws, p, p))
    rows, cols = np.tril_indices(p, k=-1)
    if rows.size:
        bartlett[:, rows, cols] = rng.standard_normal((n_draws, rows.size))
    for i in range(p):
        bartlett[:, i, i] = np.sqrt(rng.chisquare(nu - i, size=n_draws))

    factor = np.einsum("ij,njk->nik", chol, bartlett)
    wish = factor @ np.swapaxes(factor, -1, -2)
    draws = np.linalg.inv(wish)
    draws = (draws + np.swapaxes(draws, -1, -2)) / 2.0
    return draws[0] if squeeze else draws


def gaussian_second_moment(g: GaussianMoment) -> float:
    """E[X^2] = sigma2 + mu^2."""
    return g.sigma2 + g.mu**2

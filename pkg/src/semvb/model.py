"""Model containers, factor-structure bookkeeping, simulation and ingestion.

The observation model ties an n x m outcome matrix to p latent factors:

    y_i = nu + Loading @ eta_i + eps_i,   eps_i ~ N(0, diag(psi)),
    eta_i ~ N(0, sigma2)  (p = 1)   or   eta_i ~ N(0, Sigma)  (p >= 2),

with the loading matrix block-diagonal over the factor blocks and the first
indicator of every block pinned to loading 1 for identifiability.
"""

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .distributions import spd_project

__all__ = [
    "FactorSpec",
    "Dataset",
    "Hyperparameters",
    "TrueParameters",
    "simulate",
    "block_diagonal_loading",
    "load_csv",
    "parameter_names",
    "true_values",
]


@dataclass(frozen=True)
class FactorSpec:
    """Ordered partition of dataset columns into factor blocks.

    ``blocks[k]`` lists the indicator columns of factor k; the first entry of
    each block is the reference indicator whose loading is fixed at 1. Every
    block needs at least two indicators, otherwise the factor has no free
    loading and is vacuous.
    """

    names: tuple
    blocks: tuple

    def __post_init__(self):
        names = tuple(str(x) for x in self.names)
        blocks = tuple(tuple(str(c) for c in b) for b in self.blocks)
        if len(names) != len(blocks) or not blocks:
            raise ValueError("need one name per factor block, and at least one block")
        for name, block in zip(names, blocks):
            if len(block) < 2:
                raise ValueError(
                    f"factor {name!r} has {len(block)} indicator(s); at least 2 required"
                )
        flat = [c for b in blocks for c in b]
        if len(set(flat)) != len(flat):
            raise ValueError("a column appears in more than one factor block")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "blocks", blocks)

    @property
    def p(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def block_sizes(self) -> tuple:
        return tuple(len(b) for b in self.blocks)

    @property
    def columns(self) -> tuple:
        return tuple(c for b in self.blocks for c in b)

    def column_factor(self) -> np.ndarray:
        """Factor index of each column, in spec column order."""
        return np.repeat(np.arange(self.p), self.block_sizes)

    def reference_mask(self) -> np.ndarray:
        """True where the column is a block's reference indicator."""
        mask = np.zeros(self.m, dtype=bool)
        mask[np.cumsum((0,) + self.block_sizes[:-1])] = True
        return mask

    @classmethod
    def from_dict(cls, doc: dict) -> "FactorSpec":
        try:
            factors = doc["factors"]
            names = tuple(f["name"] for f in factors)
            blocks = tuple(tuple(f["indicators"]) for f in factors)
        except (KeyError, TypeError) as err:
            raise ValueError(
                'factor spec must look like {"factors": [{"name": ..., '
                '"indicators": [...]}, ...]}'
            ) from err
        return cls(names=names, blocks=blocks)

    def to_dict(self) -> dict:
        return {
            "factors": [
                {"name": n, "indicators": list(b)}
                for n, b in zip(self.names, self.blocks)
            ]
        }

    @classmethod
    def from_json(cls, path) -> "FactorSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Dataset:
    """Immutable n x m outcome matrix with its factor specification.

    Columns are stored in spec order; row order is preserved end-to-end
    because bootstrap indexing depends on it.
    """

    y: np.ndarray = field(repr=False)
    spec: FactorSpec

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if y.ndim != 2:
            raise ValueError(f"y must be 2-D, got shape {y.shape}")
        if y.shape[0] < 2:
            raise ValueError(f"need at least 2 rows, got {y.shape[0]}")
        if y.shape[1] != self.spec.m:
            raise ValueError(
                f"data has {y.shape[1]} columns but the spec names {self.spec.m}"
            )
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    @property
    def columns(self) -> tuple:
        return self.spec.columns

    def take_rows(self, idx) -> "Dataset":
        """New Dataset from the given row indices (bootstrap/jackknife)."""
        return Dataset(y=self.y[np.asarray(idx)], spec=self.spec)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.y.copy(), columns=list(self.columns))


@dataclass(frozen=True)
class Hyperparameters:
    """Prior constants of the single- and multi-factor models.

    Defaults follow the applied choice mu_lambda = 0, sd_nu = 10 (so
    sigma2_nu = 100), sd_lambda = 1, kappa_psi = 1, delta_psi = 0.01; for
    multi-factor fits xi_Sigma = 2p + 10 and Lambda_Sigma = 10 I unless set
    explicitly, and for single-factor fits kappa_sigma2 = 1,
    delta_sigma2 = 0.01 by analogy.
    """

    mu_lambda: float = 0.0
    sigma2_nu: float = 100.0
    sigma2_lambda: float = 1.0
    kappa_psi: float = 1.0
    delta_psi: float = 0.01
    kappa_sigma2: float = 1.0
    delta_sigma2: float = 0.01
    xi_Sigma: float = None
    Lambda_Sigma: np.ndarray = None

    def __post_init__(self):
        for name in ("sigma2_nu", "sigma2_lambda", "kappa_psi", "delta_psi",
                     "kappa_sigma2", "delta_sigma2"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.Lambda_Sigma is not None:
            lam = spd_project(self.Lambda_Sigma)
            lam.setflags(write=False)
            object.__setattr__(self, "Lambda_Sigma", lam)

    def resolve(self, spec: FactorSpec) -> "Hyperparameters":
        """Fill in the p-dependent multi-factor defaults for ``spec``."""
        p = spec.p
        xi = self.xi_Sigma if self.xi_Sigma is not None else 2.0 * p + 10.0
        lam = self.Lambda_Sigma if self.Lambda_Sigma is not None else 10.0 * np.eye(p)
        if lam.shape != (p, p):
            raise ValueError(
                f"Lambda_Sigma has shape {lam.shape}, expected ({p}, {p})"
            )
        if p >= 2 and not xi > 2 * p:
            raise ValueError(
                f"xi_Sigma must exceed 2p = {2 * p} for the Sigma point "
                f"estimate to exist, got {xi}"
            )
        if not xi > 2 * p - 2:
            raise ValueError(f"xi_Sigma must exceed 2p - 2 = {2 * p - 2}, got {xi}")
        return replace(self, xi_Sigma=float(xi), Lambda_Sigma=lam)

    @classmethod
    def from_dict(cls, doc: dict) -> "Hyperparameters":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter fields: {sorted(unknown)}")
        doc = dict(doc)
        if doc.get("Lambda_Sigma") is not None:
            doc["Lambda_Sigma"] = np.asarray(doc["Lambda_Sigma"], dtype=np.float64)
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = {
            "mu_lambda": self.mu_lambda,
            "sigma2_nu": self.sigma2_nu,
            "sigma2_lambda": self.sigma2_lambda,
            "kappa_psi": self.kappa_psi,
            "delta_psi": self.delta_psi,
            "kappa_sigma2": self.kappa_sigma2,
            "delta_sigma2": self.delta_sigma2,
        }
        if self.xi_Sigma is not None:
            doc["xi_Sigma"] = self.xi_Sigma
        if self.Lambda_Sigma is not None:
            doc["Lambda_Sigma"] = self.Lambda_Sigma.tolist()
        return doc

    @classmethod
    def from_json(cls, path) -> "Hyperparameters":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrueParameters:
    """Generating parameters: intercepts, loadings, noise and factor scale.

    ``lam`` carries all m loadings with the reference entries equal to 1.
    Exactly one of ``sigma2`` (p = 1) or ``Sigma`` (p >= 2) is set.
    """

    nu: np.ndarray
    lam: np.ndarray
    psi: np.ndarray
    sigma2: float = None
    Sigma: np.ndarray = None

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=np.float64)
        lam = np.asarray(self.lam, dtype=np.float64)
        psi = np.asarray(self.psi, dtype=np.float64)
        if not (nu.shape == lam.shape == psi.shape) or nu.ndim != 1:
            raise ValueError("nu, lambda and psi must be 1-D vectors of equal length")
        if np.any(psi <= 0):
            raise ValueError("psi entries must be positive")
        if (self.sigma2 is None) == (self.Sigma is None):
            raise ValueError("set exactly one of sigma2 (p=1) or Sigma (p>=2)")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        Sigma = self.Sigma
        if Sigma is not None:
            Sigma = spd_project(Sigma)
            Sigma.setflags(write=False)
        for name, arr in (("nu", nu), ("lam", lam), ("psi", psi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "Sigma", Sigma)

    @property
    def p(self) -> int:
        return 1 if self.sigma2 is not None else self.Sigma.shape[0]

    def factor_cov(self) -> np.ndarray:
        if self.sigma2 is not None:
            return np.array([[self.sigma2]])
        return self.Sigma

    def validate_against(self, spec: FactorSpec) -> None:
        if self.nu.shape[0] != spec.m:
            raise ValueError(
                f"parameter vectors have length {self.nu.shape[0]}, spec m = {spec.m}"
            )
        if self.p != spec.p:
            raise ValueError(f"parameters are {self.p}-factor, spec has p = {spec.p}")
        ref = spec.reference_mask()
        if not np.all(self.lam[ref] == 1.0):
            raise ValueError("reference loadings (first of each block) must equal 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrueParameters":
        doc = dict(doc)
        lam = doc.pop("lambda", doc.pop("lam", None))
        if lam is None:
            raise ValueError('true-parameter document needs a "lambda" field')
        sigma = doc.pop("Sigma", None)
        return cls(
            nu=np.asarray(doc.pop("nu")),
            lam=np.asarray(lam),
            psi=np.asarray(doc.pop("psi")),
            sigma2=doc.pop("sigma2", None),
            Sigma=None if sigma is None else np.asarray(sigma, dtype=np.float64),
        )

    def to_dict(self) -> dict:
        doc = {
            "nu": self.nu.tolist(),
            "lambda": self.lam.tolist(),
            "psi": self.psi.tolist(),
        }
        if self.sigma2 is not None:
            doc["sigma2"] = self.sigma2
        else:
            doc["Sigma"] = self.Sigma.tolist()
        return doc

    @classmethod
    def from_json(cls, path) -> "TrueParameters":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def block_diagonal_loading(lam, spec: FactorSpec) -> np.ndarray:
    """Expand the length-m loading vector into the m x p block-diagonal matrix.

    Column k carries block k's loadings; everything else is zero. The first
    entry of every block must be 1 (the identifiability pin).
    """
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (spec.m,):
        raise ValueError(f"lambda has shape {lam.shape}, expected ({spec.m},)")
    if not np.all(lam[spec.reference_mask()] == 1.0):
        raise ValueError("reference loadings (first of each block) must equal 1")
    loading = np.zeros((spec.m, spec.p))
    loading[np.arange(spec.m), spec.column_factor()] = lam
    return loading


def simulate(
    params: TrueParameters,
    spec: FactorSpec,
    n: int,
    rng: np.random.Generator,
) -> Dataset:
    """Generate n rows: eta_i ~ N(0, factor cov), y_i = nu + Loading eta_i + eps_i."""
    params.validate_against(spec)
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    cov = params.factor_cov()
    chol = np.linalg.cholesky(cov)
    eta = rng.standard_normal((n, spec.p)) @ chol.T
    loading = block_diagonal_loading(params.lam, spec)
    eps = rng.standard_normal((n, spec.m)) * np.sqrt(params.psi)
    y = params.nu + eta @ loading.T + eps
    return Dataset(y=y, spec=spec)


def load_csv(path, spec: FactorSpec) -> Dataset:
    """Read a header-ed CSV and bind its columns to ``spec`` by name.

    Extra columns are ignored with a warning; a missing spec column, a
    non-numeric cell, or fewer than two rows is an error naming the offender.
    """
    frame = pd.read_csv(path)
    missing = [c for c in spec.columns if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing required column(s) {missing}")
    extra = [c for c in frame.columns if c not in spec.columns]
    if extra:
        warnings.warn(f"{path}: ignoring extra column(s) {extra}", stacklevel=2)
    frame = frame[list(spec.columns)]
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna()
    if bad.values.any():
        row = int(np.argmax(bad.values.any(axis=1)))
        col = bad.columns[int(np.argmax(bad.values[row]))]
        raise ValueError(
            f"{path}: non-numeric or missing value at row {row + 2} "
            f"(1-based, after header), column {col!r}"
        )
    if len(numeric) < 2:
        raise ValueError(f"{path}: need at least 2 data rows, found {len(numeric)}")
    return Dataset(y=numeric.to_numpy(dtype=np.float64), spec=spec)


def parameter_names(spec: FactorSpec, include_eta: bool = False, n: int = 0) -> list:
    """Canonical parameter names, in reporting order.

    Single factor: nu[j], lambda[j] (j >= 2), psi[j], sigma2.
    Multi factor: nu[k][j'], lambda[k][j'] (j' >= 2), psi[k][j'],
    Sigma[r][c] for r <= c. Indices are 1-based. Pinned reference loadings
    are constants and carry no name.
    """
    names = []
    if spec.p == 1:
        m = spec.m
        names += [f"nu[{j}]" for j in range(1, m + 1)]
        names += [f"lambda[{j}]" for j in range(2, m + 1)]
        names += [f"psi[{j}]" for j in range(1, m + 1)]
        names.append("sigma2")
    else:
        for k, mk in enumerate(spec.block_sizes, start=1):
            names += [f"nu[{k}][{j}]" for j in range(1, mk + 1)]
        for k, mk in enumerate(spec.block_sizes, start=1):
            names += [f"lambda[{k}][{j}]" for j in range(2, mk + 1)]
        for k, mk in enumerate(spec.block_sizes, start=1):
            names += [f"psi[{k}][{j}]" for j in range(1, mk + 1)]
        for r in range(1, spec.p + 1):
            for c in range(r, spec.p + 1):
                names.append(f"Sigma[{r}][{c}]")
    if include_eta:
        for i in range(1, n + 1):
            for k in range(1, spec.p + 1):
                names.append(f"eta[{i}][{k}]")
    return names


def column_names(spec: FactorSpec, base: str, free_only: bool = False) -> list:
    """Names for one per-column parameter family (nu/lambda/psi)."""
    out = []
    if spec.p == 1:
        for j in range(1, spec.m + 1):
            if free_only and j == 1:
                continue
            out.append(f"{base}[{j}]")
        return out
    for k, mk in enumerate(spec.block_sizes, start=1):
        for j in range(1, mk + 1):
            if free_only and j == 1:
                continue
            out.append(f"{base}[{k}][{j}]")
    return out


def true_values(params: TrueParameters, spec: FactorSpec) -> dict:
    """Map canonical parameter names to their generating values."""
    params.validate_against(spec)
    out = {}
    out.update(zip(column_names(spec, "nu"), params.nu))
    free = ~spec.reference_mask()
    out.update(zip(column_names(spec, "lambda", free_only=True), params.lam[free]))
    out.update(zip(column_names(spec, "psi"), params.psi))
    if spec.p == 1:
        out["sigma2"] = params.sigma2
    else:
        for r in range(spec.p):
            for c in range(r, spec.p):
                out[f"Sigma[{r + 1}][{c + 1}]"] = params.Sigma[r, c]
    return {k: float(v) for k, v in out.items()}

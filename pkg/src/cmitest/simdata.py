"""Synthetic benchmark designs with closed-form conditional oracles.

Both benchmark examples share one Gaussian covariate design: a 50-dimensional
joint normal (Z first 25 coordinates, X last 25) with AR-style covariance
Sigma_ij = 0.3^|i-j|. The response is univariate:

* example "a1": Y = beta_Z' Z + beta_X' X + eps          (linear)
* example "a2": Y = beta_Z' Z + (beta_X' X)^2 + eps      (nonlinear)

with eps ~ N(0, 0.5^2) independent of (X, Z). Scenario "null" sets
beta_X = 0, so E[Y|X,Z] = E[Y|Z]; "sparse" and "dense" are the two
alternatives. The Gaussian structure gives exact conditionals X | Z = z
(mean Sigma_XZ Sigma_ZZ^{-1} z, Schur-complement covariance), which back
the oracle sampler and oracle conditional-mean functions.

Draws use the counter-based Philox generator so a (seed -> dataset) mapping
is stable regardless of how replications are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .dataset import Dataset

EXAMPLES = ("a1", "a2")
SCENARIOS = ("null", "sparse", "dense")

DIM_Z = 25
DIM_X = 25
NOISE_SD = 0.5
_AR_RHO = 0.3


@dataclass(frozen=True)
class GaussianDesign:
    """Joint covariance, its Cholesky factor, and the X|Z conditional pieces."""

    sigma: np.ndarray        # (50, 50)
    chol: np.ndarray         # lower Cholesky of sigma
    cond_coef: np.ndarray    # (25, 25): Sigma_XZ Sigma_ZZ^{-1}
    cond_cov: np.ndarray     # (25, 25): Schur complement
    cond_chol: np.ndarray    # lower Cholesky of cond_cov


@dataclass(frozen=True)
class CoefficientSpec:
    beta_z: np.ndarray  # (25,)
    beta_x: np.ndarray  # (25,)


def make_design() -> GaussianDesign:
    d = DIM_Z + DIM_X
    idx = np.arange(d)
    sigma = _AR_RHO ** np.abs(idx[:, None] - idx[None, :])
    chol = cholesky(sigma, lower=True)
    sigma_zz = sigma[:DIM_Z, :DIM_Z]
    sigma_xz = sigma[DIM_Z:, :DIM_Z]
    # Sigma_XZ Sigma_ZZ^{-1} via triangular solves; no explicit inverse.
    zz_chol = cholesky(sigma_zz, lower=True)
    cond_coef = cho_solve((zz_chol, True), sigma_xz.T).T
    cond_cov = sigma[DIM_Z:, DIM_Z:] - cond_coef @ sigma_xz.T
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    cond_chol = cholesky(cond_cov, lower=True)
    return GaussianDesign(sigma=sigma, chol=chol, cond_coef=cond_coef,
                          cond_cov=cond_cov, cond_chol=cond_chol)


def coefficients(example: str, scenario: str) -> CoefficientSpec:
    """Benchmark regression coefficients for the given example and scenario."""
    _check_example_scenario(example, scenario)
    beta_z = np.zeros(DIM_Z)
    beta_z[:2] = 1.0
    beta_x = np.zeros(DIM_X)
    if scenario == "sparse":
        if example == "a1":
            beta_x[:2] = 0.2 / np.sqrt(2.0)
        else:
            beta_x[:5] = 10.0 ** -0.5
    elif scenario == "dense":
        if example == "a1":
            beta_x[:] = 0.2 / np.sqrt(25.0)
        else:
            beta_x[:12] = 24.0 ** -0.5
    return CoefficientSpec(beta_z=beta_z, beta_x=beta_x)


def gen_example(example: str, scenario: str, n: int, seed: int,
                design: GaussianDesign | None = None) -> Dataset:
    """Draw one dataset of n observations from the given benchmark scenario."""
    _check_example_scenario(example, scenario)
    if n < 4:
        raise ValueError(f"need n >= 4, got {n}")
    design = design or make_design()
    coef = coefficients(example, scenario)
    rng = np.random.Generator(np.random.Philox(seed))
    joint = rng.standard_normal((n, DIM_Z + DIM_X)) @ design.chol.T
    z = joint[:, :DIM_Z]
    x = joint[:, DIM_Z:]
    eps = NOISE_SD * rng.standard_normal(n)
    signal = x @ coef.beta_x
    if example == "a2":
        signal = signal**2
    y = z @ coef.beta_z + signal + eps
    return Dataset(x=x, y=y[:, None], z=z)


def oracle_conditional_sampler(design: GaussianDesign, z, M: int, seed: int) -> np.ndarray:
    """M exact draws from X | Z = z (M x 25), deterministic given seed."""
    zv = np.asarray(z, dtype=np.float64).ravel()
    if zv.shape[0] != DIM_Z:
        raise ValueError(f"z must have {DIM_Z} coordinates, got {zv.shape[0]}")
    if not np.all(np.isfinite(zv)):
        raise ValueError("z must be finite")
    rng = np.random.Generator(np.random.Philox(seed))
    mean = design.cond_coef @ zv
    return mean + rng.standard_normal((int(M), DIM_X)) @ design.cond_chol.T


def oracle_g_y(example: str, scenario: str, design: GaussianDesign, z) -> float:
    """Exact conditional mean E[Y | Z = z] for the benchmark response."""
    _check_example_scenario(example, scenario)
    zv = np.asarray(z, dtype=np.float64).ravel()
    coef = coefficients(example, scenario)
    mu = design.cond_coef @ zv
    base = float(coef.beta_z @ zv)
    proj = float(coef.beta_x @ mu)
    if example == "a1":
        return base + proj
    quad_var = float(coef.beta_x @ design.cond_cov @ coef.beta_x)
    return base + proj**2 + quad_var


def _check_example_scenario(example: str, scenario: str) -> None:
    if example not in EXAMPLES:
        raise ValueError(f"unknown example {example!r}; expected one of {EXAMPLES}")
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")

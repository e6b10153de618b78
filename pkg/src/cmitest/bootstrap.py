"""Wild-bootstrap calibration of the cross-fitted statistic.

Each replicate reweights the off-diagonal entries of the per-fold H
matrices by products e_j e_k of i.i.d. multipliers drawn over the whole
index set (one vector per replicate, shared by both folds). Rademacher
signs are the default; standard-normal multipliers sit behind a flag.

The p-value is the fraction of replicates at least as large as the
observed statistic, and the test rejects when it falls below the level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .statistic import StatKernelMatrices, t_hat

RADEMACHER = "rademacher"
STANDARD_NORMAL = "standard_normal"
MULTIPLIER_FAMILIES = (RADEMACHER, STANDARD_NORMAL)


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 1000
    multiplier: str = RADEMACHER
    seed: int = 0

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValueError("need at least one bootstrap replicate")
        if self.multiplier not in MULTIPLIER_FAMILIES:
            raise ValueError(
                f"unknown multiplier family {self.multiplier!r}; expected one of {MULTIPLIER_FAMILIES}"
            )


@dataclass
class TestResult:
    """Outcome of one conditional-mean-independence test."""

    statistic: float
    boot: np.ndarray
    p_value: float
    level: float
    reject: bool
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_value <= 1.0):
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        if self.reject != (self.p_value < self.level):
            raise ValueError("decision inconsistent with p-value and level")


def multiplier_matrix(cfg: BootstrapConfig, n: int) -> np.ndarray:
    """(replicates x n) multiplier draws, deterministic given the seed."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.multiplier == RADEMACHER:
        return rng.integers(0, 2, size=(cfg.replicates, n)).astype(np.float64) * 2.0 - 1.0
    return rng.standard_normal((cfg.replicates, n))


def replicates_from_multipliers(matrices: StatKernelMatrices, mult: np.ndarray) -> np.ndarray:
    """Bootstrap statistics for explicit multiplier rows (one row per replicate)."""
    n = matrices.folds.n
    if mult.ndim != 2 or mult.shape[1] != n:
        raise ValueError(f"multipliers must be (B, {n}), got {mult.shape}")
    out = np.zeros(mult.shape[0])
    for h, idx in zip((matrices.h1, matrices.h2), matrices.folds.folds):
        e = mult[:, idx]
        q = idx.size
        quad = np.einsum("bj,jk,bk->b", e, h, e, optimize=True)
        diag = (e**2) @ np.diagonal(h)
        out += (quad - diag) / (q * (q - 1))
    return out / 2.0


def wild_bootstrap(matrices: StatKernelMatrices, cfg: BootstrapConfig) -> np.ndarray:
    """Vector of bootstrap replicates of the statistic under the null."""
    return replicates_from_multipliers(matrices, multiplier_matrix(cfg, matrices.folds.n))


def p_value(t: float, boot) -> float:
    """Fraction of replicates at least as large as the observed statistic.

    Ties count toward acceptance (replicates equal to t are included), so a
    degenerate all-zero bootstrap yields p = 1 rather than a spurious
    rejection; for continuously distributed statistics this matches the
    strict-inequality count almost surely.
    """
    arr = np.asarray(boot, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty bootstrap sample")
    return float(np.mean(arr >= t))


def decide(p: float, gamma: float) -> bool:
    """Reject exactly when p < gamma (strict, so p = gamma keeps the null)."""
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"level must lie in (0, 1), got {gamma}")
    return bool(p < gamma)


def run_bootstrap_test(matrices: StatKernelMatrices, cfg: BootstrapConfig,
                       gamma: float, diagnostics: dict[str, Any] | None = None) -> TestResult:
    """Statistic, replicates, p-value, and decision in one pass."""
    stat = t_hat(matrices)
    boot = wild_bootstrap(matrices, cfg)
    p = p_value(stat, boot)
    return TestResult(statistic=stat, boot=boot, p_value=p, level=gamma,
                      reject=decide(p, gamma), diagnostics=diagnostics or {})

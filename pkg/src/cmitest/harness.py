"""Monte-Carlo study runner: empirical size, power, and size-adjusted power.

A study repeats the test on freshly simulated benchmark datasets, one
derived seed per replication, and reports the rejection rate with its
binomial standard error. Two statistic variants are supported:

* ``estimated``: the full pipeline (four networks trained per replication).
* ``oracle``: exact nuisances from the closed-form Gaussian design; no
  training, so hundreds of replications run in minutes.

The oracle variant can optionally contaminate both nuisances with a
deterministic mean shift of size n^(-a) each (one knob, ``contaminate_exponent``),
which exercises the double-robustness regime where the product of nuisance
errors still decays faster than root-n.

Replications run in parallel over processes; the worker budget comes from
the CMITEST_WORKERS environment variable (default: available CPUs). Reports
are identical regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import os
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed, parallel_config

from . import simdata
from .bootstrap import run_bootstrap_test
from .pipeline import TestConfig, derived_seed, kernel_specs_for, run_cmi_test
from .statistic import oracle_kernel_matrices, split_folds

VARIANTS = ("estimated", "oracle")

_TAG_DATA = 11
_TAG_TEST = 12
_TAG_DRAWS = 13
_TAG_BOOT = 14


@dataclass(frozen=True)
class StudySpec:
    """One cell of the simulation protocol: scenario, sample size, variant."""

    example: str
    scenario: str
    n: int
    replications: int
    variant: str = "estimated"
    level: float = 0.05
    seed: int = 0
    contaminate_exponent: float | None = None
    test_config: TestConfig | None = None

    def __post_init__(self) -> None:
        simdata._check_example_scenario(self.example, self.scenario)
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.contaminate_exponent is not None:
            if self.variant != "oracle":
                raise ValueError("nuisance contamination applies to the oracle variant only")
            if self.contaminate_exponent < 0:
                raise ValueError("contaminate_exponent must be non-negative")
        if not (0.0 < self.level < 1.0):
            raise ValueError(f"level must lie in (0, 1), got {self.level}")

    def resolved_config(self) -> TestConfig:
        base = self.test_config if self.test_config is not None else TestConfig()
        return dataclasses.replace(base, level=self.level)


@dataclass(frozen=True)
class ReplicationRecord:
    index: int
    seed: int
    statistic: float
    p_value: float
    reject: bool
    error: str | None = None


@dataclass
class StudyReport:
    spec: StudySpec
    rejection_rate: float
    binomial_se: float
    records: list[ReplicationRecord]
    n_failed: int
    elapsed_seconds: float = field(default=0.0)

    @property
    def statistics(self) -> np.ndarray:
        return np.array([r.statistic for r in self.records if r.error is None])


def worker_count() -> int:
    env = os.environ.get("CMITEST_WORKERS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _replication_seed(spec_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([spec_seed, index]).generate_state(1, dtype=np.uint64)[0])


def _run_replication(spec: StudySpec, index: int) -> ReplicationRecord:
    seed = _replication_seed(spec.seed, index)
    try:
        data = simdata.gen_example(spec.example, spec.scenario, spec.n,
                                   derived_seed(seed, _TAG_DATA))
        if spec.variant == "estimated":
            cfg = dataclasses.replace(spec.resolved_config(), seed=derived_seed(seed, _TAG_TEST))
            result = run_cmi_test(data, cfg)
        else:
            result = _run_oracle(spec, data, seed)
        return ReplicationRecord(index=index, seed=seed, statistic=result.statistic,
                                 p_value=result.p_value, reject=result.reject)
    except Exception as exc:  # recorded per replication; the study aborts past 5%
        return ReplicationRecord(index=index, seed=seed, statistic=float("nan"),
                                 p_value=float("nan"), reject=False,
                                 error=f"{type(exc).__name__}: {exc}")


def _run_oracle(spec: StudySpec, data, seed: int):
    cfg = spec.resolved_config()
    design = simdata.make_design()
    folds = split_folds(data.n)
    kx, kz, _ = kernel_specs_for(data, cfg, folds)

    g_shift = 0.0
    x_shift = np.zeros(simdata.DIM_X)
    if spec.contaminate_exponent is not None:
        delta = float(spec.n) ** (-spec.contaminate_exponent)
        g_shift = delta
        # unit-length direction, so the sampler's mean error has size delta
        x_shift = np.full(simdata.DIM_X, delta / np.sqrt(simdata.DIM_X))

    def true_g(z):
        return simdata.oracle_g_y(spec.example, spec.scenario, design, z) + g_shift

    def sampler(z, m, draw_seed):
        return simdata.oracle_conditional_sampler(design, z, m, draw_seed) + x_shift

    matrices = oracle_kernel_matrices(data, true_g, sampler, cfg.mc_samples, kx, kz,
                                      seed=derived_seed(seed, _TAG_DRAWS))
    boot_cfg = dataclasses.replace(cfg.bootstrap, seed=derived_seed(seed, _TAG_BOOT))
    diagnostics = {"variant": "oracle", "contaminate_exponent": spec.contaminate_exponent}
    return run_bootstrap_test(matrices, boot_cfg, cfg.level, diagnostics)


def run_study(spec: StudySpec, workers: int | None = None) -> StudyReport:
    """Run all replications and aggregate the rejection rate.

    More than 5% failed replications aborts with the first error message.
    """
    t0 = time.perf_counter()
    n_workers = worker_count() if workers is None else max(1, workers)
    if n_workers == 1 or spec.replications == 1:
        records = [_run_replication(spec, r) for r in range(spec.replications)]
    else:
        with parallel_config(backend="loky", inner_max_num_threads=1):
            records = Parallel(n_jobs=n_workers)(
                delayed(_run_replication)(spec, r) for r in range(spec.replications)
            )
    failed = [r for r in records if r.error is not None]
    if len(failed) > 0.05 * spec.replications:
        raise RuntimeError(
            f"{len(failed)}/{spec.replications} replications failed; first error: {failed[0].error}"
        )
    ok = [r for r in records if r.error is None]
    rate = float(np.mean([r.reject for r in ok]))
    se = float(np.sqrt(rate * (1.0 - rate) / len(ok)))
    return StudyReport(spec=spec, rejection_rate=rate, binomial_se=se,
                       records=records, n_failed=len(failed),
                       elapsed_seconds=time.perf_counter() - t0)


def size_adjusted_power(null_statistics, alt_statistics, gamma: float) -> float:
    """Power against the empirical null critical value.

    The (1 - gamma) empirical quantile of the null statistic sample becomes
    the critical value; power is the fraction of alternative statistics
    strictly above it.
    """
    null_stats = np.asarray(null_statistics, dtype=np.float64)
    alt_stats = np.asarray(alt_statistics, dtype=np.float64)
    if null_stats.size == 0 or alt_stats.size == 0:
        raise ValueError("need non-empty null and alternative statistic samples")
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"level must lie in (0, 1), got {gamma}")
    critical = np.quantile(null_stats, 1.0 - gamma, method="higher")
    return float(np.mean(alt_stats > critical))


def study_record(report: StudyReport) -> dict:
    """Deterministic JSON-ready record of a study (wall-clock excluded)."""
    spec = report.spec
    cfg = spec.resolved_config()
    return {
        "schema": "cmitest/study/v1",
        "spec": {
            "example": spec.example,
            "scenario": spec.scenario,
            "n": spec.n,
            "replications": spec.replications,
            "variant": spec.variant,
            "level": spec.level,
            "seed": spec.seed,
            "contaminate_exponent": spec.contaminate_exponent,
        },
        "test_config": dataclasses.asdict(cfg),
        "rejection_rate": report.rejection_rate,
        "binomial_se": report.binomial_se,
        "n_failed": report.n_failed,
        "replications": [
            {
                "index": r.index,
                "seed": r.seed,
                "statistic": None if r.error is not None else r.statistic,
                "p_value": None if r.error is not None else r.p_value,
                "reject": r.reject,
                "error": r.error,
            }
            for r in report.records
        ],
    }

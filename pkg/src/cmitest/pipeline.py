"""End-to-end conditional mean independence test on one dataset.

Order of operations: seeded row shuffle, contiguous two-fold split, a
generator ensemble and a regressor ensemble trained per fold (each on the
fold it does not score), cross-fitted conditional draws and mean
predictions, statistic kernel matrices, wild bootstrap, decision. No
observation is ever scored by a network that saw it during training.

Everything downstream of the master seed is deterministic: component seeds
are derived from it with fixed tags, and each observation's conditional
draws get their own derived stream, so results do not depend on scheduling.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import BootstrapConfig, TestResult, run_bootstrap_test
from .dataset import Dataset
from .generator import GeneratorTrainConfig, train_generator, sample_conditional
from .kernels import FAMILIES, LAPLACIAN, KernelSpec, median_heuristic
from .regressor import RegressorTrainConfig, train_regressor, predict_mean
from .statistic import split_folds, stat_kernel_matrices

MIN_FOLD_ROWS = 8

_TAG_SHUFFLE = 1
_TAG_GENERATOR = 2   # + fold index
_TAG_REGRESSOR = 4   # + fold index
_TAG_SAMPLING = 6
_TAG_BOOTSTRAP = 7


@dataclass(frozen=True)
class TestConfig:
    """Everything the test needs beyond the data; defaults mirror the benchmarks."""

    kernel_family: str = LAPLACIAN
    kx_bandwidth: float | None = None  # None: median heuristic
    kz_bandwidth: float | None = None
    bandwidths_per_fold: bool = False
    standardize_z_kernel: bool = False
    mc_samples: int = 64
    # Independently seeded nets per fold whose outputs are pooled: predictions
    # averaged, conditional draws split evenly. Averaging away seed-to-seed
    # training variance shrinks the product of nuisance errors that drives
    # finite-sample size inflation.
    generator_ensemble: int = 2
    regressor_ensemble: int = 2
    level: float = 0.05
    seed: int = 0
    shuffle: bool = True
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    generator: GeneratorTrainConfig = field(default_factory=GeneratorTrainConfig)
    regressor: RegressorTrainConfig = field(default_factory=RegressorTrainConfig)

    def __post_init__(self) -> None:
        if self.kernel_family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.kernel_family!r}")
        for name, bw in (("kx_bandwidth", self.kx_bandwidth), ("kz_bandwidth", self.kz_bandwidth)):
            if bw is not None and (not np.isfinite(bw) or bw <= 0):
                raise ValueError(f"{name} must be positive and finite when fixed")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be a positive integer")
        if self.generator_ensemble < 1 or self.regressor_ensemble < 1:
            raise ValueError("ensemble sizes must be positive integers")
        if self.mc_samples < self.generator_ensemble:
            raise ValueError("mc_samples must be at least the generator ensemble size")
        if not (0.0 < self.level < 1.0):
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


def derived_seed(master: int, *tags: int) -> int:
    """Stable child seed for a (master, tags...) path."""
    return int(np.random.SeedSequence([master, *tags]).generate_state(1, dtype=np.uint64)[0])


def _resolve_bandwidth(fixed: float | None, points: np.ndarray, family: str, label: str) -> float:
    if fixed is not None:
        return float(fixed)
    try:
        return median_heuristic(points, family)
    except ValueError as exc:
        raise ValueError(f"bandwidth selection for {label}: {exc}") from exc


def kernel_specs_for(data: Dataset, cfg: TestConfig,
                     folds=None) -> tuple[list[KernelSpec], list[KernelSpec], np.ndarray]:
    """Per-fold (kx, kz) specs plus the Z matrix actually used for K_Z.

    With bandwidths_per_fold each scoring fold gets its own median-heuristic
    bandwidth; otherwise one full-sample bandwidth is shared.
    """
    z_for_kernel = data.z
    if cfg.standardize_z_kernel:
        scale = data.z.std(axis=0)
        scale = np.where(scale > 0.0, scale, 1.0)
        z_for_kernel = (data.z - data.z.mean(axis=0)) / scale
    fam = cfg.kernel_family
    if cfg.bandwidths_per_fold and folds is not None:
        kx = [KernelSpec(fam, _resolve_bandwidth(cfg.kx_bandwidth, data.x[idx], fam, "K_X"))
              for idx in folds.folds]
        kz = [KernelSpec(fam, _resolve_bandwidth(cfg.kz_bandwidth, z_for_kernel[idx], fam, "K_Z"))
              for idx in folds.folds]
    else:
        kx = [KernelSpec(fam, _resolve_bandwidth(cfg.kx_bandwidth, data.x, fam, "K_X"))] * 2
        kz = [KernelSpec(fam, _resolve_bandwidth(cfg.kz_bandwidth, z_for_kernel, fam, "K_Z"))] * 2
    return kx, kz, z_for_kernel


def run_cmi_test(data: Dataset, cfg: TestConfig) -> TestResult:
    """Run the full cross-fitted test and return the calibrated decision."""
    if data.n < 2 * MIN_FOLD_ROWS:
        raise ValueError(
            f"n = {data.n} leaves folds too small to train on; need n >= {2 * MIN_FOLD_ROWS}"
        )

    if cfg.shuffle:
        order = np.random.default_rng([cfg.seed, _TAG_SHUFFLE]).permutation(data.n)
        data = data.permuted(order)

    folds = split_folds(data.n)
    kx_specs, kz_specs, z_for_kernel = kernel_specs_for(data, cfg, folds)
    kernel_data = Dataset(x=data.x, y=data.y, z=z_for_kernel)

    m_draws = cfg.mc_samples
    ghat = np.empty_like(data.y)
    gen = np.empty((data.n, m_draws, data.x.shape[1]))
    gen_losses = []
    reg_losses = []
    # Draw counts per ensemble member: as even as possible, summing to M.
    base, extra = divmod(m_draws, cfg.generator_ensemble)
    member_draws = [base + (1 if e < extra else 0) for e in range(cfg.generator_ensemble)]
    for j, score_idx in enumerate(folds.folds):
        train_idx = folds.folds[1 - j]
        try:
            gen_models = [
                train_generator(
                    data.x[train_idx], data.z[train_idx],
                    dataclasses.replace(cfg.generator, seed=derived_seed(cfg.seed, _TAG_GENERATOR, j, e)),
                )
                for e in range(cfg.generator_ensemble)
            ]
            reg_models = [
                train_regressor(
                    data.y[train_idx], data.z[train_idx],
                    dataclasses.replace(cfg.regressor, seed=derived_seed(cfg.seed, _TAG_REGRESSOR, j, e)),
                )
                for e in range(cfg.regressor_ensemble)
            ]
        except ValueError as exc:
            raise ValueError(f"training on fold {2 - j} (scoring fold {j + 1}): {exc}") from exc
        gen_losses.append([m.epoch_loss for m in gen_models])
        reg_losses.append([m.epoch_loss for m in reg_models])
        ghat[score_idx] = np.mean(
            [predict_mean(m, data.z[score_idx]) for m in reg_models], axis=0)
        for i in score_idx:
            start = 0
            for e, (model, cnt) in enumerate(zip(gen_models, member_draws)):
                gen[i, start:start + cnt] = sample_conditional(
                    model, data.z[i], cnt, derived_seed(cfg.seed, _TAG_SAMPLING, int(i), e))
                start += cnt

    matrices = stat_kernel_matrices(kernel_data, folds, gen, ghat, kx_specs, kz_specs)
    boot_cfg = dataclasses.replace(cfg.bootstrap, seed=derived_seed(cfg.seed, _TAG_BOOTSTRAP))
    diagnostics = {
        "n": data.n,
        "d_x": data.x.shape[1],
        "d_y": data.y.shape[1],
        "d_z": data.z.shape[1],
        "fold_sizes": [int(idx.size) for idx in folds.folds],
        "mc_samples": m_draws,
        "generator_ensemble": cfg.generator_ensemble,
        "regressor_ensemble": cfg.regressor_ensemble,
        "kernel_family": cfg.kernel_family,
        "kx_bandwidth": [spec.bandwidth for spec in kx_specs],
        "kz_bandwidth": [spec.bandwidth for spec in kz_specs],
        "standardize_z_kernel": cfg.standardize_z_kernel,
        "shuffle": cfg.shuffle,
        "seed": cfg.seed,
        "generator_epoch_loss": gen_losses,
        "regressor_epoch_loss": reg_losses,
        "bootstrap_replicates": boot_cfg.replicates,
        "bootstrap_multiplier": boot_cfg.multiplier,
    }
    return run_bootstrap_test(matrices, boot_cfg, cfg.level, diagnostics)

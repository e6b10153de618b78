"""Conditional generator: a moment-matching network for sampling X given Z.

The sampler has the noise-outsourcing form X_hat = net(eta, z) with
eta ~ N(0, I_m). Training minimizes the unbiased minibatch MMD^2 between
the joint samples {(x_i, z_i)} and {(net(eta_i, z_i), z_i)} under a
gaussian kernel on the concatenated vector, averaged over a small ladder
of bandwidths (multiples of the median-heuristic bandwidth of the real
joint sample). Matching the joints with z passed through unchanged forces
the conditional law of the generated x given z toward P(X|Z).

Inputs are standardized per coordinate on the training rows; the trained
model carries the affine records and de-standardizes its samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .kernels import GAUSSIAN, KernelSpec, gram_matrix, median_heuristic
from .neuralnet import (
    TANH,
    MlpParams,
    NumericalError,
    adam_init,
    adam_step,
    load_mlp,
    mlp_gradient,
    mlp_init,
    save_mlp,
    _forward_cached,
)

MIN_TRAIN_ROWS = 8


@dataclass(frozen=True)
class AffineNormalizer:
    """Per-coordinate standardization record: (value - mean) / scale."""

    mean: np.ndarray
    scale: np.ndarray  # strictly positive

    def transform(self, arr: np.ndarray) -> np.ndarray:
        return (arr - self.mean) / self.scale

    def inverse(self, arr: np.ndarray) -> np.ndarray:
        return arr * self.scale + self.mean


def fit_normalizer(arr: np.ndarray) -> AffineNormalizer:
    """Column means and standard deviations; constant columns get scale 1."""
    mean = arr.mean(axis=0)
    scale = arr.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    return AffineNormalizer(mean=mean, scale=scale)


@dataclass
class GeneratorModel:
    """Trained conditional sampler: net maps (eta, standardized z) to standardized x."""

    net: MlpParams
    noise_dim: int
    z_normalizer: AffineNormalizer
    x_normalizer: AffineNormalizer
    epoch_loss: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class GeneratorTrainConfig:
    noise_dim: int | None = None  # None: d_X (full-rank conditional noise)
    hidden_dims: tuple[int, ...] = (64, 64)
    epochs: int = 600
    minibatch: int = 128
    learning_rate: float = 1e-3
    mmd_bandwidth_multipliers: tuple[float, ...] = (0.5, 1.0, 2.0)
    # The matching kernel sees (x, z_kernel_scale * z); upweighting the z
    # block concentrates the loss on pairs with nearby z, which is what
    # trains the conditional (rather than marginal) structure.
    z_kernel_scale: float = 2.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.noise_dim is not None and self.noise_dim <= 0:
            raise ValueError("noise_dim must be positive")
        if self.epochs <= 0 or self.minibatch <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs, minibatch, and learning_rate must be positive")
        if not self.hidden_dims or any(h <= 0 for h in self.hidden_dims):
            raise ValueError("hidden_dims must be positive")
        if not self.mmd_bandwidth_multipliers or any(m <= 0 for m in self.mmd_bandwidth_multipliers):
            raise ValueError("bandwidth multipliers must be non-empty and positive")
        if self.z_kernel_scale <= 0:
            raise ValueError("z_kernel_scale must be positive")


def _as_training_matrix(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def effective_minibatch(requested: int, n_rows: int) -> int:
    """Cap the minibatch at floor(n/2) so every epoch has at least two batches."""
    return max(2, min(requested, n_rows // 2))


def _mmd_loss_and_grad(gen: np.ndarray, real: np.ndarray, bandwidths) -> tuple[float, np.ndarray]:
    """Unbiased minibatch MMD^2 and its gradient w.r.t. the gen rows.

    gen[i] and real[i] share the same conditioning z_i, so matched pairs
    are dependent copies; every term (including the cross term) therefore
    runs over i != j only. Keeping the matched cross pairs would reward the
    net for memorizing each row's own x_i and collapse the conditional law
    onto the training atoms. Averaged over the gaussian bandwidth ladder.
    """
    b = gen.shape[0]
    d_gg = cdist(gen, gen, metric="sqeuclidean")
    d_gr = cdist(gen, real, metric="sqeuclidean")
    d_rr = cdist(real, real, metric="sqeuclidean")
    loss = 0.0
    grad = np.zeros_like(gen)
    off = b * (b - 1)
    for sigma in bandwidths:
        s2 = 2.0 * sigma**2
        k_gg = np.exp(-d_gg / s2)
        np.fill_diagonal(k_gg, 0.0)
        k_gr = np.exp(-d_gr / s2)
        np.fill_diagonal(k_gr, 0.0)
        k_rr = np.exp(-d_rr / s2)
        loss += (k_gg.sum() + (k_rr.sum() - b) - 2.0 * k_gr.sum()) / off
        # d k(u,v)/du = -k(u,v) (u - v) / sigma^2; weighted row sums avoid
        # materializing pairwise differences.
        within = (k_gg.sum(axis=1)[:, None] * gen - k_gg @ gen) / off
        cross = (k_gr.sum(axis=1)[:, None] * gen - k_gr @ real) / off
        grad += (-2.0 / sigma**2) * (within - cross)
    n_bw = len(bandwidths)
    return loss / n_bw, grad / n_bw


def train_generator(x, z, cfg: GeneratorTrainConfig) -> GeneratorModel:
    """Fit the conditional generator on one training fold.

    Normalizers are fitted on these rows only. Noise is redrawn every step;
    the epoch-averaged loss curve is kept on the returned model.
    """
    xm = _as_training_matrix(x, "x")
    zm = _as_training_matrix(z, "z")
    if xm.shape[0] != zm.shape[0]:
        raise ValueError(f"row counts differ: x has {xm.shape[0]}, z has {zm.shape[0]}")
    n_rows = xm.shape[0]
    if n_rows < MIN_TRAIN_ROWS:
        raise ValueError(f"need at least {MIN_TRAIN_ROWS} training rows, got {n_rows}")
    if np.all(xm == xm[0]) and np.all(zm == zm[0]):
        raise ValueError("degenerate inputs: x and z are both constant")

    norm_x = fit_normalizer(xm)
    norm_z = fit_normalizer(zm)
    xs = norm_x.transform(xm)
    zs = norm_z.transform(zm)

    d_x = xs.shape[1]
    d_z = zs.shape[1]
    noise_dim = cfg.noise_dim if cfg.noise_dim is not None else d_x
    zk = cfg.z_kernel_scale * zs  # kernel view of z; the net sees zs unscaled
    sigma0 = median_heuristic(np.hstack([xs, zk]), GAUSSIAN)
    bandwidths = [m * sigma0 for m in cfg.mmd_bandwidth_multipliers]

    net = mlp_init((noise_dim + d_z, *cfg.hidden_dims, d_x), TANH, cfg.seed)
    state = adam_init(net, cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 0x47454E])

    batch = effective_minibatch(cfg.minibatch, n_rows)
    epoch_loss: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n_rows)
        losses = []
        for start in range(0, n_rows - batch + 1, batch):
            rows = order[start:start + batch]
            eta = rng.standard_normal((rows.size, noise_dim))
            inputs = np.hstack([eta, zs[rows]])
            out, _, _ = _forward_cached(net, inputs)
            gen_joint = np.hstack([out, zk[rows]])
            real_joint = np.hstack([xs[rows], zk[rows]])
            loss, grad_joint = _mmd_loss_and_grad(gen_joint, real_joint, bandwidths)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite generator loss at epoch {len(epoch_loss) + 1}")
            grads = mlp_gradient(net, inputs, grad_joint[:, :d_x])
            adam_step(net, grads, state)
            losses.append(loss)
        epoch_loss.append(float(np.mean(losses)))

    return GeneratorModel(net=net, noise_dim=noise_dim, z_normalizer=norm_z,
                          x_normalizer=norm_x, epoch_loss=epoch_loss)


def sample_conditional(model: GeneratorModel, z, M: int, seed: int) -> np.ndarray:
    """Draw M conditional samples at a single z, de-normalized to x units.

    Row m uses its own noise stream derived from (seed, m), so prefixes
    agree across different M and rows can be regenerated independently.
    """
    zv = np.asarray(z, dtype=np.float64).ravel()
    d_z = model.z_normalizer.mean.shape[0]
    if zv.shape[0] != d_z:
        raise ValueError(f"z has {zv.shape[0]} coordinates, model expects {d_z}")
    if not np.all(np.isfinite(zv)):
        raise ValueError("z must be finite")
    M = int(M)
    if M < 1:
        raise ValueError("M must be a positive integer")
    eta = np.empty((M, model.noise_dim))
    for m in range(M):
        eta[m] = np.random.default_rng([seed, m]).standard_normal(model.noise_dim)
    zrow = model.z_normalizer.transform(zv)
    inputs = np.hstack([eta, np.tile(zrow, (M, 1))])
    out, _, _ = _forward_cached(model.net, inputs)
    return model.x_normalizer.inverse(out)


def mmd2_unbiased(a, b, spec: KernelSpec) -> float:
    """U-statistic MMD^2: off-diagonal means within each sample minus twice the cross mean."""
    am = _as_training_matrix(a, "a")
    bm = _as_training_matrix(b, "b")
    p, q = am.shape[0], bm.shape[0]
    if p < 2 or q < 2:
        raise ValueError(f"need at least two rows per sample, got {p} and {q}")
    k_aa = gram_matrix(spec, am, am)
    k_bb = gram_matrix(spec, bm, bm)
    k_ab = gram_matrix(spec, am, bm)
    within_a = (k_aa.sum() - np.trace(k_aa)) / (p * (p - 1))
    within_b = (k_bb.sum() - np.trace(k_bb)) / (q * (q - 1))
    return float(within_a + within_b - 2.0 * k_ab.mean())


def save_generator(model: GeneratorModel) -> str:
    """Versioned JSON record: net plus normalizers; bit-exact round-trip."""
    return json.dumps(
        {
            "format": "conditional-generator",
            "version": 1,
            "net": json.loads(save_mlp(model.net)),
            "noise_dim": model.noise_dim,
            "z_normalizer": _normalizer_record(model.z_normalizer),
            "x_normalizer": _normalizer_record(model.x_normalizer),
        },
        sort_keys=True,
    )


def load_generator(text: str) -> GeneratorModel:
    rec = json.loads(text)
    if rec.get("format") != "conditional-generator" or rec.get("version") != 1:
        raise ValueError("unsupported generator record")
    return GeneratorModel(
        net=load_mlp(json.dumps(rec["net"])),
        noise_dim=int(rec["noise_dim"]),
        z_normalizer=_normalizer_from_record(rec["z_normalizer"]),
        x_normalizer=_normalizer_from_record(rec["x_normalizer"]),
    )


def _normalizer_record(norm: AffineNormalizer) -> dict:
    return {
        "mean": norm.mean.astype("<f8").tobytes().hex(),
        "scale": norm.scale.astype("<f8").tobytes().hex(),
    }


def _normalizer_from_record(rec: dict) -> AffineNormalizer:
    mean = np.frombuffer(bytes.fromhex(rec["mean"]), dtype="<f8").astype(np.float64).copy()
    scale = np.frombuffer(bytes.fromhex(rec["scale"]), dtype="<f8").astype(np.float64).copy()
    return AffineNormalizer(mean=mean, scale=scale)

"""Conditional-mean regressor: an MLP fit of E[Y | Z = z] by minibatch Adam.

Targets and inputs are standardized per coordinate on the training rows;
predictions are de-standardized. Multivariate targets share one net whose
loss is the summed per-coordinate squared error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .generator import (
    MIN_TRAIN_ROWS,
    AffineNormalizer,
    _as_training_matrix,
    _normalizer_from_record,
    _normalizer_record,
    effective_minibatch,
    fit_normalizer,
)
from .neuralnet import (
    ACTIVATIONS,
    TANH,
    MlpParams,
    NumericalError,
    adam_init,
    adam_step,
    load_mlp,
    mlp_forward,
    mlp_gradient,
    mlp_init,
    save_mlp,
    _forward_cached,
)


@dataclass
class RegressorModel:
    net: MlpParams
    z_normalizer: AffineNormalizer
    y_normalizer: AffineNormalizer
    epoch_loss: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class RegressorTrainConfig:
    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = TANH
    epochs: int = 300
    minibatch: int = 128
    learning_rate: float = 1e-3
    # L2 penalty on weights (not biases), added to the loss gradient by the
    # trainer; without it the net interpolates folds of a few hundred rows.
    weight_decay: float = 2e-2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.epochs <= 0 or self.minibatch <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs, minibatch, and learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not self.hidden_dims or any(h <= 0 for h in self.hidden_dims):
            raise ValueError("hidden_dims must be positive")


def train_regressor(y, z, cfg: RegressorTrainConfig) -> RegressorModel:
    """Fit the conditional-mean net on one training fold by minibatch Adam.

    A target that is exactly constant on the fold has its closed-form
    optimum (predict the constant); in that case a zero-weight net is
    returned untouched instead of being trained toward it.
    """
    ym = _as_training_matrix(y, "y")
    zm = _as_training_matrix(z, "z")
    if ym.shape[0] != zm.shape[0]:
        raise ValueError(f"row counts differ: y has {ym.shape[0]}, z has {zm.shape[0]}")
    n_rows = ym.shape[0]
    if n_rows < MIN_TRAIN_ROWS:
        raise ValueError(f"need at least {MIN_TRAIN_ROWS} training rows, got {n_rows}")
    if np.all(zm == zm[0]):
        raise ValueError("degenerate z: all rows identical")

    norm_y = fit_normalizer(ym)
    norm_z = fit_normalizer(zm)
    d_y = ym.shape[1]
    d_z = zm.shape[1]

    net = mlp_init((d_z, *cfg.hidden_dims, d_y), cfg.activation, cfg.seed)
    if np.all(ym == ym[0]):
        for w in net.weights:
            w[:] = 0.0
        return RegressorModel(net=net, z_normalizer=norm_z, y_normalizer=norm_y,
                              epoch_loss=[0.0])

    ys = norm_y.transform(ym)
    zs = norm_z.transform(zm)
    state = adam_init(net, cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 0x524547])

    batch = effective_minibatch(cfg.minibatch, n_rows)
    epoch_loss: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n_rows)
        losses = []
        for start in range(0, n_rows - batch + 1, batch):
            rows = order[start:start + batch]
            out, _, _ = _forward_cached(net, zs[rows])
            resid = out - ys[rows]
            loss = float(np.sum(resid**2) / rows.size)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite regression loss at epoch {len(epoch_loss) + 1}")
            grads = mlp_gradient(net, zs[rows], 2.0 * resid / rows.size)
            if cfg.weight_decay > 0.0:
                for gw, w in zip(grads.weights, net.weights):
                    gw += cfg.weight_decay * w
            adam_step(net, grads, state)
            losses.append(loss)
        epoch_loss.append(float(np.mean(losses)))

    return RegressorModel(net=net, z_normalizer=norm_z, y_normalizer=norm_y,
                          epoch_loss=epoch_loss)


def predict_mean(model: RegressorModel, z) -> np.ndarray:
    """De-normalized conditional-mean predictions, one row per input row."""
    zm = _as_training_matrix(z, "z")
    d_z = model.z_normalizer.mean.shape[0]
    if zm.shape[1] != d_z:
        raise ValueError(f"z has {zm.shape[1]} columns, model expects {d_z}")
    out = mlp_forward(model.net, model.z_normalizer.transform(zm))
    return model.y_normalizer.inverse(out)


def save_regressor(model: RegressorModel) -> str:
    return json.dumps(
        {
            "format": "mean-regressor",
            "version": 1,
            "net": json.loads(save_mlp(model.net)),
            "z_normalizer": _normalizer_record(model.z_normalizer),
            "y_normalizer": _normalizer_record(model.y_normalizer),
        },
        sort_keys=True,
    )


def load_regressor(text: str) -> RegressorModel:
    rec = json.loads(text)
    if rec.get("format") != "mean-regressor" or rec.get("version") != 1:
        raise ValueError("unsupported regressor record")
    return RegressorModel(
        net=load_mlp(json.dumps(rec["net"])),
        z_normalizer=_normalizer_from_record(rec["z_normalizer"]),
        y_normalizer=_normalizer_from_record(rec["y_normalizer"]),
    )

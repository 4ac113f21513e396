"""Model training: batched gradient descent with validation-based stopping.

Either model kind is fit on a turbine's good-timeline training windows with
MSE loss in kW^2. After every epoch the validation loss is computed; the
best-validation parameters are kept and training stops once no meaningful
improvement has been seen for ``patience`` epochs. Runs are deterministic
functions of (data, config).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import fnn as fnn_mod
from . import lstm as lstm_mod
from .scada import LSTM_KIND, MODEL_KINDS, Normalizer, WindowSample, fit_normalizer

DEFAULT_LEARNING_RATES = {"lstm": 0.001, "fnn": 0.01}


class TrainingDiverged(ArithmeticError):
    """Loss became non-finite during optimization."""


@dataclass
class TrainConfig:
    kind: str
    learning_rate: float | None = None      # per-kind default when None
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    min_rel_improvement: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    hidden_size: int = 24                   # lstm units per layer
    n_layers: int = 2                       # lstm stacked layers
    n_neurons: int = 20                     # fnn neurons per hidden layer
    grid_size: int = 40                     # fnn evaluation grid
    n_hidden_layers: int = 1                # fnn hidden layers

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")

    @property
    def resolved_learning_rate(self) -> float:
        return self.learning_rate if self.learning_rate is not None \
            else DEFAULT_LEARNING_RATES[self.kind]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainedModel:
    kind: str
    turbine_id: int
    params: object                          # LstmParams or FnnParams
    normalizer: Normalizer
    history: list[EpochStats]
    config: TrainConfig
    rated_power: float

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Power curves in kW for raw (unnormalized) feature windows."""
        inputs = np.asarray(inputs, dtype=np.float64)
        squeeze = inputs.ndim == 2
        if squeeze:
            inputs = inputs[None]
        normalized = self.normalizer.apply_array(inputs)
        out = _forward(self.kind, normalized, self.params).value
        return out[0] if squeeze else out

    @property
    def best_val_loss(self) -> float:
        return min(h.val_loss for h in self.history)


def _forward(kind: str, normalized: np.ndarray, params) -> ad.Tensor:
    if kind == LSTM_KIND:
        return lstm_mod.lstm_forward(normalized, params)
    return fnn_mod.fnn_forward(normalized, params)


def _init_params(cfg: TrainConfig, rated_power: float, input_dim: int,
                 window_hours: int):
    if cfg.kind == LSTM_KIND:
        return lstm_mod.init_lstm_params(
            cfg.seed, rated_power, input_dim=input_dim,
            hidden_size=cfg.hidden_size, n_layers=cfg.n_layers)
    return fnn_mod.init_fnn_params(
        cfg.seed, rated_power, window_hours=window_hours, n_inputs=input_dim,
        n_neurons=cfg.n_neurons, grid_size=cfg.grid_size,
        n_hidden_layers=cfg.n_hidden_layers)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared difference between two curves (kW^2)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params: list[ad.Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad_or_zeros()
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.value -= scale * m / (np.sqrt(v) + self.eps)


class Sgd:
    """Plain gradient descent, kept around for ablations."""

    def __init__(self, params: list[ad.Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params:
            p.value -= self.lr * p.grad_or_zeros()


def _stack(samples: list[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.inputs for s in samples])
    y = np.stack([s.target for s in samples])
    return x, y


def train(train_samples: list[WindowSample], val_samples: list[WindowSample],
          cfg: TrainConfig, turbine_id: int, rated_power: float) -> TrainedModel:
    """Fit one model on one turbine's training windows.

    Splits are enforced by tag: feeding test-tagged windows in here is a
    bug, not a judgement call. Validation loss drives both early stopping
    and the returned (best) parameters.
    """
    if not train_samples:
        raise ValueError("training split is empty")
    if not val_samples:
        raise ValueError("validation split is empty")
    for s in train_samples:
        if s.split != "train":
            raise ValueError(f"sample tagged {s.split!r} passed as training data")
    for s in val_samples:
        if s.split != "val":
            raise ValueError(f"sample tagged {s.split!r} passed as validation data")

    x_train, y_train = _stack(train_samples)
    x_val, y_val = _stack(val_samples)
    window_hours, input_dim = x_train.shape[1], x_train.shape[2]

    normalizer = fit_normalizer(train_samples)
    xn_train = normalizer.apply_array(x_train)
    xn_val = normalizer.apply_array(x_val)

    params = _init_params(cfg, rated_power, input_dim, window_hours)
    tensors = params.parameters()
    if cfg.optimizer == "adam":
        optimizer = Adam(tensors, cfg.resolved_learning_rate)
    else:
        optimizer = Sgd(tensors, cfg.resolved_learning_rate)

    rng = np.random.default_rng(cfg.seed)
    n = len(train_samples)
    history: list[EpochStats] = []
    best_val = np.inf
    best_values = params.copy_values()
    stale = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            for t in tensors:
                t.zero_grad()
            try:
                with ad.Tape() as tape:
                    pred = _forward(cfg.kind, xn_train[idx], params)
                    diff = ad.sub(pred, ad.Tensor(y_train[idx]))
                    loss = ad.reduce_mean(ad.mul(diff, diff))
                tape.backward(loss)
            except ad.NonFiniteError as exc:
                raise TrainingDiverged(
                    f"{cfg.kind} training diverged on turbine {turbine_id} "
                    f"at epoch {epoch}: {exc}") from exc
            optimizer.step()
            epoch_loss += float(loss.value) * len(idx)
        train_loss = epoch_loss / n

        val_loss = mse_loss(_forward(cfg.kind, xn_val, params).value, y_val)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(
                f"{cfg.kind} validation loss non-finite on turbine {turbine_id}")
        history.append(EpochStats(epoch, train_loss, val_loss))

        if val_loss < best_val * (1.0 - cfg.min_rel_improvement):
            best_val = val_loss
            best_values = params.copy_values()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    params.load_values(best_values)
    return TrainedModel(cfg.kind, turbine_id, params, normalizer, history,
                        cfg, rated_power)


@dataclass
class EvalResult:
    per_window_rmse: np.ndarray
    mean_rmse: float


def evaluate(model: TrainedModel, samples: list[WindowSample]) -> EvalResult:
    """Per-window RMSE of a model on its own-format windows."""
    if not samples:
        raise ValueError("no samples to evaluate")
    x, y = _stack(samples)
    pred = model.predict(x)
    per_window = np.sqrt(np.mean((pred - y) ** 2, axis=1))
    return EvalResult(per_window, float(per_window.mean()))


def mean_predictor_baseline(train_samples: list[WindowSample],
                            eval_samples: list[WindowSample]) -> float:
    """Mean RMSE of the constant predictor fixed at the training-mean power."""
    mean_power = float(np.mean([s.target.mean() for s in train_samples]))
    per_window = [np.sqrt(np.mean((s.target - mean_power) ** 2))
                  for s in eval_samples]
    return float(np.mean(per_window))

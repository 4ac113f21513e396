"""Stacked LSTM sequence regressor for 24-hour power curves.

Two recurrent layers of 24 units feed a per-timestep linear head whose
output (a fraction of rated power) goes through ReLU and a hard clamp to
[0, 1] before scaling to kW. Gate weights for each layer live in one packed
matrix ordered [forget | input | output | candidate]; per-gate views keep
the conventional layout accessible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

GATE_ORDER = ("f", "i", "o", "g")


@dataclass
class LstmLayerParams:
    """One layer's gate weights over the concatenated [h_prev; x_t] input."""

    w_gates: ad.Tensor          # (input_dim + hidden, 4 * hidden)
    b_gates: ad.Tensor          # (4 * hidden,)
    hidden: int

    def _block(self, gate: str) -> slice:
        k = GATE_ORDER.index(gate)
        return slice(k * self.hidden, (k + 1) * self.hidden)

    def weight(self, gate: str) -> np.ndarray:
        """Writable view; rows 0..hidden-1 are recurrent, the rest input."""
        return self.w_gates.value[:, self._block(gate)]

    def bias(self, gate: str) -> np.ndarray:
        return self.b_gates.value[self._block(gate)]

    @property
    def w_f(self):
        return self.weight("f")

    @property
    def w_i(self):
        return self.weight("i")

    @property
    def w_o(self):
        return self.weight("o")

    @property
    def w_g(self):
        return self.weight("g")

    @property
    def b_f(self):
        return self.bias("f")

    @property
    def b_i(self):
        return self.bias("i")

    @property
    def b_o(self):
        return self.bias("o")

    @property
    def b_g(self):
        return self.bias("g")


@dataclass
class LstmParams:
    layers: list[LstmLayerParams]
    head_w: ad.Tensor           # (hidden, 1)
    head_b: ad.Tensor           # (1,)
    input_dim: int
    hidden_size: int
    rated_power: float

    def parameters(self) -> list[ad.Tensor]:
        ps = []
        for layer in self.layers:
            ps.extend([layer.w_gates, layer.b_gates])
        ps.extend([self.head_w, self.head_b])
        return ps

    def copy_values(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.parameters()]

    def load_values(self, values: list[np.ndarray]) -> None:
        for p, v in zip(self.parameters(), values):
            p.value[...] = v


def init_lstm_params(seed: int, rated_power: float, input_dim: int = 4,
                     hidden_size: int = 24, n_layers: int = 2) -> LstmParams:
    """Uniform +-1/sqrt(fan_in) weights with the forget bias lifted to +1."""
    rng = np.random.default_rng(seed)
    layers = []
    in_dim = input_dim
    for _ in range(n_layers):
        fan_in = in_dim + hidden_size
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, (fan_in, 4 * hidden_size))
        b = np.zeros(4 * hidden_size)
        b[:hidden_size] = 1.0  # forget gate block
        layers.append(LstmLayerParams(
            ad.Tensor(w, requires_grad=True),
            ad.Tensor(b, requires_grad=True),
            hidden_size,
        ))
        in_dim = hidden_size
    head_bound = 1.0 / np.sqrt(hidden_size)
    head_w = ad.Tensor(rng.uniform(-head_bound, head_bound, (hidden_size, 1)),
                       requires_grad=True)
    head_b = ad.Tensor(np.zeros(1), requires_grad=True)
    return LstmParams(layers, head_w, head_b, input_dim, hidden_size, rated_power)


def lstm_cell_step(x: ad.Tensor, h_prev: ad.Tensor, c_prev: ad.Tensor,
                   layer: LstmLayerParams) -> tuple[ad.Tensor, ad.Tensor]:
    """One recurrence step.

    forget/input/output gates are sigmoids and the candidate a tanh of the
    shared affine map of [h_prev; x]; the new cell state mixes the old one
    (forget) with the gated candidate (input), and the hidden state is the
    output gate times tanh of the new cell state.
    """
    hidden = layer.hidden
    z = ad.concat([h_prev, x], axis=1)
    pre = ad.add(ad.matmul(z, layer.w_gates), layer.b_gates)
    fio = ad.sigmoid(ad.take(pre, (slice(None), slice(0, 3 * hidden))))
    g = ad.tanh(ad.take(pre, (slice(None), slice(3 * hidden, 4 * hidden))))
    f = ad.take(fio, (slice(None), slice(0, hidden)))
    i = ad.take(fio, (slice(None), slice(hidden, 2 * hidden)))
    o = ad.take(fio, (slice(None), slice(2 * hidden, 3 * hidden)))
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(c))
    return h, c


def lstm_forward(inputs: np.ndarray, params: LstmParams,
                 return_head_preactivation: bool = False):
    """Predict power curves for a batch of normalized feature windows.

    inputs: (N, W, J) normalized features, W >= 1. Hidden and cell states
    start at zero. Returns a (N, W) tensor of kW; optionally also the raw
    head pre-activations (fractions of rated power, before ReLU/clamp) for
    kink-distance diagnostics.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3:
        raise ad.ShapeError("inputs must be (batch, window, features)")
    n, w, j = inputs.shape
    if w < 1:
        raise ad.ShapeError("window must contain at least one step")
    if j != params.input_dim:
        raise ad.ShapeError(f"expected {params.input_dim} features, got {j}")

    hidden = params.hidden_size
    states = [(ad.Tensor(np.zeros((n, hidden))), ad.Tensor(np.zeros((n, hidden))))
              for _ in params.layers]
    tops = []
    for t in range(w):
        signal = ad.Tensor(inputs[:, t, :])
        for idx, layer in enumerate(params.layers):
            h, c = lstm_cell_step(signal, states[idx][0], states[idx][1], layer)
            states[idx] = (h, c)
            signal = h
        tops.append(signal)

    seq = ad.stack(tops, axis=1)                         # (N, W, hidden)
    flat = ad.reshape(seq, (n * w, hidden))
    z = ad.add(ad.matmul(flat, params.head_w), params.head_b)
    fraction = ad.clamp(ad.relu(z), 0.0, 1.0)
    out = ad.reshape(ad.mul(fraction, ad.Tensor(params.rated_power)), (n, w))
    if return_head_preactivation:
        return out, z.value.reshape(n, w)
    return out


def head_kink_margin(inputs: np.ndarray, params: LstmParams) -> float:
    """Distance of the closest head pre-activation to the ReLU/clamp kinks."""
    _, z = lstm_forward(inputs, params, return_head_preactivation=True)
    return float(min(np.abs(z).min(), np.abs(z - 1.0).min()))

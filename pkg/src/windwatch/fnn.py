"""Functional network: neurons map whole input curves to output curves.

Each continuous neuron evaluates

    out(s) = act( b(s) + sum_j integral w_j(s, t) * H_j(t) dt )

with the intercept curve b and the bivariate kernels w_j represented by
their values on a uniform grid over the window and the integral taken by
the trapezoidal rule. For speed the whole layer is packed into one matrix
product; per-neuron accessors expose the individual kernel matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


def build_interp_matrix(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Matrix M with (M @ values_on_src) = linear interpolation at dst."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    m = np.zeros((len(dst), len(src)))
    seg = np.clip(np.searchsorted(src, dst, side="right") - 1, 0, len(src) - 2)
    lam = (dst - src[seg]) / (src[seg + 1] - src[seg])
    lam = np.clip(lam, 0.0, 1.0)
    rows = np.arange(len(dst))
    m[rows, seg] = 1.0 - lam
    m[rows, seg + 1] = lam
    return m


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Quadrature weights such that weights @ values = trapezoid integral."""
    grid = np.asarray(grid, dtype=np.float64)
    if len(grid) < 2:
        raise ValueError("need at least two grid points")
    w = np.zeros(len(grid))
    d = np.diff(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def quadrature(values: np.ndarray, grid: np.ndarray) -> float:
    """Trapezoidal integral of curve samples over the grid."""
    return float(trapezoid_weights(grid) @ np.asarray(values, dtype=np.float64))


def resample_to_grid(curve: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Linearly interpolate an hourly curve onto the evaluation grid.

    The hourly curve is taken at integer hours 0..W-1; the same construction
    maps grid curves back to hours.
    """
    curve = np.asarray(curve, dtype=np.float64)
    return np.interp(grid, np.arange(len(curve)), curve)


def continuous_neuron(h_prev: list[np.ndarray], weights: list[np.ndarray],
                      bias: np.ndarray, grid: np.ndarray, activation=None) -> np.ndarray:
    """Single-neuron reference evaluation, one quadrature per output point.

    ``weights[j][k, t]`` couples input curve j at grid point t to the output
    at grid point k. Deliberately does the plain thing; the packed layer in
    FnnParams must agree with it.
    """
    if len(h_prev) != len(weights):
        raise ValueError("one kernel per input curve required")
    qw = trapezoid_weights(grid)
    out = np.array(bias, dtype=np.float64, copy=True)
    for h, w in zip(h_prev, weights):
        if w.shape != (len(grid), len(grid)):
            raise ValueError("kernel must be S x S")
        out += w @ (qw * h)
    return activation(out) if activation is not None else out


@dataclass
class FnnParams:
    """Grid-discretized functional network parameters.

    Kernels are stored packed: ``kernels[l]`` has shape (J_l*S, R_l*S) with
    block [j*S+t, r*S+k] = w_{r,j}(s_k, t) for hidden layer l, and
    ``kernel_out`` couples the last hidden layer to the single output curve.
    """

    grid: np.ndarray
    window_hours: int
    n_inputs: int
    n_neurons: int
    rated_power: float
    kernels: list[ad.Tensor]
    biases: list[ad.Tensor]
    kernel_out: ad.Tensor
    bias_out: ad.Tensor
    _to_grid: np.ndarray = field(repr=False, default=None)
    _to_hours: np.ndarray = field(repr=False, default=None)
    _quad: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        hours = np.arange(self.window_hours)
        if self._to_grid is None:
            self._to_grid = build_interp_matrix(hours, self.grid)
        if self._to_hours is None:
            self._to_hours = build_interp_matrix(self.grid, hours)
        if self._quad is None:
            self._quad = trapezoid_weights(self.grid)

    @property
    def grid_size(self) -> int:
        return len(self.grid)

    @property
    def n_hidden_layers(self) -> int:
        return len(self.kernels)

    def layer_width(self, layer: int) -> int:
        return self.n_inputs if layer == 0 else self.n_neurons

    def hidden_weight(self, layer: int, neuron: int, source: int) -> np.ndarray:
        """Writable (S, S) view of one kernel, indexed [output s, input t]."""
        s = self.grid_size
        block = self.kernels[layer].value[source * s:(source + 1) * s,
                                          neuron * s:(neuron + 1) * s]
        return block.T

    def hidden_bias(self, layer: int, neuron: int) -> np.ndarray:
        s = self.grid_size
        return self.biases[layer].value[neuron * s:(neuron + 1) * s]

    def output_weight(self, source: int) -> np.ndarray:
        s = self.grid_size
        return self.kernel_out.value[source * s:(source + 1) * s, :].T

    def parameters(self) -> list[ad.Tensor]:
        return [*self.kernels, *self.biases, self.kernel_out, self.bias_out]

    def copy_values(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.parameters()]

    def load_values(self, values: list[np.ndarray]) -> None:
        for p, v in zip(self.parameters(), values):
            p.value[...] = v


def init_fnn_params(seed: int, rated_power: float, window_hours: int = 24,
                    n_inputs: int = 4, n_neurons: int = 20, grid_size: int = 40,
                    n_hidden_layers: int = 1) -> FnnParams:
    """Kernel values uniform in +-1/S so integrals start at unit scale."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, window_hours - 1, grid_size)
    bound = 1.0 / grid_size

    kernels, biases = [], []
    width = n_inputs
    for _ in range(n_hidden_layers):
        kernels.append(ad.Tensor(
            rng.uniform(-bound, bound, (width * grid_size, n_neurons * grid_size)),
            requires_grad=True))
        biases.append(ad.Tensor(np.zeros(n_neurons * grid_size), requires_grad=True))
        width = n_neurons
    kernel_out = ad.Tensor(rng.uniform(-bound, bound, (width * grid_size, grid_size)),
                           requires_grad=True)
    bias_out = ad.Tensor(np.zeros(grid_size), requires_grad=True)
    return FnnParams(grid, window_hours, n_inputs, n_neurons, rated_power,
                     kernels, biases, kernel_out, bias_out)


def _pack_curves(curves_on_grid: np.ndarray, quad: np.ndarray) -> np.ndarray:
    """(N, S, J) grid curves -> (N, J*S) quadrature-weighted rows."""
    n, s, j = curves_on_grid.shape
    weighted = curves_on_grid * quad[None, :, None]
    return weighted.transpose(0, 2, 1).reshape(n, j * s)


def fnn_forward(inputs: np.ndarray, params: FnnParams) -> ad.Tensor:
    """Predict power curves for a batch of normalized feature windows.

    inputs: (N, W, J) normalized features. Returns a (N, W) tensor of kW,
    squashed through a rated-power-scaled sigmoid before being mapped from
    the evaluation grid back to hours.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3:
        raise ad.ShapeError("inputs must be (batch, window, features)")
    n, w, j = inputs.shape
    if w != params.window_hours or j != params.n_inputs:
        raise ad.ShapeError(
            f"expected (*, {params.window_hours}, {params.n_inputs}), got {inputs.shape}")

    s = params.grid_size
    on_grid = np.einsum("sw,nwj->nsj", params._to_grid, inputs)
    h = ad.Tensor(_pack_curves(on_grid, params._quad))

    qw_tile = None
    for kernel, bias in zip(params.kernels, params.biases):
        act = ad.elu(ad.add(ad.matmul(h, kernel), bias))
        if qw_tile is None:
            qw_tile = ad.Tensor(np.tile(params._quad, params.n_neurons))
        h = ad.mul(act, qw_tile)
    out_grid = ad.sigmoid(ad.add(ad.matmul(h, params.kernel_out), params.bias_out))
    out_kw = ad.mul(out_grid, ad.Tensor(params.rated_power))
    return ad.matmul(out_kw, ad.Tensor(params._to_hours.T))


def fnn_forward_reference(inputs: np.ndarray, params: FnnParams) -> np.ndarray:
    """Slow per-neuron forward used to cross-check the packed fast path."""
    from scipy.special import expit

    inputs = np.asarray(inputs, dtype=np.float64)
    out = np.empty(inputs.shape[:2])
    elu = lambda x: np.where(x >= 0, x, np.expm1(np.minimum(x, 0)))
    for b in range(inputs.shape[0]):
        curves = [resample_to_grid(inputs[b, :, j], params.grid)
                  for j in range(params.n_inputs)]
        for layer in range(params.n_hidden_layers):
            curves = [
                continuous_neuron(
                    curves,
                    [params.hidden_weight(layer, r, j) for j in range(len(curves))],
                    params.hidden_bias(layer, r),
                    params.grid,
                    elu,
                )
                for r in range(params.n_neurons)
            ]
        pre = continuous_neuron(
            curves,
            [params.output_weight(r) for r in range(len(curves))],
            np.asarray(params.bias_out.value),
            params.grid,
        )
        kw = params.rated_power * expit(pre)
        out[b] = np.interp(np.arange(params.window_hours), params.grid, kw)
    return out

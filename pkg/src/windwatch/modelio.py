"""Versioned binary container for trained models.

Layout: magic line, one JSON header line (metadata, normalizer, training
history, array manifest with shapes), then the raw little-endian float64
array bytes in manifest order. Writing the same model twice produces
byte-identical files, which the pipeline's determinism guarantee relies on
(zip-based formats stamp modification times and break that).
"""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from .fnn import FnnParams
from .lstm import GATE_ORDER, LstmLayerParams, LstmParams
from .scada import LSTM_KIND, Normalizer
from .training import EpochStats, TrainConfig, TrainedModel

MAGIC = b"WWM1\n"


def _lstm_arrays(params: LstmParams) -> dict[str, np.ndarray]:
    arrays = {}
    for i, layer in enumerate(params.layers):
        for gate in GATE_ORDER:
            arrays[f"layer{i}.w_{gate}"] = layer.weight(gate)
            arrays[f"layer{i}.b_{gate}"] = layer.bias(gate)
    arrays["head_w"] = params.head_w.value
    arrays["head_b"] = params.head_b.value
    return arrays


def _fnn_arrays(params: FnnParams) -> dict[str, np.ndarray]:
    arrays = {}
    for layer in range(params.n_hidden_layers):
        for r in range(params.n_neurons):
            for j in range(params.layer_width(layer)):
                arrays[f"hidden{layer}.w.r{r}.j{j}"] = params.hidden_weight(layer, r, j)
            arrays[f"hidden{layer}.b.r{r}"] = params.hidden_bias(layer, r)
    for r in range(params.layer_width(params.n_hidden_layers)):
        arrays[f"out.w.r{r}"] = params.output_weight(r)
    arrays["out.b"] = params.bias_out.value
    return arrays


def save_model(model: TrainedModel, path) -> None:
    if model.kind == LSTM_KIND:
        arrays = _lstm_arrays(model.params)
        model_meta = {
            "input_dim": model.params.input_dim,
            "hidden_size": model.params.hidden_size,
            "n_layers": len(model.params.layers),
        }
    else:
        arrays = _fnn_arrays(model.params)
        model_meta = {
            "window_hours": model.params.window_hours,
            "n_inputs": model.params.n_inputs,
            "n_neurons": model.params.n_neurons,
            "grid_size": model.params.grid_size,
            "n_hidden_layers": model.params.n_hidden_layers,
        }

    header = {
        "format_version": 1,
        "kind": model.kind,
        "turbine_id": model.turbine_id,
        "rated_power": model.rated_power,
        "model": model_meta,
        "config": model.config.to_dict(),
        "normalizer": model.normalizer.to_dict(),
        "history": [[h.epoch, h.train_loss, h.val_loss] for h in model.history],
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(b"\n")
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a model file")
        header = json.loads(fh.readline().decode())
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated array {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

    kind = header["kind"]
    meta = header["model"]
    rated = float(header["rated_power"])
    if kind == LSTM_KIND:
        hidden = meta["hidden_size"]
        layers = []
        in_dim = meta["input_dim"]
        for i in range(meta["n_layers"]):
            w = np.concatenate([arrays[f"layer{i}.w_{g}"] for g in GATE_ORDER], axis=1)
            b = np.concatenate([arrays[f"layer{i}.b_{g}"] for g in GATE_ORDER])
            layers.append(LstmLayerParams(ad.Tensor(w, requires_grad=True),
                                          ad.Tensor(b, requires_grad=True), hidden))
            in_dim = hidden
        params = LstmParams(layers, ad.Tensor(arrays["head_w"], requires_grad=True),
                            ad.Tensor(arrays["head_b"], requires_grad=True),
                            meta["input_dim"], hidden, rated)
    else:
        s = meta["grid_size"]
        grid = np.linspace(0.0, meta["window_hours"] - 1, s)
        kernels, biases = [], []
        width = meta["n_inputs"]
        for layer in range(meta["n_hidden_layers"]):
            k = np.empty((width * s, meta["n_neurons"] * s))
            b = np.empty(meta["n_neurons"] * s)
            for r in range(meta["n_neurons"]):
                for j in range(width):
                    k[j * s:(j + 1) * s, r * s:(r + 1) * s] = \
                        arrays[f"hidden{layer}.w.r{r}.j{j}"].T
                b[r * s:(r + 1) * s] = arrays[f"hidden{layer}.b.r{r}"]
            kernels.append(ad.Tensor(k, requires_grad=True))
            biases.append(ad.Tensor(b, requires_grad=True))
            width = meta["n_neurons"]
        kout = np.empty((width * s, s))
        for r in range(width):
            kout[r * s:(r + 1) * s, :] = arrays[f"out.w.r{r}"].T
        params = FnnParams(grid, meta["window_hours"], meta["n_inputs"],
                           meta["n_neurons"], rated, kernels, biases,
                           ad.Tensor(kout, requires_grad=True),
                           ad.Tensor(arrays["out.b"], requires_grad=True))

    return TrainedModel(
        kind=kind,
        turbine_id=int(header["turbine_id"]),
        params=params,
        normalizer=Normalizer.from_dict(header["normalizer"]),
        history=[EpochStats(int(e), float(t), float(v)) for e, t, v in header["history"]],
        config=TrainConfig.from_dict(header["config"]),
        rated_power=rated,
    )

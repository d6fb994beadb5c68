"""Edge-conditioned graph network that maps one multi-view graph to a template.

Three convolution layers, each with its own filter-generating network
``F(e_ij) = reshape(W2 @ relu(W1 @ e_ij + b1) + b2, (d_out, d_in))``, update
node embeddings as::

    v_i <- root @ v_i + mean_{j != i} (F(e_ij) @ v_j + bias)

with ReLU between layers. The template entry (i, j) is the mean (or sum)
over embedding dimensions of ``|v_i - v_j|``.

The batched path never materializes the per-edge filters: because ``F`` is
affine in its hidden activations ``h_ij``, the neighbour sum factors as
``sum_k W2[:, :, k] @ (sum_j h_ij[k] v_j)``. :func:`filter_forward` and
:func:`conv_layer_reference` keep the literal per-edge form for checking.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from ._validation import check_multiview

PARAM_NAMES = ("filter_w1", "filter_b1", "filter_w2", "filter_b2", "root", "bias")


@dataclass
class LayerParams:
    filter_w1: np.ndarray  # (hidden, n_v)
    filter_b1: np.ndarray  # (hidden,)
    filter_w2: np.ndarray  # (d_out * d_in, hidden)
    filter_b2: np.ndarray  # (d_out * d_in,)
    root: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)

    @property
    def d_in(self) -> int:
        return self.root.shape[1]

    @property
    def d_out(self) -> int:
        return self.root.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


@dataclass
class ModelParams:
    layers: list[LayerParams]
    n_v: int
    dims: tuple[int, int, int]
    hidden: int = 32
    seed: int = 0
    readout: str = "mean"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.layers) != 3:
            raise ValueError(f"expected exactly 3 layers, got {len(self.layers)}")
        d_prev = 1
        for idx, (layer, d) in enumerate(zip(self.layers, self.dims), start=1):
            if layer.d_in != d_prev or layer.d_out != d:
                raise ValueError(f"layer {idx}: shape ({layer.d_out}, {layer.d_in}) breaks the dims chain {self.dims}")
            if layer.filter_w1.shape[1] != self.n_v:
                raise ValueError(f"layer {idx}: filter input size {layer.filter_w1.shape[1]} != n_v={self.n_v}")
            d_prev = d
        if self.readout not in ("mean", "sum"):
            raise ValueError(f"readout must be 'mean' or 'sum', got {self.readout!r}")

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for l, layer in enumerate(self.layers, start=1):
            for name, arr in layer.arrays().items():
                out[f"layer{l}.{name}"] = arr
        return out

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "ModelParams":
        layers = [
            LayerParams(**{name: np.array(arrays[f"layer{l}.{name}"], dtype=np.float64) for name in PARAM_NAMES})
            for l in range(1, 4)
        ]
        return ModelParams(layers, self.n_v, self.dims, self.hidden, self.seed, self.readout, dict(self.meta))

    def copy(self) -> "ModelParams":
        return self.with_arrays({k: v.copy() for k, v in self.named_arrays().items()})


def init_model(dims=(36, 24, 5), n_v: int = 4, hidden: int = 32, seed: int = 0, readout: str = "mean") -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1 or n_v < 1 or hidden < 1:
        raise ValueError(f"invalid architecture dims={dims}, n_v={n_v}, hidden={hidden}")
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    layers = []
    d_in = 1
    for d_out in dims:
        layers.append(
            LayerParams(
                filter_w1=uniform((hidden, n_v), n_v),
                filter_b1=np.zeros(hidden),
                filter_w2=uniform((d_out * d_in, hidden), hidden),
                filter_b2=np.zeros(d_out * d_in),
                root=uniform((d_out, d_in), d_in),
                bias=np.zeros(d_out),
            )
        )
        d_in = d_out
    return ModelParams(layers, n_v, dims, hidden, seed, readout)


# -- literal per-edge form -----------------------------------------------------

def filter_forward(layer: LayerParams, e_ij) -> np.ndarray:
    e = np.asarray(e_ij, dtype=np.float64)
    if e.shape != (layer.filter_w1.shape[1],):
        raise ValueError(f"edge vector has length {e.shape}, expected {layer.filter_w1.shape[1]}")
    h = np.maximum(layer.filter_w1 @ e + layer.filter_b1, 0.0)
    return (layer.filter_w2 @ h + layer.filter_b2).reshape(layer.d_out, layer.d_in)


def conv_layer_reference(layer: LayerParams, embeddings: np.ndarray, views: np.ndarray) -> np.ndarray:
    """Per-node, per-edge loop form of one convolution (no activation)."""
    n_r = views.shape[0]
    out = np.empty((n_r, layer.d_out))
    for i in range(n_r):
        acc = np.zeros(layer.d_out)
        for j in range(n_r):
            if j != i:
                acc += filter_forward(layer, views[i, j]) @ embeddings[j] + layer.bias
        out[i] = layer.root @ embeddings[i] + acc / (n_r - 1)
    return out


# -- batched differentiable form ---------------------------------------------------

def _conv(p: dict[str, ad.Tensor], v: ad.Tensor, X: np.ndarray, mask: np.ndarray) -> ad.Tensor:
    n_r = X.shape[1]
    d_out, d_in = p["root"].shape
    hidden = p["filter_w1"].shape[0]
    h = ad.relu(ad.einsum("bijv,kv->bijk", X, p["filter_w1"]) + p["filter_b1"])
    h = h * mask
    # M[b, i, k, q] = sum_{j != i} h_ij[k] v_j[q]
    M = ad.einsum("bijk,bjq->bikq", h, v)
    w2 = ad.reshape(p["filter_w2"], (d_out, d_in, hidden))
    messages = ad.einsum("bikq,pqk->bip", M, w2)
    others = ad.sum(v, axis=1, keepdims=True) - v
    b2 = ad.reshape(p["filter_b2"], (d_out, d_in))
    messages = messages + ad.einsum("biq,pq->bip", others, b2)
    self_term = ad.einsum("biq,pq->bip", v, p["root"])
    return self_term + messages * (1.0 / (n_r - 1)) + p["bias"]


def forward_tensors(params: dict[str, ad.Tensor], X: np.ndarray, readout: str = "mean"):
    """Differentiable batched forward pass.

    ``X`` has shape (B, n_r, n_r, n_v); returns embeddings (B, n_r, d_3) and
    templates (B, n_r, n_r) as tensors.
    """
    B, n_r = X.shape[0], X.shape[1]
    mask = (~np.eye(n_r, dtype=bool)).astype(np.float64)[None, :, :, None]
    v = ad.Tensor(np.ones((B, n_r, 1)))
    for l in range(1, 4):
        p = {name: params[f"layer{l}.{name}"] for name in PARAM_NAMES}
        v = _conv(p, v, X, mask)
        if l < 3:
            v = ad.relu(v)
    d = v.shape[2]
    diff = ad.abs(ad.reshape(v, (B, n_r, 1, d)) - ad.reshape(v, (B, 1, n_r, d)))
    templates = ad.sum(diff, axis=3) if readout == "sum" else ad.mean(diff, axis=3)
    return v, templates


def _constant_params(model: ModelParams) -> dict[str, ad.Tensor]:
    return {k: ad.Tensor(v) for k, v in model.named_arrays().items()}


def forward_batch(model: ModelParams, X) -> tuple[np.ndarray, np.ndarray]:
    X = check_multiview(X)
    if X.shape[3] != model.n_v:
        raise ValueError(f"sample has {X.shape[3]} views but the model expects {model.n_v}")
    emb, templates = forward_tensors(_constant_params(model), X, model.readout)
    return emb.value, templates.value


def forward(model: ModelParams, sample) -> tuple[np.ndarray, np.ndarray]:
    """Embeddings (n_r, d_3) and template (n_r, n_r) for one sample."""
    views = sample.views if hasattr(sample, "views") else sample
    emb, templates = forward_batch(model, np.asarray(views)[None])
    return emb[0], templates[0]


def conv_layer(layer: LayerParams, embeddings, sample) -> np.ndarray:
    """One convolution (no activation) for a single sample."""
    views = np.asarray(sample.views if hasattr(sample, "views") else sample, dtype=np.float64)
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n_r = views.shape[0]
    if embeddings.shape != (n_r, layer.d_in):
        raise ValueError(f"embeddings shape {embeddings.shape} != ({n_r}, {layer.d_in})")
    mask = (~np.eye(n_r, dtype=bool)).astype(np.float64)[None, :, :, None]
    p = {k: ad.Tensor(v) for k, v in layer.arrays().items()}
    return _conv(p, ad.Tensor(embeddings[None]), views[None], mask).value[0]


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(model: ModelParams, path) -> None:
    payload = {
        "config": {
            "dims": list(model.dims),
            "n_v": model.n_v,
            "hidden": model.hidden,
            "seed": model.seed,
            "readout": model.readout,
        },
        "params": {
            name: {"shape": list(arr.shape), "values": [float(x) for x in arr.reshape(-1)]}
            for name, arr in model.named_arrays().items()
        },
    }
    if model.meta:
        payload["meta"] = model.meta
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_checkpoint(path) -> ModelParams:
    payload = json.loads(Path(path).read_text())
    cfg = payload["config"]
    arrays = {name: np.array(t["values"], dtype=np.float64).reshape(t["shape"]) for name, t in payload["params"].items()}
    skeleton = init_model(cfg["dims"], cfg["n_v"], cfg["hidden"], cfg["seed"], cfg.get("readout", "mean"))
    model = skeleton.with_arrays(arrays)
    model.meta = payload.get("meta", {})
    return model

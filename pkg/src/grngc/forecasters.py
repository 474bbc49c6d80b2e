"""Forecasting backbones behind one interface: KAN (SiLU base + B-spline
edge functions) and a SiLU MLP. Both map a flattened lag window of k*p values
to a p-vector prediction and are built entirely from diffengine primitives,
so input gradients and double backprop are available."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import diffengine as de
from .splines import SplineSpec, basis_node

KAN = "kan"
MLP = "mlp"


class BackboneError(Exception):
    pass


@dataclass
class KanLayer:
    w_base: np.ndarray    # (n_out, n_in)
    w_spline: np.ndarray  # (n_out, n_in)
    coef: np.ndarray      # (n_out, n_in, n_basis)


@dataclass
class MlpLayer:
    weight: np.ndarray  # (n_out, n_in)
    bias: np.ndarray    # (n_out,)


@dataclass
class Backbone:
    kind: str
    sizes: list[int]
    spec: SplineSpec
    seed: int
    layers: list = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]


def init_backbone(kind: str, sizes, spec: SplineSpec | None = None, seed: int = 0) -> Backbone:
    """Seed-determined initialization.

    KAN: base weights uniform +-1/sqrt(n_in), spline weights 1, coefficients
    small gaussian noise shrunk by the basis count. MLP: weights uniform
    +-1/sqrt(n_in), zero biases.
    """
    sizes = [int(s) for s in sizes]
    if kind not in (KAN, MLP):
        raise BackboneError(f"unknown backbone kind {kind!r}")
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise BackboneError(f"invalid layer sizes {sizes}")
    spec = spec or SplineSpec()
    rng = np.random.default_rng(seed)
    bb = Backbone(kind=kind, sizes=sizes, spec=spec, seed=seed)
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        if kind == KAN:
            bb.layers.append(KanLayer(
                w_base=rng.uniform(-1.0, 1.0, (n_out, n_in)) / np.sqrt(n_in),
                w_spline=np.ones((n_out, n_in)),
                coef=rng.normal(0.0, 0.1 / np.sqrt(spec.n_basis), (n_out, n_in, spec.n_basis)),
            ))
        else:
            bb.layers.append(MlpLayer(
                weight=rng.uniform(-1.0, 1.0, (n_out, n_in)) / np.sqrt(n_in),
                bias=np.zeros(n_out),
            ))
    return bb


def param_arrays(backbone: Backbone) -> list[np.ndarray]:
    """Trainable arrays in declaration order (the serialization order too)."""
    out = []
    for layer in backbone.layers:
        if isinstance(layer, KanLayer):
            out.extend([layer.w_base, layer.w_spline, layer.coef])
        else:
            out.extend([layer.weight, layer.bias])
    return out


def set_param_arrays(backbone: Backbone, arrays) -> None:
    arrays = list(arrays)
    i = 0
    for layer in backbone.layers:
        if isinstance(layer, KanLayer):
            layer.w_base, layer.w_spline, layer.coef = (
                np.asarray(a, dtype=np.float64) for a in arrays[i:i + 3])
            i += 3
        else:
            layer.weight, layer.bias = (
                np.asarray(a, dtype=np.float64) for a in arrays[i:i + 2])
            i += 2


def make_param_nodes(backbone: Backbone) -> list[de.Node]:
    return [de.variable(a) for a in param_arrays(backbone)]


def forward_graph(backbone: Backbone, x: de.Node, param_nodes: list[de.Node]) -> de.Node:
    """Forward pass as a graph over the given input and parameter nodes."""
    if x.value.ndim != 2 or x.shape[1] != backbone.input_dim:
        raise BackboneError(
            f"forward: window shape {x.shape} incompatible with input_dim "
            f"{backbone.input_dim}")
    batch = x.shape[0]
    h = x
    i = 0
    n_layers = len(backbone.layers)
    for li, (n_in, n_out) in enumerate(zip(backbone.sizes[:-1], backbone.sizes[1:])):
        if backbone.kind == KAN:
            wb, ws, c = param_nodes[i:i + 3]
            i += 3
            K = backbone.spec.n_basis
            base = de.matmul(de.silu(h), de.transpose(wb))
            basis = basis_node(h, backbone.spec)
            flat = de.reshape(basis, (batch, n_in * K))
            eff = de.reshape(de.mul(de.expand(ws, 2, K), c), (n_out, n_in * K))
            h = de.add(base, de.matmul(flat, de.transpose(eff)))
        else:
            w, b = param_nodes[i:i + 2]
            i += 2
            h = de.add_rowvec(de.matmul(h, de.transpose(w)), b)
            if li < n_layers - 1:
                h = de.silu(h)
    return h


def forward(backbone: Backbone, windows: np.ndarray) -> np.ndarray:
    """Plain numeric prediction, shape (batch, p)."""
    x = de.constant(np.atleast_2d(np.asarray(windows, dtype=np.float64)))
    return forward_graph(backbone, x, [de.constant(a) for a in param_arrays(backbone)]).value


def count_parameters(backbone: Backbone) -> int:
    n = 0
    for n_in, n_out in zip(backbone.sizes[:-1], backbone.sizes[1:]):
        if backbone.kind == KAN:
            n += n_out * n_in * (2 + backbone.spec.n_basis)
        else:
            n += n_out * (n_in + 1)
    return n


def save_backbone(backbone: Backbone, path) -> None:
    doc = {
        "kind": backbone.kind,
        "sizes": backbone.sizes,
        "spec": {
            "degree": backbone.spec.degree,
            "grid_size": backbone.spec.grid_size,
            "lo": backbone.spec.lo,
            "hi": backbone.spec.hi,
        },
        "seed": backbone.seed,
        "params": [a.reshape(-1).tolist() for a in param_arrays(backbone)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_backbone(path) -> Backbone:
    with open(path) as fh:
        doc = json.load(fh)
    spec = SplineSpec(**doc["spec"])
    bb = init_backbone(doc["kind"], doc["sizes"], spec, doc["seed"])
    shaped = []
    for ref, flat in zip(param_arrays(bb), doc["params"]):
        shaped.append(np.asarray(flat, dtype=np.float64).reshape(ref.shape))
    set_param_arrays(bb, shaped)
    return bb

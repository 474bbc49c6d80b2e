"""GRNGC itself: prediction loss, input-gradient causal scores, the L1
penalty on those gradients (optimized by exact double backprop), Adam
training, and final score-matrix extraction."""
from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffengine as de
from .datagen import TimeSeries, WindowedDataset, make_windows, standardize
from .forecasters import (Backbone, count_parameters, forward_graph,
                          init_backbone, make_param_nodes, param_arrays,
                          set_param_arrays)
from .splines import SplineSpec


class TrainError(Exception):
    pass


@dataclass
class GcMatrix:
    """scores[j, i] is the averaged |d s_j / d x_i| score for edge i -> j."""

    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not np.all(np.isfinite(self.scores)) or np.any(self.scores < 0):
            raise TrainError("causal scores must be finite and non-negative")

    @property
    def p(self) -> int:
        return self.scores.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            for row in self.scores:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "GcMatrix":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"scores": self.scores.tolist()}, fh)


@dataclass
class TrainConfig:
    lag: int = 5
    lam: float = 1e-3
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 256  # 0 = full batch
    seed: int = 0
    backbone: str = "kan"
    hidden: tuple = (128,)
    degree: int = 3
    grid_size: int = 5
    patience: int = 15
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.lam < 0:
            raise TrainError(f"lambda must be >= 0, got {self.lam}")
        if self.epochs < 1:
            raise TrainError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 <= self.val_fraction < 0.5:
            raise TrainError(f"val_fraction must be in [0, 0.5), got {self.val_fraction}")

    def spline_spec(self) -> SplineSpec:
        return SplineSpec(degree=self.degree, grid_size=self.grid_size)


@dataclass
class TrainReport:
    pred_losses: list = field(default_factory=list)
    sparsity_losses: list = field(default_factory=list)
    total_losses: list = field(default_factory=list)
    gc: GcMatrix | None = None
    seconds: float = 0.0
    n_params: int = 0
    epochs_run: int = 0
    config: dict = field(default_factory=dict)
    backbone: Backbone | None = None

    def to_json(self, path) -> None:
        doc = {
            "pred_losses": self.pred_losses,
            "sparsity_losses": self.sparsity_losses,
            "total_losses": self.total_losses,
            "seconds": self.seconds,
            "n_params": self.n_params,
            "epochs_run": self.epochs_run,
            "config": self.config,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)


def _build_forward(backbone: Backbone, inputs: np.ndarray):
    x = de.variable(inputs)
    params = make_param_nodes(backbone)
    pred = forward_graph(backbone, x, params)
    return x, params, pred


def _mse(pred: de.Node, targets: np.ndarray) -> de.Node:
    return de.reduce_mean(de.square(de.sub(pred, de.constant(targets))))


def prediction_loss(backbone: Backbone, dataset: WindowedDataset) -> de.Node:
    """Mean squared error of the one-step prediction over samples and outputs."""
    _, _, pred = _build_forward(backbone, dataset.inputs)
    return _mse(pred, dataset.targets)


def summed_outputs(backbone: Backbone, dataset: WindowedDataset):
    """One differentiable scalar per output series: s_j = sum_t xhat_{t,j}.

    Returns (list of p scalar nodes, the shared input node they depend on).
    """
    x, _, pred = _build_forward(backbone, dataset.inputs)
    s = [de.reduce_sum(de.narrow(pred, 1, j, 1)) for j in range(dataset.p)]
    return s, x


def input_gradient_matrix(s_j: de.Node, x: de.Node, lag: int,
                          create_graph: bool = False) -> de.Node:
    """Gradient of s_j w.r.t. every input element, shaped (sample, lag, var)."""
    (g,) = de.backward(s_j, [x], create_graph=create_graph)
    n, kp = x.shape
    return de.reshape(g, (n, lag, kp // lag))


def gc_average(gradients: de.Node) -> de.Node:
    """Row of the causal matrix: mean of |gradient| over samples and lags."""
    return de.reduce_mean(de.reduce_mean(de.absval(gradients), axis=0), axis=0)


def sparsity_loss(gc_rows, lam: float) -> de.Node:
    """lambda * sum of L1 norms of the causal-score rows.

    Rows are element-wise absolute values already, so the L1 norm is the sum."""
    total = de.reduce_sum(gc_rows[0])
    for row in gc_rows[1:]:
        total = de.add(total, de.reduce_sum(row))
    return de.scale(total, lam)


class LossGraph:
    """Shared-forward graph for one optimization step."""

    def __init__(self, backbone: Backbone, dataset: WindowedDataset, lam: float):
        self.x, self.params, pred = _build_forward(backbone, dataset.inputs)
        self.pred_loss = _mse(pred, dataset.targets)
        if lam > 0:
            rows = []
            for j in range(dataset.p):
                s_j = de.reduce_sum(de.narrow(pred, 1, j, 1))
                g = input_gradient_matrix(s_j, self.x, dataset.lag, create_graph=True)
                rows.append(gc_average(g))
            self.sparsity = sparsity_loss(rows, lam)
            self.loss = de.add(self.pred_loss, self.sparsity)
        else:
            self.sparsity = de.constant(0.0)
            self.loss = self.pred_loss


def total_loss(backbone: Backbone, dataset: WindowedDataset, lam: float) -> de.Node:
    """Combined objective: prediction loss plus the gradient-L1 penalty."""
    return LossGraph(backbone, dataset, lam).loss


def infer_gc_matrix(backbone: Backbone, dataset: WindowedDataset) -> GcMatrix:
    """Post-hoc causal scores: per-series summed outputs, input gradients,
    absolute temporal averaging."""
    s, x = summed_outputs(backbone, dataset)
    rows = []
    for j in range(dataset.p):
        g = input_gradient_matrix(s[j], x, dataset.lag, create_graph=False)
        rows.append(gc_average(g).value)
    return GcMatrix(np.stack(rows))


def _adam_step(params, grads, m, v, t, lr, b1=0.9, b2=0.999, eps=1e-8):
    for i, (p, g) in enumerate(zip(params, grads)):
        m[i] = b1 * m[i] + (1 - b1) * g
        v[i] = b2 * v[i] + (1 - b2) * g * g
        mhat = m[i] / (1 - b1 ** t)
        vhat = v[i] / (1 - b2 ** t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)


def _batches(dataset: WindowedDataset, batch_size: int):
    n = dataset.n_samples
    if batch_size <= 0 or batch_size >= n:
        yield dataset
        return
    for start in range(0, n, batch_size):
        yield WindowedDataset(dataset.inputs[start:start + batch_size],
                              dataset.targets[start:start + batch_size],
                              dataset.lag)


def train(series: TimeSeries, cfg: TrainConfig) -> TrainReport:
    """Standardize, window, fit by Adam on the combined loss, and score.

    Splits train/validation chronologically and stops early when validation
    prediction loss has not improved for `patience` epochs. Fully determined
    by the config and seed.
    """
    if series.T <= cfg.lag + 10:
        raise TrainError(f"need T > lag + 10, got T={series.T}, lag={cfg.lag}")
    start_time = time.perf_counter()

    scaled, _, _ = standardize(series)
    full = make_windows(scaled, cfg.lag)
    n_val = int(full.n_samples * cfg.val_fraction)
    n_train = full.n_samples - n_val
    train_set = WindowedDataset(full.inputs[:n_train], full.targets[:n_train], cfg.lag)
    val_set = (WindowedDataset(full.inputs[n_train:], full.targets[n_train:], cfg.lag)
               if n_val > 0 else None)

    sizes = [cfg.lag * series.p, *cfg.hidden, series.p]
    backbone = init_backbone(cfg.backbone, sizes, cfg.spline_spec(), cfg.seed)
    params = param_arrays(backbone)
    m = [np.zeros_like(a) for a in params]
    v = [np.zeros_like(a) for a in params]

    report = TrainReport(n_params=count_parameters(backbone),
                         config=dataclasses.asdict(cfg))
    best_val = np.inf
    stale = 0
    step = 0
    for epoch in range(cfg.epochs):
        ep_pred = ep_sparse = ep_total = 0.0
        n_batches = 0
        for batch in _batches(train_set, cfg.batch_size):
            graph = LossGraph(backbone, batch, cfg.lam)
            loss_val = float(graph.loss.value)
            if not np.isfinite(loss_val):
                raise TrainError(f"non-finite loss at epoch {epoch}")
            grads = de.backward(graph.loss, graph.params)
            step += 1
            _adam_step(params, [g.value for g in grads], m, v, step, cfg.lr)
            set_param_arrays(backbone, params)
            ep_pred += float(graph.pred_loss.value)
            ep_sparse += float(graph.sparsity.value)
            ep_total += loss_val
            n_batches += 1
        report.pred_losses.append(ep_pred / n_batches)
        report.sparsity_losses.append(ep_sparse / n_batches)
        report.total_losses.append(ep_total / n_batches)
        report.epochs_run = epoch + 1

        if val_set is not None:
            val_loss = float(prediction_loss(backbone, val_set).value)
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    report.gc = infer_gc_matrix(backbone, full)
    report.seconds = time.perf_counter() - start_time
    report.backbone = backbone
    return report

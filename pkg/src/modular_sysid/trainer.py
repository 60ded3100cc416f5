"""Training of the structured (modular) model and the monolithic baseline."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .composition import Dataset, GroundTruth, Provenance, compose, fmt, grid_inputs
from .errors import DomainError, InvalidConfigError, ShapeError
from .nnet import AdamState, MlpFunction, adam_step, init_kaiming

log = logging.getLogger(__name__)

DEFAULT_HIDDEN = (20, 20, 20, 20)
THETA_INIT = 3.0


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class ModularModel:
    """One 1->1 surrogate per module composed through the resource-sharing map.

    ``theta_hat`` is learnable unless ``learn_theta`` is False, in which case it
    stays at its initial value. With ``positive_output`` the surrogate outputs
    pass through a softplus before composition.
    """

    kind = "modular"

    def __init__(self, surrogates: Sequence[MlpFunction], theta_hat, learn_theta: bool = True,
                 positive_output: bool = False):
        theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=np.float64))
        if len(surrogates) != len(theta_hat):
            raise ShapeError("one theta per surrogate required")
        for net in surrogates:
            if net.layer_sizes[0] != 1 or net.layer_sizes[-1] != 1:
                raise ShapeError("module surrogates must map R -> R")
        self.learn_theta = learn_theta
        self.positive_output = positive_output
        sizes = [net.params.size for net in surrogates]
        total = sum(sizes) + (len(theta_hat) if learn_theta else 0)
        self.params = np.empty(total)
        self.surrogates = list(surrogates)
        pos = 0
        for net, size in zip(self.surrogates, sizes):
            self.params[pos:pos + size] = net.params
            net.bind(self.params[pos:pos + size])
            pos += size
        self._net_slices = np.cumsum([0] + sizes)
        if learn_theta:
            self.params[pos:] = theta_hat
            self.theta_hat = self.params[pos:]
        else:
            self.theta_hat = theta_hat.copy()

    @classmethod
    def initialize(cls, n_modules: int, seed: int, hidden: Sequence[int] = DEFAULT_HIDDEN,
                   theta_init: float | Sequence[float] = THETA_INIT, learn_theta: bool = True,
                   positive_output: bool = False, bias_init: str = "zeros") -> "ModularModel":
        children = np.random.SeedSequence(seed).spawn(n_modules)
        nets = [init_kaiming([1, *hidden, 1], np.random.default_rng(c), bias_init) for c in children]
        theta = np.broadcast_to(np.asarray(theta_init, dtype=np.float64), (n_modules,))
        return cls(nets, theta, learn_theta=learn_theta, positive_output=positive_output)

    @property
    def n_modules(self) -> int:
        return len(self.surrogates)

    def module_outputs(self, u, record: bool = False) -> np.ndarray:
        """Surrogate values f_hat_i(u_i), shape (batch, n)."""
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        if u.shape[1] != self.n_modules:
            raise ShapeError(f"expected {self.n_modules} inputs per sample, got {u.shape[1]}")
        raw = np.concatenate([net.forward(u[:, i:i + 1], record=record)
                              for i, net in enumerate(self.surrogates)], axis=1)
        if self.positive_output:
            self._raw = raw
            return _softplus(raw)
        return raw

    def predict(self, u) -> np.ndarray:
        return compose(self.theta_hat, self.module_outputs(u))

    def loss_and_grad(self, u, target) -> tuple[float, np.ndarray]:
        y = self.module_outputs(u, record=True)
        denom = 1.0 + y.sum(axis=1, keepdims=True)
        pred = self.theta_hat * y / denom
        resid = pred - target
        n = len(u)
        loss = float(np.sum(resid * resid)) / n
        g = (2.0 / n) * resid                                # dL/dG_hat
        dy = (g * self.theta_hat - np.sum(g * pred, axis=1, keepdims=True)) / denom
        if self.positive_output:
            dy *= _sigmoid(self._raw)
        grad = np.empty_like(self.params)
        for i, net in enumerate(self.surrogates):
            grad[self._net_slices[i]:self._net_slices[i + 1]] = net.backward(dy[:, i:i + 1]).flat
        if self.learn_theta:
            grad[self._net_slices[-1]:] = np.sum(g * y / denom, axis=0)
        return loss, grad

    def negativity_report(self, points: int = 1001) -> dict:
        """Minimum of each surrogate on a uniform grid of [0, 1]; flags negative values."""
        u = np.linspace(0.0, 1.0, points)[:, None]
        vals = self.module_outputs(np.repeat(u, self.n_modules, axis=1))
        mins = vals.min(axis=0)
        return {"min_value": mins.tolist(), "negative": bool((mins < 0).any())}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "surrogates": [net.to_dict() for net in self.surrogates],
            "theta_hat": self.theta_hat.tolist(),
            "learn_theta": self.learn_theta,
            "positive_output": self.positive_output,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModularModel":
        nets = [MlpFunction.from_dict(s) for s in d["surrogates"]]
        return cls(nets, d["theta_hat"], learn_theta=d.get("learn_theta", True),
                   positive_output=d.get("positive_output", False))


class MonolithicModel:
    """A single network from all inputs to all outputs, with no structural prior."""

    kind = "monolithic"

    def __init__(self, net: MlpFunction):
        self.net = net
        self.params = net.params

    @classmethod
    def initialize(cls, n_inputs: int, n_outputs: int, seed: int,
                   hidden: Sequence[int] = (50, 50, 50, 50), bias_init: str = "zeros") -> "MonolithicModel":
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        return cls(init_kaiming([n_inputs, *hidden, n_outputs], rng, bias_init))

    def predict(self, u) -> np.ndarray:
        return self.net.forward(np.atleast_2d(np.asarray(u, dtype=np.float64)), record=False)

    def loss_and_grad(self, u, target) -> tuple[float, np.ndarray]:
        pred = self.net.forward(u)
        resid = pred - target
        n = len(u)
        return float(np.sum(resid * resid)) / n, self.net.backward((2.0 / n) * resid).flat

    def to_dict(self) -> dict:
        return {"kind": self.kind, "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "MonolithicModel":
        return cls(MlpFunction.from_dict(d["net"]))


def loss(model, data: Dataset) -> float:
    """Mean over samples of the summed squared output errors."""
    if len(data) == 0:
        raise DomainError("loss of an empty dataset is undefined")
    pred = model.predict(data.inputs)
    if pred.shape != data.outputs.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {data.outputs.shape}")
    return float(np.sum((pred - data.outputs) ** 2)) / len(data)


@dataclass
class MetricsRecord:
    epoch: int
    loss: float
    E_G: np.ndarray
    E_f: np.ndarray | None = None
    E_theta: np.ndarray | None = None


def output_errors(pred, target) -> np.ndarray:
    """Per-output max absolute error normalised by the max target value."""
    return np.max(np.abs(pred - target), axis=0) / np.max(target, axis=0)


def compute_metrics(model, data: Dataset, truth: GroundTruth | None, epoch: int) -> MetricsRecord:
    pred = model.predict(data.inputs)
    rec = MetricsRecord(epoch, float(np.sum((pred - data.outputs) ** 2)) / len(data),
                        output_errors(pred, data.outputs))
    if truth is not None and isinstance(model, ModularModel):
        f_true = truth.module_outputs(data.inputs)
        rec.E_f = output_errors(model.module_outputs(data.inputs), f_true)
        th = np.asarray(truth.theta)
        rec.E_theta = np.abs(model.theta_hat - th) / th
    return rec


def _check_hyper(epochs: int, lr: float) -> None:
    if epochs < 0:
        raise InvalidConfigError(f"epochs must be nonnegative, got {epochs}")
    if not lr > 0:
        raise InvalidConfigError(f"learning rate must be positive, got {lr}")


def _fit(model, data: Dataset, truth, epochs: int, lr: float, log_stride: int) -> list[MetricsRecord]:
    state = AdamState(learning_rate=lr)
    u, target = data.inputs, data.outputs
    records = []
    if log_stride > 0:
        records.append(compute_metrics(model, data, truth, 0))
    for epoch in range(1, epochs + 1):
        _, grad = model.loss_and_grad(u, target)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient at epoch {epoch}")
        adam_step(model.params, grad, state)
        if log_stride > 0 and (epoch % log_stride == 0 or epoch == epochs):
            records.append(compute_metrics(model, data, truth, epoch))
    return records


def train_modular(model: ModularModel | None, data: Dataset, truth: GroundTruth, epochs: int,
                  lr: float, seed: int = 0, log_stride: int = 100,
                  hidden: Sequence[int] = DEFAULT_HIDDEN) -> tuple[ModularModel, list[MetricsRecord]]:
    """Full-batch Adam on all surrogate weights and theta_hat jointly.

    When ``model`` is None a fresh one is built from ``seed`` with theta_hat = 3.
    Metrics are recorded at epoch 0, every ``log_stride`` epochs and at the last
    epoch; ``log_stride=0`` disables recording.
    """
    if epochs <= 0:
        raise InvalidConfigError(f"epochs must be positive, got {epochs}")
    _check_hyper(epochs, lr)
    if data.provenance is not Provenance.UNIMODULAR:
        log.warning("training modular model on %s data", data.provenance.value)
    if model is None:
        model = ModularModel.initialize(data.n_inputs, seed, hidden=hidden)
    if model.n_modules != data.n_inputs:
        raise ShapeError("model and dataset disagree on the number of modules")
    return model, _fit(model, data, truth, epochs, lr, log_stride)


def train_monolithic(model: MonolithicModel | None, data: Dataset, epochs: int, lr: float,
                     seed: int = 0, log_stride: int = 100,
                     hidden: Sequence[int] = (50, 50, 50, 50)) -> tuple[MonolithicModel, list[MetricsRecord]]:
    """Same objective and optimiser as :func:`train_modular`, on an unstructured network."""
    _check_hyper(epochs, lr)
    if model is None:
        model = MonolithicModel.initialize(data.n_inputs, data.n_outputs, seed, hidden=hidden)
    if epochs == 0:
        return model, []
    return model, _fit(model, data, None, epochs, lr, log_stride)


@dataclass
class GridErrors:
    """Pointwise relative errors; NaN marks points where the true output is zero."""

    inputs: np.ndarray
    errors: np.ndarray

    def median(self, mask: np.ndarray | None = None) -> np.ndarray:
        e = self.errors if mask is None else self.errors[mask]
        return np.nanmedian(e, axis=0)

    def write_csv(self, path) -> None:
        n, m = self.inputs.shape[1], self.errors.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"u_{i + 1}" for i in range(n)] + [f"E_G{i + 1}" for i in range(m)])
            for u, e in zip(self.inputs, self.errors):
                w.writerow([fmt(v) for v in u] + ["nan" if np.isnan(v) else fmt(v) for v in e])


def evaluate_grid(model, truth: GroundTruth, grid_points_per_axis: int = 100) -> GridErrors:
    """Relative error |M(u)_i - G_i(u)| / G_i(u) on a lattice covering the input intervals."""
    u = grid_inputs(truth.input_set.intervals, grid_points_per_axis)
    g_true = truth.outputs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.abs(model.predict(u) - g_true) / g_true
    err[g_true == 0] = np.nan
    return GridErrors(u, err)


def threshold_crossings(records: Sequence[MetricsRecord], thresholds=(0.1, 0.05, 0.02)) -> list[dict]:
    """First recorded epoch at which max_i E_G_i drops below each threshold."""
    out = []
    for t in thresholds:
        hit = next((r for r in records if np.max(r.E_G) < t), None)
        if hit is None:
            out.append({"threshold": t, "epoch": None, "E_f": None, "E_theta": None})
            continue
        out.append({
            "threshold": t,
            "epoch": hit.epoch,
            "E_f": None if hit.E_f is None else float(np.max(hit.E_f)),
            "E_theta": None if hit.E_theta is None else float(np.max(hit.E_theta)),
        })
    return out


def metrics_header(n_outputs: int, n_modules: int | None) -> list[str]:
    cols = ["epoch", "loss"] + [f"E_G{i + 1}" for i in range(n_outputs)]
    if n_modules:
        cols += [f"E_f{i + 1}" for i in range(n_modules)] + [f"E_theta{i + 1}" for i in range(n_modules)]
    return cols


def write_metrics_csv(records: Sequence[MetricsRecord], path) -> None:
    if not records:
        Path(path).write_text("epoch,loss\n")
        return
    first = records[0]
    with_f = first.E_f is not None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(metrics_header(len(first.E_G), len(first.E_f) if with_f else None))
        for r in records:
            row = [str(r.epoch), fmt(r.loss)] + [fmt(v) for v in r.E_G]
            if with_f:
                row += [fmt(v) for v in r.E_f] + [fmt(v) for v in r.E_theta]
            w.writerow(row)


def save_checkpoint(model, path, seed: int, epoch: int) -> None:
    doc = model.to_dict()
    doc.update(seed=seed, epoch=epoch)
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text())
    kinds = {"modular": ModularModel, "monolithic": MonolithicModel}
    if doc.get("kind") not in kinds:
        raise InvalidConfigError(f"unknown checkpoint kind {doc.get('kind')!r}")
    return kinds[doc["kind"]].from_dict(doc)

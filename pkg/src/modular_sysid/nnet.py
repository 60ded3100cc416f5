"""Small fully connected ReLU networks with hand-written backprop and Adam.

Parameters of a network live in one contiguous float64 vector (``params``);
``weights[l]`` and ``biases[l]`` are reshaped views into it, layer by layer,
weight before bias. Weight matrices are stored (fan_in, fan_out) so a batch
``x`` of shape (batch, fan_in) maps as ``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError, ShapeError, StateError


def _layout(layer_sizes: Sequence[int]) -> list[tuple[slice, tuple[int, int], slice]]:
    out, pos = [], 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = slice(pos, pos + fan_in * fan_out)
        pos = w.stop
        b = slice(pos, pos + fan_out)
        pos = b.stop
        out.append((w, (fan_in, fan_out), b))
    return out


def n_parameters(layer_sizes: Sequence[int]) -> int:
    return sum(i * o + o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))


def _check_sizes(layer_sizes) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise InvalidParameterError(f"invalid architecture {list(layer_sizes)}")
    return sizes


@dataclass
class Gradients:
    """Parameter gradients in the same flat layout as the network."""

    flat: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray]


class MlpFunction:
    """ReLU on hidden layers, identity on the output layer."""

    def __init__(self, layer_sizes: Sequence[int], params: np.ndarray | None = None):
        self.layer_sizes = _check_sizes(layer_sizes)
        size = n_parameters(self.layer_sizes)
        if params is None:
            params = np.zeros(size)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (size,):
            raise ShapeError(f"expected {size} parameters, got shape {params.shape}")
        self.bind(params)
        self._cache = None

    def bind(self, buffer: np.ndarray) -> None:
        """Make ``buffer`` the parameter storage (values are not copied)."""
        self.params = buffer
        self.weights, self.biases = [], []
        for w, shape, b in _layout(self.layer_sizes):
            self.weights.append(buffer[w].reshape(shape))
            self.biases.append(buffer[b])

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def copy(self) -> "MlpFunction":
        return MlpFunction(self.layer_sizes, self.params.copy())

    def forward(self, x, record: bool = True) -> np.ndarray:
        """Evaluate on a batch (batch, in) or a single input vector (in,)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.ndim != 2 or a.shape[1] != self.layer_sizes[0]:
            raise ShapeError(f"input width {a.shape[-1]} does not match layer size {self.layer_sizes[0]}")
        acts, pre = [a], []
        last = self.n_layers - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W
            z += b
            pre.append(z)
            a = np.maximum(z, 0.0) if l < last else z
            acts.append(a)
        if record:
            self._cache = (acts, pre)
        return a[0] if single else a

    __call__ = forward

    @property
    def preactivations(self) -> list[np.ndarray]:
        if self._cache is None:
            raise StateError("no forward pass recorded")
        return self._cache[1]

    def backward(self, grad_out) -> Gradients:
        """Gradients of a batch loss given dL/d(output) for every sample of the recorded batch.

        Rectifier derivative at exactly zero is taken as 0.
        """
        if self._cache is None:
            raise StateError("backward called without a recorded forward pass")
        acts, pre = self._cache
        delta = np.asarray(grad_out, dtype=np.float64)
        if delta.ndim == 1:
            delta = delta[None, :]
        if delta.shape != acts[-1].shape:
            raise ShapeError(f"upstream gradient shape {delta.shape} != output shape {acts[-1].shape}")
        flat = np.empty_like(self.params)
        grads = Gradients(flat, [], [])
        for w, shape, b in _layout(self.layer_sizes):
            grads.weights.append(flat[w].reshape(shape))
            grads.biases.append(flat[b])
        for l in range(self.n_layers - 1, -1, -1):
            np.matmul(acts[l].T, delta, out=grads.weights[l])
            delta.sum(axis=0, out=grads.biases[l])
            if l > 0:
                delta = delta @ self.weights[l].T
                delta *= pre[l - 1] > 0
        return grads

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpFunction":
        net = cls(d["layer_sizes"])
        for W, b, Wd, bd in zip(net.weights, net.biases, d["weights"], d["biases"]):
            W[...] = np.asarray(Wd, dtype=np.float64).reshape(W.shape)
            b[...] = np.asarray(bd, dtype=np.float64)
        return net


def init_kaiming(layer_sizes: Sequence[int], seed, bias_init: str = "zeros") -> MlpFunction:
    """He-normal weights (std ``sqrt(2 / fan_in)``).

    Biases are zero, or with ``bias_init="uniform"`` drawn from
    ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``. ``seed`` may be an int, a
    ``SeedSequence`` or a ``Generator``.
    """
    if bias_init not in ("zeros", "uniform"):
        raise InvalidParameterError(f"unknown bias_init {bias_init!r}")
    net = MlpFunction(layer_sizes)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for W, b in zip(net.weights, net.biases):
        W[...] = rng.normal(0.0, np.sqrt(2.0 / W.shape[0]), size=W.shape)
        if bias_init == "uniform":
            bound = 1.0 / np.sqrt(W.shape[0])
            b[...] = rng.uniform(-bound, bound, size=b.shape)
    return net


def forward(net: MlpFunction, x) -> np.ndarray:
    return net.forward(x)


def backward(net: MlpFunction, grad_out) -> Gradients:
    return net.backward(grad_out)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidParameterError("learning rate must be positive")


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update applied in place.

    ``params`` and ``grads`` are matching arrays or matching lists of arrays.
    Moments are allocated lazily on the first call. Returns ``(params, state)``.
    """
    single = isinstance(params, np.ndarray)
    p_list = [params] if single else list(params)
    g_list = [grads] if isinstance(grads, np.ndarray) else list(grads)
    if len(p_list) != len(g_list) or any(p.shape != g.shape for p, g in zip(p_list, g_list)):
        raise ShapeError("parameter and gradient shapes disagree")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in p_list]
        state.second_moment = [np.zeros_like(p) for p in p_list]
    elif any(m.shape != p.shape for m, p in zip(state.first_moment, p_list)) \
            or len(state.first_moment) != len(p_list):
        raise ShapeError("optimizer moments do not match parameter shapes")

    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step_count
    c2 = 1.0 - b2 ** state.step_count
    step = state.learning_rate / c1
    for p, g, m, v in zip(p_list, g_list, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += state.epsilon
        p -= step * m / denom
    return params, state

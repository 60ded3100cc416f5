"""Finite-difference verification of the hand-written backward pass."""

from __future__ import annotations

import numpy as np

from .nnet import MlpFunction, init_kaiming

KINK_MARGIN = 1e-4


def batch_loss(net: MlpFunction, x, target, dtype=np.longdouble):
    """Mean summed squared error, evaluated layer by layer in ``dtype``.

    Deliberately separate from ``MlpFunction.forward``; extended precision keeps
    the rounding floor of the difference quotient well below the tolerance.
    """
    a = np.asarray(x, dtype=dtype)
    last = net.n_layers - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a.dot(W.astype(dtype)) + b.astype(dtype)
        a = np.where(z > 0, z, dtype(0)) if l < last else z
    return np.sum((a - np.asarray(target, dtype=dtype)) ** 2) / dtype(len(x))


def finite_difference_gradient(net: MlpFunction, x, target, step: float = 1e-6) -> np.ndarray:
    """Central differences of :func:`batch_loss`, one parameter at a time."""
    grad = np.empty_like(net.params)
    step = float(step)
    for k in range(net.params.size):
        orig = net.params[k]
        net.params[k] = orig + step
        up = batch_loss(net, x, target)
        net.params[k] = orig - step
        down = batch_loss(net, x, target)
        net.params[k] = orig
        grad[k] = float((up - down) / (2 * np.longdouble(step)))
    return grad


def min_abs_preactivation(net: MlpFunction, x) -> float:
    net.forward(x)
    hidden = net.preactivations[:-1]
    return min((float(np.min(np.abs(z))) for z in hidden), default=np.inf)


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def random_instance(rng: np.random.Generator, max_attempts: int = 1000):
    """Random network and batch with every hidden pre-activation at least KINK_MARGIN from zero."""
    for _ in range(max_attempts):
        depth = rng.integers(1, 4)
        sizes = [int(rng.integers(1, 4))] + [int(rng.integers(2, 9)) for _ in range(depth)] + [int(rng.integers(1, 3))]
        net = init_kaiming(sizes, rng)
        for b in net.biases:
            b[...] = rng.normal(0.0, 0.3, size=b.shape)
        batch = int(rng.integers(1, 9))
        x = rng.normal(size=(batch, sizes[0]))
        target = rng.normal(size=(batch, sizes[-1]))
        if min_abs_preactivation(net, x) >= KINK_MARGIN:
            return net, x, target
    raise RuntimeError("could not draw an instance away from rectifier kinks")


def gradient_check_trials(trials: int, seed: int, step: float = 1e-6) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        net, x, target = random_instance(rng)
        out = net.forward(x)
        bp = net.backward(2.0 * (out - target) / len(x)).flat
        fd = finite_difference_gradient(net, x, target, step)
        worst = max(worst, float(np.max(relative_error(bp, fd))))
    return {"trials": trials, "seed": seed, "step": step, "max_relative_error": worst}

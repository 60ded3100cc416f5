"""Ground-truth module functions, resource-sharing composition maps and input sets."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, InvalidParameterError, ShapeError


class HillKind(str, Enum):
    ACTIVATING = "activating"
    REPRESSING = "repressing"


@dataclass(frozen=True)
class HillFunction:
    """Hill regulatory function with a basal level.

    activating: ``basal + amplitude * r / (1 + r)``
    repressing: ``basal + amplitude / (1 + r)``
    with ``r = (u / half_point) ** coefficient``.
    """

    kind: HillKind
    amplitude: float
    half_point: float
    coefficient: float
    basal: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", HillKind(self.kind))
        if self.half_point <= 0:
            raise InvalidParameterError(f"half_point must be positive, got {self.half_point}")
        if self.coefficient <= 0:
            raise InvalidParameterError(f"coefficient must be positive, got {self.coefficient}")
        if self.amplitude < 0 or self.basal < 0:
            raise InvalidParameterError("amplitude and basal must be nonnegative")

    @property
    def maximum(self) -> float:
        return self.basal + self.amplitude

    def __call__(self, u):
        return eval_hill(self, u)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "amplitude": self.amplitude,
            "half_point": self.half_point,
            "coefficient": self.coefficient,
            "basal": self.basal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HillFunction":
        return cls(
            kind=HillKind(d["kind"]),
            amplitude=float(d["amplitude"]),
            half_point=float(d["half_point"]),
            coefficient=float(d["coefficient"]),
            basal=float(d.get("basal", 0.0)),
        )


def eval_hill(h: HillFunction, u):
    """Evaluate a Hill function at scalar or array input ``u`` (must be >= 0)."""
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(u_arr < 0) or not np.all(np.isfinite(u_arr)):
        raise DomainError("Hill input must be finite and nonnegative")
    r = (u_arr / h.half_point) ** h.coefficient
    if h.kind is HillKind.ACTIVATING:
        out = h.basal + h.amplitude * r / (1.0 + r)
    else:
        out = h.basal + h.amplitude / (1.0 + r)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ResourceCompositionMap:
    """Resource-sharing map ``G_i(y) = theta_i * y_i / (1 + sum_j y_j)``."""

    theta: tuple[float, ...]

    def __post_init__(self):
        theta = tuple(float(t) for t in np.atleast_1d(self.theta))
        if not theta:
            raise InvalidParameterError("theta must have at least one entry")
        if any(t <= 0 for t in theta):
            raise InvalidParameterError("theta entries must be positive")
        object.__setattr__(self, "theta", theta)

    @property
    def n_modules(self) -> int:
        return len(self.theta)

    def __call__(self, y):
        return eval_map(self, y)


def compose(theta, y):
    """Unchecked composition kernel; ``y`` has shape (..., n), ``theta`` shape (n,)."""
    y = np.asarray(y, dtype=np.float64)
    return np.asarray(theta) * y / (1.0 + y.sum(axis=-1, keepdims=True))


def eval_map(cmap: ResourceCompositionMap, y):
    """Apply the composition map to module outputs.

    Parameters
    ----------
    cmap : ResourceCompositionMap
    y : array_like, shape (n,) or (batch, n)
        Nonnegative module outputs.

    Returns
    -------
    ndarray with the same shape as ``y``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1:] != (cmap.n_modules,):
        raise ShapeError(f"expected last dimension {cmap.n_modules}, got shape {y.shape}")
    if np.any(y < 0):
        raise DomainError("module outputs must be nonnegative")
    return compose(cmap.theta, y)


@dataclass(frozen=True)
class UniModularInputSet:
    """Inputs where one module input varies over its interval, the rest sit at the anchor."""

    intervals: tuple[tuple[float, float], ...]
    anchor: tuple[float, ...]

    def __post_init__(self):
        intervals = tuple((float(a), float(b)) for a, b in self.intervals)
        anchor = tuple(float(x) for x in self.anchor)
        if len(intervals) != len(anchor) or not intervals:
            raise ShapeError("intervals and anchor must have the same nonzero length")
        for i, ((a, b), s) in enumerate(zip(intervals, anchor)):
            if not a <= b:
                raise InvalidParameterError(f"interval {i} is reversed: [{a}, {b}]")
            if not a <= s <= b:
                raise InvalidParameterError(f"anchor component {i} = {s} outside [{a}, {b}]")
        object.__setattr__(self, "intervals", intervals)
        object.__setattr__(self, "anchor", anchor)

    @classmethod
    def default(cls, n_modules: int) -> "UniModularInputSet":
        """Unit intervals with the anchor at the right endpoints."""
        return cls(intervals=((0.0, 1.0),) * n_modules, anchor=(1.0,) * n_modules)

    @property
    def n_modules(self) -> int:
        return len(self.intervals)

    def contains(self, u) -> bool:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.n_modules,):
            return False
        off_anchor = u != np.asarray(self.anchor)
        if off_anchor.sum() > 1:
            return False
        for i, (a, b) in enumerate(self.intervals):
            if a <= u[i] <= b and not np.delete(off_anchor, i).any():
                return True
        return False

    def to_dict(self) -> dict:
        return {"intervals": [list(iv) for iv in self.intervals], "anchor": list(self.anchor)}

    @classmethod
    def from_dict(cls, d: dict) -> "UniModularInputSet":
        return cls(intervals=tuple(tuple(iv) for iv in d["intervals"]), anchor=tuple(d["anchor"]))


def sample_unimodular(input_set: UniModularInputSet, per_module: int, seed: int) -> np.ndarray:
    """Draw ``per_module`` i.i.d. uniform points on each branch of the input set.

    Output is block-major: rows ``[i*per_module, (i+1)*per_module)`` vary module ``i``.
    """
    if per_module < 1:
        raise InvalidParameterError("per_module must be >= 1")
    rng = np.random.default_rng(seed)
    n = input_set.n_modules
    out = np.tile(np.asarray(input_set.anchor), (n * per_module, 1))
    for i, (a, b) in enumerate(input_set.intervals):
        out[i * per_module:(i + 1) * per_module, i] = rng.uniform(a, b, size=per_module)
    return out


def sample_uniform(interval: tuple[float, float], count: int, seed: int) -> np.ndarray:
    """Uniform i.i.d. points on one interval, as a (count, 1) input array."""
    rng = np.random.default_rng(seed)
    return rng.uniform(interval[0], interval[1], size=(count, 1))


def grid_inputs(intervals: Sequence[tuple[float, float]], points_per_axis: int) -> np.ndarray:
    """Regular lattice including the endpoints; the first coordinate varies slowest."""
    if points_per_axis < 2:
        raise InvalidParameterError("a grid needs at least two points per axis")
    axes = [np.linspace(a, b, points_per_axis) for a, b in intervals]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


class Provenance(str, Enum):
    UNIMODULAR = "unimodular"
    GRID = "grid"
    CUSTOM = "custom"


@dataclass
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    provenance: Provenance = Provenance.CUSTOM

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64)
        self.provenance = Provenance(self.provenance)
        if len(self.inputs) != len(self.outputs):
            raise ShapeError("inputs and outputs must have equal length")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.outputs.shape[1]


@dataclass
class GroundTruth:
    """Complete description of a synthetic system: module functions, theta, input set."""

    functions: list[HillFunction]
    theta: tuple[float, ...]
    input_set: UniModularInputSet
    seed: int = 0
    cmap: ResourceCompositionMap = field(init=False)

    def __post_init__(self):
        self.cmap = ResourceCompositionMap(tuple(self.theta))
        self.theta = self.cmap.theta
        if len(self.functions) != self.cmap.n_modules or self.input_set.n_modules != self.cmap.n_modules:
            raise ShapeError("functions, theta and input set disagree on the number of modules")

    @property
    def n_modules(self) -> int:
        return self.cmap.n_modules

    def module_outputs(self, inputs) -> np.ndarray:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        return np.stack([eval_hill(f, inputs[:, i]) for i, f in enumerate(self.functions)], axis=1)

    def outputs(self, inputs) -> np.ndarray:
        return eval_map(self.cmap, self.module_outputs(inputs))

    def to_dict(self) -> dict:
        return {
            "modules": [f.to_dict() for f in self.functions],
            "theta": list(self.theta),
            "input_set": self.input_set.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        fns = [HillFunction.from_dict(m) for m in d["modules"]]
        input_set = (UniModularInputSet.from_dict(d["input_set"]) if "input_set" in d
                     else UniModularInputSet.default(len(fns)))
        return cls(functions=fns, theta=tuple(d["theta"]), input_set=input_set, seed=int(d.get("seed", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text()))


def single_module_truth() -> GroundTruth:
    """Activating module with known theta = 1 (single-module identification setup)."""
    f = HillFunction(HillKind.ACTIVATING, amplitude=0.797, half_point=0.494, coefficient=4, basal=0.443)
    return GroundTruth(functions=[f], theta=(1.0,), input_set=UniModularInputSet.default(1))


def two_module_truth() -> GroundTruth:
    """Activating + repressing modules sharing ribosomes, theta = (0.703, 0.204)."""
    f1 = HillFunction(HillKind.ACTIVATING, amplitude=0.326, half_point=0.952, coefficient=4, basal=0.176)
    f2 = HillFunction(HillKind.REPRESSING, amplitude=0.261, half_point=0.415, coefficient=2, basal=0.192)
    return GroundTruth(functions=[f1, f2], theta=(0.703, 0.204), input_set=UniModularInputSet.default(2))


def generate_dataset(fns: Sequence[HillFunction], cmap: ResourceCompositionMap, inputs,
                     provenance: Provenance | str = Provenance.CUSTOM) -> Dataset:
    """Noiseless input/output pairs ``Y = G(f_1(u_1), ..., f_n(u_n))``."""
    if len(fns) != cmap.n_modules:
        raise ShapeError(f"{len(fns)} functions for a {cmap.n_modules}-module map")
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.size == 0:
        return Dataset(np.empty((0, cmap.n_modules)), np.empty((0, cmap.n_modules)), provenance)
    if inputs.ndim != 2 or inputs.shape[1] != cmap.n_modules:
        raise ShapeError(f"inputs must have shape (k, {cmap.n_modules}), got {inputs.shape}")
    y = np.stack([eval_hill(f, inputs[:, i]) for i, f in enumerate(fns)], axis=1)
    return Dataset(inputs, eval_map(cmap, y), provenance)


def unimodular_dataset(truth: GroundTruth, per_module: int, seed: int | None = None) -> Dataset:
    seed = truth.seed if seed is None else seed
    inputs = sample_unimodular(truth.input_set, per_module, seed)
    return generate_dataset(truth.functions, truth.cmap, inputs, Provenance.UNIMODULAR)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset_csv(data: Dataset, path) -> None:
    n, m = data.inputs.shape[1], data.outputs.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"u_{i + 1}" for i in range(n)] + [f"Y_{i + 1}" for i in range(m)])
        for u, y in zip(data.inputs, data.outputs):
            w.writerow([fmt(v) for v in u] + [fmt(v) for v in y])


def read_dataset_csv(path, provenance: Provenance | str = Provenance.CUSTOM) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("u_"))
    arr = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    return Dataset(arr[:, :n], arr[:, n:], provenance)

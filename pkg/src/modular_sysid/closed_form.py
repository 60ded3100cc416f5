"""Exact algebraic identification of the two-module resource-sharing system.

With two probe inputs per module (the other input held at its anchor), the
eight measured outputs determine theta and the module values at the probes
and at the anchor. :func:`recover` is the explicit inverse of :func:`forward_F`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .composition import GroundTruth
from .errors import DegenerateProbeError, InvalidPairError, InvalidParameterError, ShapeError, SingularityError

DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class RecoveredSystem:
    """theta and module values; ``f1_at = (f1(u1^1), f1(u1^2), f1(anchor))``, same for f2."""

    theta: tuple[float, float]
    f1_at: tuple[float, float, float]
    f2_at: tuple[float, float, float]

    def as_vector(self) -> np.ndarray:
        return np.array([*self.f1_at, *self.f2_at, *self.theta], dtype=np.float64)

    @classmethod
    def from_vector(cls, x) -> "RecoveredSystem":
        x = [float(v) for v in x]
        if len(x) != 8:
            raise ShapeError("expected an 8-vector")
        return cls(theta=(x[6], x[7]), f1_at=(x[0], x[1], x[2]), f2_at=(x[3], x[4], x[5]))

    def to_dict(self) -> dict:
        return {"theta": list(self.theta), "f1_at": list(self.f1_at), "f2_at": list(self.f2_at)}


@dataclass(frozen=True)
class ProbeMeasurements:
    """Probe inputs per module and the outputs
    ``(G11^1, G21^1, G12^1, G22^1, G11^2, G21^2, G12^2, G22^2)``."""

    probes: tuple[tuple[float, float], tuple[float, float]]
    g_values: tuple[float, ...]

    def __post_init__(self):
        g = tuple(float(v) for v in self.g_values)
        if len(g) != 8:
            raise ShapeError("eight measured outputs required")
        if not all(np.isfinite(g)):
            raise InvalidParameterError("measurements must be finite")
        probes = tuple((float(a), float(b)) for a, b in self.probes)
        if len(probes) != 2 or any(a == b for a, b in probes):
            raise InvalidParameterError("two distinct probes per module required")
        object.__setattr__(self, "g_values", g)
        object.__setattr__(self, "probes", probes)

    def to_dict(self) -> dict:
        return {"probes": [list(p) for p in self.probes], "g_values": list(self.g_values)}

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeMeasurements":
        return cls(probes=tuple(tuple(p) for p in d["probes"]), g_values=tuple(d["g_values"]))


def forward_F(x: RecoveredSystem, probes=((0.0, 1.0), (0.0, 1.0))) -> ProbeMeasurements:
    """Outputs of the two-module map at the four probe conditions."""
    th1, th2 = x.theta
    a1, a2 = x.f1_at[2], x.f2_at[2]
    g = []
    for j in range(2):
        d1 = 1.0 + x.f1_at[j] + a2
        d2 = 1.0 + a1 + x.f2_at[j]
        if d1 == 0 or d2 == 0:
            raise SingularityError(f"zero denominator at probe {j + 1}")
        g += [th1 * x.f1_at[j] / d1, th2 * a2 / d1, th1 * a1 / d2, th2 * x.f2_at[j] / d2]
    return ProbeMeasurements(probes=probes, g_values=tuple(g))


def recover(m: ProbeMeasurements) -> RecoveredSystem:
    """Invert :func:`forward_F`: theta_1, then theta_2, then f2(1), f1(1), then the probe values."""
    g11_1, g21_1, g12_1, g22_1, g11_2, g21_2, g12_2, g22_2 = m.g_values
    if 0.0 in (g21_1, g21_2, g12_1, g12_2):
        raise SingularityError("a cross-module output is zero; theta_i and f_i(anchor) must be nonzero")

    r1, r2 = g11_1 / g21_1, g11_2 / g21_2      # (theta1/theta2) f1(u1^j)/f2(1)
    s1, s2 = g22_1 / g12_1, g22_2 / g12_2      # (theta2/theta1) f2(u2^k)/f1(1)

    den1 = 1.0 / g21_1 - 1.0 / g21_2
    if abs(den1) < DEGENERACY_TOL:
        raise DegenerateProbeError(1)
    theta1 = (r1 - r2) / den1

    den2 = 1.0 / g12_1 - 1.0 / g12_2
    if abs(den2) < DEGENERACY_TOL:
        raise DegenerateProbeError(2)
    theta2 = (s1 - s2) / den2
    if theta1 == 0 or theta2 == 0:
        raise SingularityError("recovered a zero theta")

    inv_a2 = theta2 / g21_1 - 1.0 - theta2 / theta1 * r1
    inv_a1 = theta1 / g12_1 - 1.0 - theta1 / theta2 * s1
    if inv_a1 == 0 or inv_a2 == 0:
        raise SingularityError("anchor module value is unbounded")
    a2, a1 = 1.0 / inv_a2, 1.0 / inv_a1

    scale1 = theta2 / theta1 * a2
    scale2 = theta1 / theta2 * a1
    return RecoveredSystem(
        theta=(theta1, theta2),
        f1_at=(r1 * scale1, r2 * scale1, a1),
        f2_at=(s1 * scale2, s2 * scale2, a2),
    )


def measure(truth: GroundTruth, probes) -> ProbeMeasurements:
    """Probe a two-module ground truth at (u1^j, anchor_2) and (anchor_1, u2^k)."""
    if truth.n_modules != 2:
        raise ShapeError("probe measurements are defined for two modules")
    s1, s2 = truth.input_set.anchor
    (p11, p12), (p21, p22) = probes
    pts = np.array([[p11, s2], [s1, p21], [p12, s2], [s1, p22]])
    G = truth.outputs(pts)
    return ProbeMeasurements(probes=probes, g_values=tuple(G.ravel()))


def truth_values(truth: GroundTruth, probes) -> RecoveredSystem:
    (p11, p12), (p21, p22) = probes
    f1, f2 = truth.functions
    s1, s2 = truth.input_set.anchor
    return RecoveredSystem(
        theta=tuple(truth.theta),
        f1_at=(f1(p11), f1(p12), f1(s1)),
        f2_at=(f2(p21), f2(p22), f2(s2)),
    )


def counterexample_pair(theta: float, theta_hat: float, f: Callable, check_points: int = 1001) -> Callable:
    """Return f_hat with ``theta_hat f_hat/(1+f_hat) == theta f/(1+f)`` on [0, 1].

    ``f_hat = (theta/theta_hat) f / (1 + ((theta_hat - theta)/theta_hat) f)``, obtained
    by solving that identity for f_hat. Raises InvalidPairError if the denominator
    is not positive on a uniform grid of ``check_points`` points in [0, 1].
    """
    if theta <= 0 or theta_hat <= 0:
        raise InvalidParameterError("theta and theta_hat must be positive")
    ratio = theta / theta_hat
    c = (theta_hat - theta) / theta_hat

    u = np.linspace(0.0, 1.0, check_points)
    denom = 1.0 + c * np.asarray(f(u), dtype=np.float64)
    if np.any(denom <= 0):
        raise InvalidPairError(f"construction denominator reaches {denom.min():.3g} on [0, 1]")

    def f_hat(u):
        fu = np.asarray(f(u), dtype=np.float64)
        out = ratio * fu / (1.0 + c * fu)
        return float(out) if out.ndim == 0 else out

    return f_hat


def _sample_admissible(rng: np.random.Generator) -> RecoveredSystem:
    def module_values():
        while True:
            v = rng.uniform(0.05, 2.0, size=3)
            if abs(v[0] - v[1]) >= 0.05:
                return tuple(v)

    return RecoveredSystem(theta=tuple(rng.uniform(0.1, 2.0, size=2)),
                           f1_at=module_values(), f2_at=module_values())


def relative_error(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def injectivity_probe(trials: int, seed: int, separation_tol: float = 1e-12,
                      roundtrip_tol: float = 1e-9) -> dict:
    """Random search for a violation of injectivity of :func:`forward_F`.

    Each trial draws two admissible parameter vectors x != x'. A violation is
    recorded when their images are closer than ``separation_tol`` (relative to
    the image scale) or when ``recover(forward_F(x))`` misses ``x`` by more than
    ``roundtrip_tol`` relative error.
    """
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    violations, worst_roundtrip, min_sep = 0, 0.0, np.inf
    for _ in range(trials):
        x, x2 = _sample_admissible(rng), _sample_admissible(rng)
        y = np.asarray(forward_F(x).g_values)
        y2 = np.asarray(forward_F(x2).g_values)
        sep = np.max(np.abs(y - y2)) / max(1.0, np.max(np.abs(y)))
        err = relative_error(recover(forward_F(x)).as_vector(), x.as_vector())
        min_sep = min(min_sep, sep)
        worst_roundtrip = max(worst_roundtrip, err)
        if sep <= separation_tol or err > roundtrip_tol:
            violations += 1
    return {"trials": trials, "violations": violations,
            "max_roundtrip_error": worst_roundtrip, "min_separation": float(min_sep)}


def read_probe_json(path) -> ProbeMeasurements:
    return ProbeMeasurements.from_dict(json.loads(Path(path).read_text()))

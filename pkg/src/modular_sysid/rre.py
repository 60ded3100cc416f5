"""Mass-action model of gene-expression modules sharing a ribosome pool.

State layout: for every module ``[Y_i, mRNA_i, Ribo:mRNA_i]``, followed by the
host block ``[Y_cell, mRNA_cell, Ribo:mRNA_cell]``. Free ribosome is eliminated
through ``Ribo = R_T - sum(bound complexes)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .composition import HillFunction, HillKind, compose
from .errors import ConvergenceError, InvalidParameterError, StateError

RATE_TOL = 1e-10
CONCENTRATION_FLOOR = 1e-12


@dataclass(frozen=True)
class ModuleRates:
    regulator: HillFunction
    dna: float = 10.0
    a: float = 10.0        # ribosome binding
    d: float = 1000.0      # unbinding
    k0: float = 1.0        # translation
    gamma: float = 0.5     # protein decay
    delta: float = 1.0     # mRNA decay

    @property
    def K(self) -> float:
        return (self.d + self.k0) / self.a


@dataclass(frozen=True)
class HostRates:
    A0: float = 1.0
    dna_cell: float = 100.1
    a: float = 10.0
    d: float = 1000.0
    k0: float = 1.0
    gamma: float = 0.5
    delta: float = 1.0

    @property
    def K(self) -> float:
        return (self.d + self.k0) / self.a


@dataclass(frozen=True)
class RreParameters:
    modules: tuple[ModuleRates, ...]
    host: HostRates = field(default_factory=HostRates)
    R_T: float = 500.0

    def __post_init__(self):
        object.__setattr__(self, "modules", tuple(self.modules))
        if not self.modules:
            raise InvalidParameterError("at least one module required")
        if self.R_T < 0:
            raise InvalidParameterError("R_T must be nonnegative")
        for rates in [*self.modules, self.host]:
            vals = [v for k, v in asdict(rates).items() if k != "regulator"]
            if any(v < 0 for v in vals):
                raise InvalidParameterError(f"negative rate or concentration in {rates}")

    @property
    def n_modules(self) -> int:
        return len(self.modules)

    @property
    def n_states(self) -> int:
        return 3 * (self.n_modules + 1)

    def separation_factor(self) -> float:
        """Slowest fast rate over fastest slow rate."""
        h = self.host
        fast = [self.R_T * h.a, h.d] + [v for m in self.modules for v in (self.R_T * m.a, m.d)]
        slow = [h.k0, h.gamma, h.delta, h.A0] + [
            v for m in self.modules for v in (m.k0, m.gamma, m.delta, m.regulator.maximum)]
        return min(fast) / max(slow)

    def scaled(self, factor: float) -> "RreParameters":
        """Multiply every binding and unbinding rate by ``factor``."""
        return replace(
            self,
            modules=tuple(replace(m, a=m.a * factor, d=m.d * factor) for m in self.modules),
            host=replace(self.host, a=self.host.a * factor, d=self.host.d * factor),
        )

    def to_dict(self) -> dict:
        mods = []
        for m in self.modules:
            d = asdict(m)
            d["regulator"] = m.regulator.to_dict()
            mods.append(d)
        return {"modules": mods, "host": asdict(self.host), "R_T": self.R_T}

    @classmethod
    def from_dict(cls, d: dict) -> "RreParameters":
        mods = []
        for m in d["modules"]:
            m = dict(m)
            reg = HillFunction.from_dict(m.pop("regulator"))
            mods.append(ModuleRates(regulator=reg, **m))
        return cls(modules=tuple(mods), host=HostRates(**d.get("host", {})), R_T=float(d.get("R_T", 500.0)))

    @classmethod
    def load(cls, path) -> "RreParameters":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_parameters(n_modules: int = 1) -> RreParameters:
    """Rates with separation factor 1e3 and a host-load term of 2."""
    regulators = [
        HillFunction(HillKind.ACTIVATING, amplitude=0.9, half_point=0.5, coefficient=2, basal=0.1),
        HillFunction(HillKind.REPRESSING, amplitude=0.9, half_point=0.4, coefficient=2, basal=0.1),
    ]
    if n_modules > len(regulators):
        raise InvalidParameterError(f"defaults exist for up to {len(regulators)} modules")
    return RreParameters(modules=tuple(ModuleRates(regulator=r) for r in regulators[:n_modules]))


def state_labels(params: RreParameters) -> list[str]:
    if params.n_modules == 1:
        names = ["Y", "mRNA", "Ribo:mRNA"]
    else:
        names = [f"{s}_{i + 1}" for i in range(params.n_modules) for s in ("Y", "mRNA", "Ribo:mRNA")]
    return names + ["Y_cell", "mRNA_cell", "Ribo:mRNA_cell"]


def _inputs(params: RreParameters, u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if u.shape != (params.n_modules,):
        raise InvalidParameterError(f"expected {params.n_modules} inputs, got {u.shape}")
    return u


def _blocks(params: RreParameters, u):
    """(production rate, a, d, k0, gamma, delta) per block, host last."""
    out = [(m.regulator(ui) * m.dna, m.a, m.d, m.k0, m.gamma, m.delta)
           for m, ui in zip(params.modules, u)]
    h = params.host
    out.append((h.A0 * h.dna_cell, h.a, h.d, h.k0, h.gamma, h.delta))
    return out


def free_ribosome(x, params: RreParameters) -> float:
    return params.R_T - float(np.sum(np.asarray(x)[2::3]))


def rre_rhs(x, params: RreParameters, u, strict: bool = True) -> np.ndarray:
    """Mass-action time derivatives of the full model."""
    x = np.asarray(x, dtype=np.float64)
    u = _inputs(params, u)
    ribo = free_ribosome(x, params)
    if strict and ribo < -1e-9 * max(params.R_T, 1.0):
        raise StateError(f"bound ribosomes exceed R_T (free ribosome {ribo:.3e})")
    dx = np.empty_like(x)
    for b, (prod, a, d, k0, gamma, delta) in enumerate(_blocks(params, u)):
        Y, m, C = x[3 * b:3 * b + 3]
        bind = a * m * ribo
        dx[3 * b] = k0 * C - gamma * Y
        dx[3 * b + 1] = prod - bind + (d + k0) * C - delta * m
        dx[3 * b + 2] = bind - (d + k0) * C
    return dx


def rre_jacobian(x, params: RreParameters, u) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    u = _inputs(params, u)
    ribo = free_ribosome(x, params)
    n = x.size
    J = np.zeros((n, n))
    bound = np.arange(2, n, 3)
    for b, (_, a, d, k0, gamma, delta) in enumerate(_blocks(params, u)):
        iY, im, iC = 3 * b, 3 * b + 1, 3 * b + 2
        m = x[im]
        J[iY, iY] = -gamma
        J[iY, iC] = k0
        J[im, im] = -a * ribo - delta
        J[im, bound] += a * m
        J[im, iC] += d + k0
        J[iC, im] = a * ribo
        J[iC, bound] -= a * m
        J[iC, iC] -= d + k0
    return J


def _converged(x, dx, tol=RATE_TOL) -> bool:
    return np.max(np.abs(dx)) / max(np.max(np.abs(x)), CONCENTRATION_FLOOR) < tol


def _integrate(params, u, tol, x0=None, t_max=1e7, rtol=1e-10):
    x = np.zeros(params.n_states) if x0 is None else np.asarray(x0, dtype=np.float64)
    fun = lambda t, y: rre_rhs(y, params, u, strict=False)
    jac = lambda t, y: rre_jacobian(y, params, u)
    t, span = 0.0, 10.0
    while t < t_max:
        sol = solve_ivp(fun, (t, t + span), x, method="Radau", jac=jac, rtol=rtol, atol=rtol * 1e-4)
        if not sol.success:
            raise ConvergenceError(f"integrator failed: {sol.message}", float("nan"))
        x, t = sol.y[:, -1], t + span
        dx = rre_rhs(x, params, u, strict=False)
        if _converged(x, dx, tol):
            return x
        span *= 2.0
    raise ConvergenceError("no steady state within the time budget",
                           float(np.max(np.abs(rre_rhs(x, params, u, strict=False)))))


def _newton(x, params, u, max_iter=50):
    """Newton from a nearby point, halving steps only to stay nonnegative.

    Stops once the step is negligible relative to the state; the residual itself
    is dominated by cancellation in the fast binding fluxes and is not used.
    """
    for _ in range(max_iter):
        F = rre_rhs(x, params, u, strict=False)
        step = np.linalg.solve(rre_jacobian(x, params, u), -F)
        size = np.max(np.abs(step)) / max(np.max(np.abs(x)), CONCENTRATION_FLOOR)
        lam = 1.0
        while True:
            trial = x + lam * step
            if np.all(trial >= 0) and free_ribosome(trial, params) >= 0:
                break
            lam *= 0.5
            if lam < 1e-10:
                raise ConvergenceError("Newton step leaves the feasible region", float(np.max(np.abs(F))))
        x = trial
        if size <= 1e-13:
            return x
    raise ConvergenceError("Newton did not converge", float(np.max(np.abs(rre_rhs(x, params, u, strict=False)))))


def steady_state(params: RreParameters, u, method: str = "newton") -> np.ndarray:
    """Equilibrium of the full model reached from the empty state.

    ``integrate`` runs a stiff integrator until ``max|dx/dt| / max|x| < 1e-10``;
    ``newton`` integrates loosely and polishes the endpoint with damped Newton.
    """
    u = _inputs(params, u)
    if method == "integrate":
        return _integrate(params, u, RATE_TOL)
    if method == "newton":
        return _newton(_integrate(params, u, 1e-3, rtol=1e-6), params, u)
    raise InvalidParameterError(f"unknown method {method!r}")


@dataclass(frozen=True)
class ReducedModel:
    """``Y_i = theta_i f_i / (1 + sum_j f_j)`` with ``f_i(u) = f_scale_i * fbar_i(u)``."""

    theta: np.ndarray
    f_scale: np.ndarray
    host_load: float
    regulators: tuple[HillFunction, ...]

    def f(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        return np.array([s * r(ui) for s, r, ui in zip(self.f_scale, self.regulators, u)])

    def output(self, u) -> np.ndarray:
        return compose(self.theta, self.f(u))


def qssa_reduce(params: RreParameters, fast_limit: bool = False) -> ReducedModel:
    """Reduced composition map of the full model.

    Uses ``K = (d + k0) / a``; with ``fast_limit`` the limit of infinitely fast
    binding at fixed ``d / a`` is taken instead, i.e. ``K = d / a``.
    """
    h = params.host
    if h.a == 0 or any(m.a == 0 for m in params.modules):
        raise InvalidParameterError("binding rates must be nonzero")
    K = (lambda r: r.d / r.a) if fast_limit else (lambda r: r.K)
    load = 1.0 + h.A0 * h.dna_cell / (h.delta * K(h))
    theta = np.array([m.k0 * params.R_T / m.gamma for m in params.modules])
    scale = np.array([m.dna / (m.delta * K(m)) / load for m in params.modules])
    return ReducedModel(theta, scale, load, tuple(m.regulator for m in params.modules))


def reduced_rhs(z, params: RreParameters, u) -> np.ndarray:
    """Quasi-steady-state ODEs in ``[Y_1..Y_n, mRNA_1..mRNA_n, mRNA_cell]``."""
    z = np.asarray(z, dtype=np.float64)
    u = _inputs(params, u)
    n, h = params.n_modules, params.host
    Y, m, mc = z[:n], z[n:2 * n], z[2 * n]
    K = np.array([mod.K for mod in params.modules])
    ribo = params.R_T / (1.0 + mc / h.K + np.sum(m / K))
    dz = np.empty_like(z)
    for i, mod in enumerate(params.modules):
        dz[i] = mod.k0 * m[i] / K[i] * ribo - mod.gamma * Y[i]
        dz[n + i] = mod.regulator(u[i]) * mod.dna - mod.delta * m[i]
    dz[2 * n] = h.A0 * h.dna_cell - h.delta * mc
    return dz


def reduced_steady_state(params: RreParameters, u) -> np.ndarray:
    u = _inputs(params, u)
    h = params.host
    m = np.array([mod.regulator(ui) * mod.dna / mod.delta for mod, ui in zip(params.modules, u)])
    Y = qssa_reduce(params).output(u)
    return np.concatenate([Y, m, [h.A0 * h.dna_cell / h.delta]])


def protein_outputs(x, params: RreParameters) -> np.ndarray:
    return np.asarray(x)[0:3 * params.n_modules:3]


def separation_sweep(params: RreParameters, factors: Sequence[float], u_values=None) -> list[dict]:
    """Full steady state versus reduced maps as binding/unbinding speed up.

    ``discrepancy`` compares against the fast-binding limit map (K = d/a), the
    reference the full model converges to as the separation grows;
    ``discrepancy_exact`` compares against the reduction at the scaled rates.
    Both are maximum relative errors over the protein outputs and ``u_values``.
    """
    if any(f <= 0 for f in factors):
        raise InvalidParameterError("factors must be positive")
    if u_values is None:
        u_values = np.linspace(0.0, 1.0, 5)
    limit = qssa_reduce(params, fast_limit=True)
    rows = []
    for factor in factors:
        p = params.scaled(factor)
        exact = qssa_reduce(p)
        worst, worst_exact = 0.0, 0.0
        for uv in u_values:
            u = np.full(p.n_modules, uv) if np.ndim(uv) == 0 else np.asarray(uv)
            Y = protein_outputs(steady_state(p, u, "newton"), p)
            worst = max(worst, float(np.max(np.abs(Y - limit.output(u)) / limit.output(u))))
            worst_exact = max(worst_exact, float(np.max(np.abs(Y - exact.output(u)) / exact.output(u))))
        rows.append({"factor": float(factor), "separation_factor": p.separation_factor(),
                     "discrepancy": worst, "discrepancy_exact": worst_exact})
    return rows

"""Parallel-RC equivalent circuits: analytical response, branch ODEs, Arrhenius law."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BOLTZMANN_EV = 8.617333262e-5  # eV/K


@dataclass(frozen=True)
class RcBranch:
    resistance: float
    capacitance: float

    def __post_init__(self):
        if not (self.resistance > 0 and self.capacitance > 0):
            raise ValueError(f"branch values must be positive, got {self}")
        if not math.isfinite(self.resistance * self.capacitance):
            raise ValueError("branch time constant is not finite")

    @property
    def tau(self) -> float:
        return self.resistance * self.capacitance


@dataclass(frozen=True)
class EcmSpec:
    """Steady-state resistor ``r0`` in parallel with series-RC ``branches``."""

    r0: float
    branches: tuple[RcBranch, ...] = ()
    u_dc: float = 1.0

    def __post_init__(self):
        if not (self.r0 > 0 and self.u_dc > 0):
            raise ValueError("r0 and u_dc must be positive")
        object.__setattr__(self, "branches", tuple(
            b if isinstance(b, RcBranch) else RcBranch(*b) for b in self.branches))

    @property
    def n(self) -> int:
        return len(self.branches)

    @property
    def time_constants(self) -> list[float]:
        return [b.tau for b in self.branches]

    def parameter_names(self) -> list[str]:
        names = ["R0"]
        for i in range(1, self.n + 1):
            names += [f"C{i}", f"R{i}"]
        return names

    def parameter_values(self) -> list[float]:
        vals = [self.r0]
        for b in self.branches:
            vals += [b.capacitance, b.resistance]
        return vals


def total_current(spec: EcmSpec, t):
    """I(t) = U/R0 + sum_i U/R_i exp(-t/(R_i C_i)); ``t`` may be an array."""
    t = np.asarray(t, dtype=float)
    out = spec.u_dc / spec.r0 + np.zeros_like(t)
    for b in spec.branches:
        out = out + spec.u_dc / b.resistance * np.exp(-t / b.tau)
    return float(out) if out.ndim == 0 else out


def initial_current(spec: EcmSpec) -> float:
    return total_current(spec, 0.0)


def branch_currents(spec: EcmSpec, t) -> list:
    """[I01, I2, ..., In]; I01 merges the steady-state path with branch 1."""
    t = np.asarray(t, dtype=float)
    u = spec.u_dc
    first = u / spec.r0 + np.zeros_like(t)
    if spec.n:
        b = spec.branches[0]
        first = first + u / b.resistance * np.exp(-t / b.tau)
    out = [first]
    for b in spec.branches[1:]:
        out.append(u / b.resistance * np.exp(-t / b.tau))
    if t.ndim == 0:
        return [float(x) for x in out]
    return out


def branch_derivatives(spec: EcmSpec, t) -> list:
    """Analytical d/dt of :func:`branch_currents`."""
    t = np.asarray(t, dtype=float)
    u = spec.u_dc
    if not spec.n:
        out = [np.zeros_like(t)]
    else:
        out = [-(u / b.resistance) / b.tau * np.exp(-t / b.tau) for b in spec.branches]
    if t.ndim == 0:
        return [float(x) for x in out]
    return out


def ode_residuals(spec: EcmSpec, t, currents: Sequence, derivatives: Sequence) -> list:
    """Residuals of the branch ODEs for given currents and their time derivatives.

    ``t`` is unused (the system is autonomous) and kept for call-site clarity.
    """
    m = max(spec.n, 1)
    if len(currents) != m or len(derivatives) != m:
        raise ValueError(f"expected {m} currents and derivatives, "
                         f"got {len(currents)} and {len(derivatives)}")
    if not spec.n:
        return [derivatives[0]]
    u = spec.u_dc
    b1 = spec.branches[0]
    res = [derivatives[0] + (currents[0] - u / spec.r0) / b1.tau]
    for b, i_k, di_k in zip(spec.branches[1:], currents[1:], derivatives[1:]):
        res.append(di_k + i_k / b.tau)
    return res


def rk4_branch_currents(spec: EcmSpec, t_grid, max_step: float | None = None) -> np.ndarray:
    """Integrate the branch ODEs with classical RK4 from the t=0 state.

    Returns an array (len(t_grid), max(n, 1)).  Used as an independent check
    of the closed form.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    u = spec.u_dc
    # initial state from I(0) = U/R0 + sum U/R_i, split per branch
    y = np.array([u / spec.r0 + (u / spec.branches[0].resistance if spec.n else 0.0)]
                 + [u / b.resistance for b in spec.branches[1:]])
    if spec.n:
        rates = np.array([1.0 / b.tau for b in spec.branches])
        target = np.zeros_like(y)
        target[0] = u / spec.r0
    else:
        rates = np.zeros(1)
        target = y.copy()

    def f(yy):
        return -rates * (yy - target)

    if max_step is None:
        max_step = (min(spec.time_constants) if spec.n else 1.0) / 100.0
    out = np.empty((len(t_grid), len(y)))
    t_now = 0.0
    for k, t_next in enumerate(t_grid):
        span = t_next - t_now
        steps = max(int(math.ceil(span / max_step - 1e-12)), 0)
        if steps:
            h = span / steps
            for _ in range(steps):
                k1 = f(y)
                k2 = f(y + 0.5 * h * k1)
                k3 = f(y + 0.5 * h * k2)
                k4 = f(y + h * k3)
                y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t_now = t_next
        out[k] = y
    return out


@dataclass(frozen=True)
class ArrheniusLaw:
    """R(T) = a * exp(w / (k_B T)) with ``w`` in eV."""

    a: float
    w: float
    k_b: float = field(default=BOLTZMANN_EV, repr=False)

    def __post_init__(self):
        if not self.a > 0 or self.w < 0:
            raise ValueError("need a > 0 and w >= 0")

    def evaluate(self, temperature):
        temperature = np.asarray(temperature, dtype=float)
        if np.any(temperature <= 0):
            raise ValueError("temperature must be positive")
        r = self.a * np.exp(self.w / (self.k_b * temperature))
        return float(r) if r.ndim == 0 else r

    __call__ = evaluate

    @classmethod
    def from_reference(cls, resistance: float, temperature: float, w: float) -> "ArrheniusLaw":
        """Law with R(temperature) == resistance."""
        return cls(resistance * math.exp(-w / (BOLTZMANN_EV * temperature)), w)


@dataclass(frozen=True)
class TempEcmSpec:
    r0_law: ArrheniusLaw
    branch_laws: tuple[tuple[ArrheniusLaw, float], ...] = ()
    u_dc: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "branch_laws", tuple(tuple(x) for x in self.branch_laws))

    @property
    def n(self) -> int:
        return len(self.branch_laws)

    def materialize(self, temperature: float) -> EcmSpec:
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        return EcmSpec(
            r0=self.r0_law.evaluate(temperature),
            branches=tuple(RcBranch(law.evaluate(temperature), c) for law, c in self.branch_laws),
            u_dc=self.u_dc,
        )

    def scalings(self) -> list[float]:
        """R_i(T)/R_0(T); constant in T when all laws share one activation energy."""
        return [law.a / self.r0_law.a for law, _ in self.branch_laws]


def materialize(tspec: TempEcmSpec, temperature: float) -> EcmSpec:
    return tspec.materialize(temperature)


@dataclass
class ConditioningReport:
    time_constants: list[float]
    ratios: dict[tuple[int, int], float]
    amplitude_fractions: list[float]
    warnings: list[str]

    @property
    def ok(self) -> bool:
        return not self.warnings


def check_conditioning(spec: EcmSpec, ratio_threshold: float = 3.0,
                       min_fraction: float = 0.02, warn: bool = False) -> ConditioningReport:
    """Flag branches whose time constants overlap or whose amplitudes vanish.

    Advisory only; never modifies ``spec``.  Branch indices in the report are 1-based.
    """
    taus = spec.time_constants
    i0 = initial_current(spec)
    fractions = [spec.u_dc / b.resistance / i0 for b in spec.branches]
    ratios = {}
    msgs = []
    for (i, ti), (j, tj) in itertools.combinations(enumerate(taus, 1), 2):
        r = max(ti, tj) / min(ti, tj)
        ratios[(i, j)] = r
        if r < ratio_threshold:
            msgs.append(f"time constants of branches {i} and {j} differ by only {r:.3g}x")
    for i, fr in enumerate(fractions, 1):
        if fr < min_fraction:
            msgs.append(f"branch {i} carries {100 * fr:.3g}% of the initial current")
    if warn:
        for m in msgs:
            warnings.warn(m, stacklevel=2)
    return ConditioningReport(list(taus), ratios, fractions, msgs)

"""Tanh MLPs and the PINN models built from them.

All trainables of a model live in one ordered ``dict[str, np.ndarray]``.
Network keys are ``<net>.<layer>.weight`` / ``<net>.<layer>.bias``; the
surrogate circuit scalars are ``raw.<name>`` and hold the log of the value
in normalized units (materialized value = exp(raw) > 0).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Dual, Tape, Var, exp, tanh
from .synthdata import NormalizationInfo


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = (15, 15)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if min((self.input_dim, self.output_dim) + self.hidden) <= 0:
            raise ValueError("layer widths must be positive")

    @property
    def standard(self) -> bool:
        """One or two hidden layers narrower than 30."""
        return len(self.hidden) in (1, 2) and max(self.hidden) < 30

    @property
    def widths(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.output_dim]


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_mlp(spec: MlpSpec, seed, prefix: str = "net") -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    if not spec.standard:
        warnings.warn(f"non-standard architecture {spec.hidden}", stacklevel=2)
    rng = np.random.default_rng(seed)
    params = {}
    widths = spec.widths
    for k, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        bound = glorot_bound(a, b)
        params[f"{prefix}.{k}.weight"] = rng.uniform(-bound, bound, size=(b, a))
        params[f"{prefix}.{k}.bias"] = np.zeros((b, 1))
    return params


def mlp_forward(bound: dict, prefix: str, n_layers: int, x):
    """Apply layers ``prefix.0 .. prefix.{n_layers-1}``; tanh on all but the last.

    Feature-major: ``x`` is (input_dim, batch), the result (output_dim, batch).
    """
    h = x
    for k in range(n_layers):
        h = bound[f"{prefix}.{k}.weight"] @ h + bound[f"{prefix}.{k}.bias"]
        if k < n_layers - 1:
            h = tanh(h)
    return h


def mlp_numpy(params: dict, prefix: str, n_layers: int, x: np.ndarray) -> np.ndarray:
    h = np.asarray(x, dtype=float)
    for k in range(n_layers):
        h = params[f"{prefix}.{k}.weight"] @ h + params[f"{prefix}.{k}.bias"]
        if k < n_layers - 1:
            h = np.tanh(h)
    return h


@dataclass
class PositiveScalar:
    raw: float = 0.0

    @property
    def value(self) -> float:
        return math.exp(self.raw)

    @classmethod
    def from_value(cls, value: float) -> "PositiveScalar":
        return cls(math.log(value))


class PinnModel:
    """Common plumbing: parameter dict, tape binding and checkpoints."""

    kind = "base"

    def __init__(self, params: dict, u_dc: float, norm: NormalizationInfo):
        self.params = params
        self.u_dc = float(u_dc)
        self.norm = norm

    def bind(self, tape: Tape) -> dict[str, Var]:
        return {k: tape.var(v) for k, v in self.params.items()}

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def checkpoint(self) -> list[tuple[str, float]]:
        """Flat named floats: key order, then row, then column."""
        out = []
        for key, arr in self.params.items():
            a = np.atleast_2d(arr)
            for r in range(a.shape[0]):
                for c in range(a.shape[1]):
                    out.append((f"{key}[{r},{c}]" if a.size > 1 else key, float(a[r, c])))
        return out

    def load_checkpoint(self, items: Sequence[tuple[str, float]]):
        vals = iter(v for _, v in items)
        for key, arr in self.params.items():
            flat = arr.reshape(-1)
            for i in range(flat.size):
                flat[i] = next(vals)

    def raw_value(self, name: str) -> float:
        return math.exp(float(self.params[f"raw.{name}"]))


class StaticPinn(PinnModel):
    """Main net t_norm -> (I01, I2, .., In) plus positive R0, R_i, C_i surrogates."""

    kind = "static"

    def __init__(self, n_branches: int, hidden=(15, 15), seed=0, u_dc=1.0,
                 norm: NormalizationInfo | None = None, initial_guess: dict | None = None):
        norm = norm or NormalizationInfo(1.0, 1.0)
        self.n_branches = n_branches
        self.net_spec = MlpSpec(1, max(n_branches, 1), tuple(hidden))
        params = init_mlp(self.net_spec, seed, "main")
        guess = initial_guess or {}
        for name in self.param_names:
            params[f"raw.{name}"] = np.array(math.log(guess.get(name, 1.0)))
        super().__init__(params, u_dc, norm)

    @property
    def param_names(self) -> list[str]:
        names = ["R0"]
        for i in range(1, self.n_branches + 1):
            names += [f"C{i}", f"R{i}"]
        return names

    @property
    def n_outputs(self) -> int:
        return max(self.n_branches, 1)

    @property
    def n_layers(self) -> int:
        return len(self.net_spec.hidden) + 1

    def forward(self, bound: dict, t):
        """Branch currents (normalized), shape (n_outputs, N), at normalized times (1, N)."""
        if isinstance(t, (Var, Dual)):
            x = t
        else:
            x = np.asarray(t, dtype=float)
            x = x.reshape(1, -1) if x.ndim < 2 else x
        if _width(x) != 1:
            raise ValueError("static model expects a single input column")
        return mlp_forward(bound, "main", self.n_layers, x)

    def surrogates(self, bound: dict) -> dict[str, Var]:
        return {name: exp(bound[f"raw.{name}"]) for name in self.param_names}

    def predict(self, t_phys) -> np.ndarray:
        """Branch currents in physical units, shape (N, n_outputs)."""
        tn = self.norm.time(np.asarray(t_phys, dtype=float)).reshape(1, -1)
        return self.norm.current_inv(mlp_numpy(self.params, "main", self.n_layers, tn)).T

    def materialize_params(self) -> dict[str, float]:
        rs = self.norm.resistance_scale(self.u_dc)
        cs = self.norm.capacitance_scale(self.u_dc)
        out = {}
        for name in self.param_names:
            out[name] = self.raw_value(name) * (rs if name.startswith("R") else cs)
        return out


class TemperaturePinn(PinnModel):
    """Sub net T_norm -> log r0(T); main net (t_norm, log r0(T)) -> branch currents.

    R_i(T) = scale_i * r0(T) for i >= 1; capacitances are temperature-independent.
    """

    kind = "temperature"

    def __init__(self, n_branches: int, hidden=(15,), sub_hidden=(15,), seed=0, u_dc=1.0,
                 norm: NormalizationInfo | None = None, initial_guess: dict | None = None):
        norm = norm or NormalizationInfo(1.0, 1.0)
        self.n_branches = n_branches
        ss = np.random.SeedSequence(seed).spawn(2)
        self.net_spec = MlpSpec(2, max(n_branches, 1), tuple(hidden))
        self.sub_spec = MlpSpec(1, 1, tuple(sub_hidden))
        params = init_mlp(self.net_spec, ss[0], "main")
        params.update(init_mlp(self.sub_spec, ss[1], "sub"))
        guess = initial_guess or {}
        for name in self.param_names:
            params[f"raw.{name}"] = np.array(math.log(guess.get(name, 1.0)))
        super().__init__(params, u_dc, norm)

    @property
    def param_names(self) -> list[str]:
        names = []
        for i in range(1, self.n_branches + 1):
            names += [f"C{i}", f"s{i}"]
        return names

    @property
    def n_outputs(self) -> int:
        return max(self.n_branches, 1)

    def log_r0(self, bound: dict, temp_n):
        """Sub-network output: log of the normalized representative resistance."""
        x = temp_n if isinstance(temp_n, Var) else np.asarray(temp_n, dtype=float).reshape(1, -1)
        return mlp_forward(bound, "sub", len(self.sub_spec.hidden) + 1, x)

    def main(self, bound: dict, x):
        if _width(x) != 2:
            raise ValueError("temperature model main net expects (t, log r0) inputs")
        return mlp_forward(bound, "main", len(self.net_spec.hidden) + 1, x)

    def forward(self, bound: dict, t, temp_n, with_time_derivative: bool = False):
        """Branch currents at normalized (t, T) rows; optionally with d/dt_norm."""
        t = np.asarray(t, dtype=float).reshape(1, -1)
        # the sub net only needs to see each distinct temperature once
        uniq, inverse = np.unique(np.asarray(temp_n, dtype=float).reshape(-1), return_inverse=True)
        logr = self.log_r0(bound, uniq)[:, inverse]
        x = stack_rows(t, logr)
        if not with_time_derivative:
            return self.main(bound, x)
        out = self.main(bound, Dual(x, np.array([[1.0], [0.0]])))
        return out.primal, out.tangent

    def r0_curve(self, temperatures) -> np.ndarray:
        """Learned R0(T) in physical units."""
        tn = self.norm.temp(np.asarray(temperatures, dtype=float)).reshape(1, -1)
        z = mlp_numpy(self.params, "sub", len(self.sub_spec.hidden) + 1, tn)
        return np.exp(z[0]) * self.norm.resistance_scale(self.u_dc)

    def resistance_curves(self, temperatures) -> dict[str, np.ndarray]:
        r0 = self.r0_curve(temperatures)
        out = {"R0": r0}
        for i in range(1, self.n_branches + 1):
            out[f"R{i}"] = self.raw_value(f"s{i}") * r0
        return out

    def predict(self, t_phys, temperature) -> np.ndarray:
        """Branch currents in physical units, shape (N, n_outputs)."""
        t_phys = np.asarray(t_phys, dtype=float).reshape(-1)
        temp = np.broadcast_to(np.asarray(temperature, dtype=float), t_phys.shape).reshape(-1)
        tn = self.norm.time(t_phys, temp).reshape(1, -1)
        z = mlp_numpy(self.params, "sub", len(self.sub_spec.hidden) + 1,
                      self.norm.temp(temp).reshape(1, -1))
        y = mlp_numpy(self.params, "main", len(self.net_spec.hidden) + 1, np.vstack([tn, z]))
        return self.norm.current_inv(y, temp).T

    def materialize_params(self, temperatures=None) -> dict:
        cs = self.norm.capacitance_scale(self.u_dc)
        out = {}
        for i in range(1, self.n_branches + 1):
            out[f"s{i}"] = self.raw_value(f"s{i}")
            out[f"C{i}"] = self.raw_value(f"C{i}") * cs
        if temperatures is not None:
            for k, v in self.resistance_curves(temperatures).items():
                out[f"{k}(T)"] = v
        return out


def _width(x) -> int:
    v = x.primal if isinstance(x, Dual) else x
    v = v.value if isinstance(v, Var) else np.asarray(v)
    return v.shape[0]


def stack_rows(t: np.ndarray, z):
    """Rows ``t`` (1, N) and ``z`` (1, N) as one (2, N) input, without a concatenate primitive."""
    e0 = np.array([[1.0], [0.0]])
    e1 = np.array([[0.0], [1.0]])
    if isinstance(z, Var):
        return (e1 @ z) + e0 @ t
    return np.vstack([t, np.asarray(z)])

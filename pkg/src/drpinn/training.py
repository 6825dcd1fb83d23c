"""Composite PINN loss and the Adam training loop.

Everything runs in normalized units: time in [0, 1], currents divided by the
dataset's current scale, and surrogate R, C expressed so that the branch ODEs
are dimensionless (R_n * C_n is a time constant in normalized time and 1/R_n
a normalized current).  Derivatives w.r.t. normalized time therefore already
carry the 1/t_scale chain-rule factor.

Temperature datasets are normalized per measurement.  A row at temperature T
has time divided by kappa(T) * t_scale and current by c(T) * current_scale,
so the branch ODE in those units reads

    dy/dt' + kappa(T) * (y - g0 / c(T)) * g0 / (s C) = 0,   g0 = 1 / r0(T)

with kappa(T), c(T) <= 1 (both are 1 for static datasets).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Dual, Tape, Var, grad, exp
from .nn import PinnModel, StaticPinn, TemperaturePinn, stack_rows
from .synthdata import Dataset, normalize

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, step, losses):
        self.step = step
        self.losses = losses
        super().__init__(f"non-finite loss at step {step}: {losses}")


@dataclass(frozen=True)
class LossWeights:
    data_w: float = 1.0
    physics_w: float = 1.0
    ic_w: float = 1.0

    def __post_init__(self):
        if min(self.data_w, self.physics_w, self.ic_w) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 50_000
    lr0: float = 1e-2
    decay_factor: float = 0.9
    decay_every: int = 2000
    collocation_count: int = 4096
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    log_every: int = 500

    def lr(self, step: int) -> float:
        return self.lr0 * self.decay_factor ** (step / self.decay_every)


@dataclass
class TraceRecord:
    step: int
    loss_data: float
    loss_phys: float
    loss_ic: float
    lr: float
    params: dict

    @property
    def total(self) -> float:
        return self.loss_data + self.loss_phys + self.loss_ic


@dataclass
class TrainTrace:
    records: list[TraceRecord] = field(default_factory=list)
    totals: list[float] = field(default_factory=list)  # weighted total loss at every step

    @property
    def steps(self) -> list[int]:
        return [r.step for r in self.records]

    def param_names(self) -> list[str]:
        return list(self.records[0].params) if self.records else []


@dataclass
class FitReport:
    method: str
    params: dict
    truth: dict | None = None
    rel_errors: dict | None = None
    losses: dict | None = None
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @staticmethod
    def relative_errors(params: dict, truth: dict) -> dict:
        return {k: abs(params[k] - truth[k]) / abs(truth[k]) for k in truth if k in params}


# collocation -----------------------------------------------------------------

def collocation_points(count: int, temperatures_n=None, seed: int = 0):
    """Uniform grid on normalized time [0, 1].

    With ``temperatures_n`` the candidates are the product of a ``count``-point
    time grid with every temperature; each temperature keeps an equal share
    (remainder to the first ones) of grid times, drawn without replacement by
    ``seed``.  Returns ``t`` or ``(t, temperature)`` arrays.
    """
    if count < 1:
        raise ValueError("need at least one collocation point")
    grid = np.linspace(0.0, 1.0, count) if count > 1 else np.zeros(1)
    if temperatures_n is None:
        return grid
    temps = np.asarray(temperatures_n, dtype=float)
    k = len(temps)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 7919])))
    share = [count // k + (1 if j < count % k else 0) for j in range(k)]
    ts, Ts = [], []
    for T, m in zip(temps, share):
        m = max(m, 1)
        idx = np.sort(rng.choice(count, size=min(m, count), replace=False))
        ts.append(grid[idx])
        Ts.append(np.full(len(idx), T))
    return np.concatenate(ts), np.concatenate(Ts)


# loss assembly ---------------------------------------------------------------

@dataclass
class Problem:
    """Normalized arrays the loss is evaluated on.

    For temperature datasets ``kappa_*`` and ``cscale_*`` hold the per-row
    measurement time and current factors (see module docstring).
    """

    t_col: np.ndarray
    t_data: np.ndarray
    i_data: np.ndarray
    temp_col: np.ndarray | None = None
    temp_data: np.ndarray | None = None
    temps: np.ndarray | None = None
    kappa: np.ndarray | None = None   # per entry of ``temps``
    cscale: np.ndarray | None = None

    @classmethod
    def build(cls, dataset: Dataset, collocation_count: int, seed: int = 0) -> "Problem":
        ds, nm = normalize(dataset)
        if not len(ds):
            raise ValueError("empty dataset")
        if not ds.is_temperature:
            return cls(collocation_points(collocation_count), ds.t, ds.current)
        temps = np.asarray(ds.temperatures)
        phys = nm.temp_inv(temps)
        kappa = np.asarray(nm.t_scale_at(phys)) / nm.t_scale
        cscale = np.asarray(nm.current_scale_at(phys)) / nm.current_scale
        t_col, temp_col = collocation_points(collocation_count, temps, seed)
        return cls(t_col, ds.t, ds.current, temp_col, ds.temperature, temps, kappa, cscale)

    def factors(self, temp_rows: np.ndarray):
        """(kappa, c) rows of shape (1, N) for normalized temperatures ``temp_rows``."""
        order = np.argsort(self.temps)
        idx = order[np.searchsorted(self.temps[order], temp_rows)]
        return self.kappa[idx].reshape(1, -1), self.cscale[idx].reshape(1, -1)


def _col(y, rows, k):
    return y[k:k + 1, rows]


def _static_terms(model: StaticPinn, b: dict, prob: Problem, parts=("data", "phys", "ic")):
    nc, nd = len(prob.t_col), len(prob.t_data)
    x = np.concatenate([prob.t_col, prob.t_data, [0.0]]).reshape(1, -1)
    out = model.forward(b, Dual(x, np.ones((1, 1))))
    y, dy = out.primal, out.tangent
    sur = model.surrogates(b)
    m = model.n_outputs
    col, dat, ic = slice(0, nc), slice(nc, nc + nd), slice(nc + nd, nc + nd + 1)
    terms = {}
    if "data" in parts:
        pred = _col(y, dat, 0)
        for k in range(1, m):
            pred = pred + _col(y, dat, k)
        terms["data"] = ((pred - prob.i_data.reshape(1, -1)) ** 2).mean()
    g0 = 1.0 / sur["R0"]
    if "phys" in parts:
        if model.n_branches == 0:
            res = [_col(dy, col, 0)]
        else:
            res = [_col(dy, col, 0) + (_col(y, col, 0) - g0) / (sur["R1"] * sur["C1"])]
            for k in range(2, model.n_branches + 1):
                res.append(_col(dy, col, k - 1) + _col(y, col, k - 1) / (sur[f"R{k}"] * sur[f"C{k}"]))
        terms["phys"] = _mean_of([(r ** 2).mean() for r in res])
    if "ic" in parts:
        target0 = g0 + 1.0 / sur["R1"] if model.n_branches else g0
        loss = (_col(y, ic, 0) - target0) ** 2
        for k in range(2, model.n_branches + 1):
            loss = loss + (_col(y, ic, k - 1) - 1.0 / sur[f"R{k}"]) ** 2
        terms["ic"] = loss.sum()
    return terms


def _temperature_terms(model: TemperaturePinn, b: dict, prob: Problem, parts=("data", "phys", "ic")):
    nc, nd, nt = len(prob.t_col), len(prob.t_data), len(prob.temps)
    t = np.concatenate([prob.t_col, prob.t_data, np.zeros(nt)])
    temp = np.concatenate([prob.temp_col, prob.temp_data, prob.temps])
    uniq, inverse = np.unique(temp, return_inverse=True)
    logr_u = model.log_r0(b, uniq)
    logr = logr_u[:, inverse]
    x = stack_rows(t.reshape(1, -1), logr)
    out = model.main(b, Dual(x, np.array([[1.0], [0.0]])))
    y, dy = out.primal, out.tangent
    g0 = exp(-logr)  # 1 / r0(T) per column
    col, dat, ic = slice(0, nc), slice(nc, nc + nd), slice(nc + nd, nc + nd + nt)
    m = model.n_outputs
    scales = {i: exp(b[f"raw.s{i}"]) for i in range(1, model.n_branches + 1)}
    caps = {i: exp(b[f"raw.C{i}"]) for i in range(1, model.n_branches + 1)}
    terms = {}
    if "data" in parts:
        pred = _col(y, dat, 0)
        for k in range(1, m):
            pred = pred + _col(y, dat, k)
        terms["data"] = ((pred - prob.i_data.reshape(1, -1)) ** 2).mean()
    if "phys" in parts:
        g0c = g0[:, col]
        kap, cs = prob.factors(prob.temp_col)
        if model.n_branches == 0:
            res = [_col(dy, col, 0)]
        else:
            # kappa / (R1 C1) = kappa * g0 / (s1 C1)
            rate = g0c * kap
            res = [_col(dy, col, 0) + (_col(y, col, 0) - g0c * (1.0 / cs)) * rate / (scales[1] * caps[1])]
            for k in range(2, model.n_branches + 1):
                res.append(_col(dy, col, k - 1) + _col(y, col, k - 1) * rate / (scales[k] * caps[k]))
        terms["phys"] = _mean_of([(r ** 2).mean() for r in res])
    if "ic" in parts:
        g0i = g0[:, ic] * (1.0 / prob.cscale.reshape(1, -1))
        target0 = g0i + g0i / scales[1] if model.n_branches else g0i
        loss = ((_col(y, ic, 0) - target0) ** 2).mean()
        for k in range(2, model.n_branches + 1):
            loss = loss + ((_col(y, ic, k - 1) - g0i / scales[k]) ** 2).mean()
        terms["ic"] = loss
    return terms


def _mean_of(vars_):
    total = vars_[0]
    for v in vars_[1:]:
        total = total + v
    return total * (1.0 / len(vars_))


def loss_terms(model: PinnModel, bound: dict, prob: Problem, parts=("data", "phys", "ic")) -> dict:
    if isinstance(model, TemperaturePinn):
        if prob.temp_col is None:
            raise ValueError("temperature model needs a temperature dataset")
        return _temperature_terms(model, bound, prob, parts)
    if prob.temp_col is not None:
        raise ValueError("static model cannot train on a temperature dataset")
    return _static_terms(model, bound, prob, parts)


def total_loss(terms: dict, weights: LossWeights) -> Var:
    return (terms["data"] * weights.data_w + terms["phys"] * weights.physics_w
            + terms["ic"] * weights.ic_w)


def data_loss(model, bound, prob) -> Var:
    return loss_terms(model, bound, prob, ("data",))["data"]


def physics_loss(model, bound, prob) -> Var:
    return loss_terms(model, bound, prob, ("phys",))["phys"]


def ic_loss(model, bound, prob) -> Var:
    return loss_terms(model, bound, prob, ("ic",))["ic"]


def loss_and_grad(model: PinnModel, prob: Problem, weights: LossWeights = LossWeights(),
                  names=None):
    """(total, component values, gradient dict) at the model's current parameters."""
    tape = Tape()
    bound = model.bind(tape)
    terms = loss_terms(model, bound, prob)
    total = total_loss(terms, weights)
    names = list(model.params) if names is None else names
    grads = grad(tape, total, [bound[k] for k in names])
    values = {k: float(v.value) for k, v in terms.items()}
    return float(total.value), values, dict(zip(names, grads))


# optimisation ----------------------------------------------------------------

class Adam:
    def __init__(self, params: dict, config: TrainConfig):
        self.cfg = config
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k in self.m:
            p, g = params[k], grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            params[k] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def _snapshot(model: PinnModel) -> dict:
    return model.materialize_params()


def align_to_truth(params: dict, truth: dict, n_branches: int):
    """Relabel static branches so time-constant ranks match those of ``truth``.

    Swapping branch labels leaves the total current unchanged, so a fit is
    only identified up to this permutation.  Returns (params, order) where
    ``order[i]`` is the fitted branch now labelled i + 1.
    """
    idx = list(range(1, n_branches + 1))
    if n_branches < 2 or not all(f"R{i}" in truth and f"C{i}" in truth for i in idx):
        return dict(params), [i - 1 for i in idx]
    tau = {i: params[f"R{i}"] * params[f"C{i}"] for i in idx}
    tau_true = {i: truth[f"R{i}"] * truth[f"C{i}"] for i in idx}
    fitted = sorted(idx, key=tau.get)
    target = sorted(idx, key=tau_true.get)
    out = dict(params)
    order = [0] * n_branches
    for src, dst in zip(fitted, target):
        out[f"R{dst}"], out[f"C{dst}"] = params[f"R{src}"], params[f"C{src}"]
        order[dst - 1] = src - 1
    return out, order


def train(model: PinnModel, dataset: Dataset, config: TrainConfig = TrainConfig(),
          weights: LossWeights = LossWeights(), truth: dict | None = None,
          callback=None, freeze=()):
    """Adam on the total loss over all trainables; returns (model, trace, report).

    The model is trained in place.  ``truth`` (physical parameter values keyed
    like ``materialize_params``) adds relative errors to the report.  Keys in
    ``freeze`` (e.g. ``"raw.R0"``) are held at their current values.
    """
    if isinstance(model, TemperaturePinn) != dataset.is_temperature:
        raise ValueError("model and dataset variants differ")
    start = time.perf_counter()
    prob = Problem.build(dataset, config.collocation_count, config.seed)
    unknown = set(freeze) - set(model.params)
    if unknown:
        raise KeyError(f"cannot freeze unknown parameters {sorted(unknown)}")
    names = [k for k in model.params if k not in freeze]
    opt = Adam({k: model.params[k] for k in names}, config)
    trace = TrainTrace()
    for step in range(config.iterations + 1):
        total, parts, grads = loss_and_grad(model, prob, weights, names)
        if not math.isfinite(total):
            raise TrainingDiverged(step, parts)
        trace.totals.append(total)
        last = step == config.iterations
        if step % config.log_every == 0 or last:
            rec = TraceRecord(step, parts["data"], parts["phys"], parts["ic"], config.lr(step),
                              _snapshot(model))
            trace.records.append(rec)
            if callback is not None:
                callback(rec)
            log.debug("step %d loss %.3e", step, total)
        if last:
            break
        opt.step(model.params, grads, config.lr(step))
    params = _snapshot(model)
    extra = {}
    if truth and isinstance(model, StaticPinn):
        params, order = align_to_truth(params, truth, model.n_branches)
        extra["branch_order"] = order
    report = FitReport(
        method="pinn",
        params=params,
        truth=truth,
        rel_errors=FitReport.relative_errors(params, truth) if truth else None,
        losses=dict(parts, total=total),
        config={"train": asdict(config), "weights": asdict(weights), "model": model.kind,
                "hidden": list(model.net_spec.hidden)},
        seeds={"train": config.seed, "data": dataset.seed},
        wall_time=time.perf_counter() - start,
        extra=extra,
    )
    return model, trace, report

"""Classical reference fits: multistart Levenberg-Marquardt and Arrhenius regression.

The LM fit works on the normalized dataset (time in [0, 1], currents over
their max magnitude) and in log-parameter space, with the analytical
Jacobian of the closed-form current.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .ecm import BOLTZMANN_EV, ArrheniusLaw, EcmSpec, RcBranch
from .synthdata import Dataset, normalize


@dataclass(frozen=True)
class LmConfig:
    max_iters: int = 200
    lambda0: float = 1e-3
    tol: float = 1e-10
    multistart: int = 16
    box: tuple[float, float] = (1e-2, 1e2)
    seed: int = 0
    max_step: float = 1.0  # per-iteration cap on |log-parameter change|


@dataclass
class LmResult:
    spec: EcmSpec
    cost: float  # sum of squared residuals, normalized units
    residual_norm: float
    ill_conditioned: bool
    iterations: int
    history: list[float] = field(default_factory=list)
    starts: int = 1
    wall_time: float = 0.0


def _unpack(theta, n):
    """theta = [log R0, log R1, log C1, ..., log Rn, log Cn]."""
    r0 = math.exp(theta[0])
    rc = [(math.exp(theta[1 + 2 * i]), math.exp(theta[2 + 2 * i])) for i in range(n)]
    return r0, rc


def _model_and_jac(theta, t, n):
    r0, rc = _unpack(theta, n)
    pred = np.full_like(t, 1.0 / r0)
    jac = np.empty((len(t), 1 + 2 * n))
    jac[:, 0] = -1.0 / r0
    for i, (r, c) in enumerate(rc):
        tau = r * c
        amp = np.exp(-t / tau) / r
        x = t / tau
        pred += amp
        jac[:, 1 + 2 * i] = amp * (x - 1.0)  # d/d log R
        jac[:, 2 + 2 * i] = amp * x          # d/d log C
    return pred, jac


def _lm(theta, t, y, n, cfg: LmConfig):
    lam = cfg.lambda0
    pred, jac = _model_and_jac(theta, t, n)
    r = pred - y
    cost = float(r @ r)
    history = [cost]
    it = 0
    for it in range(1, cfg.max_iters + 1):
        jtj = jac.T @ jac
        g = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            # cap the move at a factor e per parameter; undamped Gauss-Newton
            # steps otherwise jump onto flat plateaus of the exponentials
            big = np.max(np.abs(step))
            if big > cfg.max_step:
                step = step * (cfg.max_step / big)
            cand = theta + step
            if np.all(np.abs(cand) < 50):
                p2, j2 = _model_and_jac(cand, t, n)
                r2 = p2 - y
                c2 = float(r2 @ r2)
                if math.isfinite(c2) and c2 < cost:
                    accepted = True
                    break
            lam *= 10.0
        if not accepted:
            break
        decrease = (cost - c2) / max(cost, 1e-300)
        theta, jac, r, cost = cand, j2, r2, c2
        history.append(cost)
        lam = max(lam / 10.0, 1e-15)
        if decrease < cfg.tol or cost < 1e-30:
            break
    return theta, cost, jac, it, history


def _to_spec(theta, n, dataset: Dataset, u_dc: float) -> EcmSpec:
    nm = dataset.norm
    rs, cs = nm.resistance_scale(u_dc), nm.capacitance_scale(u_dc)
    r0, rc = _unpack(theta, n)
    branches = sorted((RcBranch(r * rs, c * cs) for r, c in rc), key=lambda b: -b.tau)
    return EcmSpec(r0 * rs, tuple(branches), u_dc)


def fit_static(dataset: Dataset, n_branches: int, config: LmConfig = LmConfig(),
               u_dc: float | None = None) -> LmResult:
    """Best of ``config.multistart`` seeded LM runs; branches sorted by descending tau."""
    if dataset.is_temperature:
        raise ValueError("fit_static needs a static dataset")
    if u_dc is None:
        u_dc = dataset.spec.u_dc if isinstance(dataset.spec, EcmSpec) else 1.0
    start = time.perf_counter()
    ds, _ = normalize(dataset)
    t, y = ds.t, ds.current
    if n_branches == 0:
        # closed form: constant model
        theta = np.array([-math.log(float(np.mean(y)))])
        r = 1.0 / math.exp(theta[0]) - y
        cost = float(r @ r)
        return LmResult(_to_spec(theta, 0, dataset, u_dc), cost, math.sqrt(cost), False, 0,
                        [cost], 1, time.perf_counter() - start)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    lo, hi = np.log(config.box[0]), np.log(config.box[1])
    best = None
    for _ in range(config.multistart):
        theta0 = rng.uniform(lo, hi, size=1 + 2 * n_branches)
        theta, cost, jac, it, hist = _lm(theta0, t, y, n_branches, config)
        key = (cost, float(np.linalg.norm(theta)))
        if best is None or key < best[0]:
            best = (key, theta, cost, jac, it, hist)
    _, theta, cost, jac, it, hist = best
    sv = np.linalg.svd(jac, compute_uv=False)
    ill = bool(sv[-1] <= sv[0] * 1e-10)
    return LmResult(_to_spec(theta, n_branches, dataset, u_dc), cost, math.sqrt(cost), ill, it,
                    hist, config.multistart, time.perf_counter() - start)


def align_branches(spec: EcmSpec, reference: EcmSpec) -> EcmSpec:
    """Reorder ``spec`` branches so their time-constant ranks match ``reference``."""
    if spec.n != reference.n:
        raise ValueError("branch counts differ")
    ours = sorted(spec.branches, key=lambda b: b.tau)
    order = sorted(range(reference.n), key=lambda i: reference.branches[i].tau)
    out = [None] * spec.n
    for b, i in zip(ours, order):
        out[i] = b
    return EcmSpec(spec.r0, tuple(out), spec.u_dc)


def fit_arrhenius(temperatures, resistances) -> ArrheniusLaw:
    """Least squares of log R on 1/T."""
    T = np.asarray(temperatures, dtype=float)
    R = np.asarray(resistances, dtype=float)
    if np.any(R <= 0):
        raise ValueError("resistances must be positive")
    if len(np.unique(T)) < 2:
        raise ValueError("need at least two distinct temperatures")
    A = np.column_stack([np.ones_like(T), 1.0 / T])
    (log_a, slope), *_ = np.linalg.lstsq(A, np.log(R), rcond=None)
    return ArrheniusLaw(math.exp(log_a), max(float(slope) * BOLTZMANN_EV, 0.0))

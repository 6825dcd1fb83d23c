import math

import numpy as np
import pytest

from drpinn.autodiff import Dual, Tape
from drpinn.ecm import ArrheniusLaw, EcmSpec, RcBranch, TempEcmSpec, branch_currents, branch_derivatives
from drpinn.nn import StaticPinn, TemperaturePinn
from drpinn.report import report_text
from drpinn.synthdata import NormalizationInfo, generate_static, generate_temperature, normalize
from drpinn.training import (LossWeights, Problem, TrainConfig, TrainingDiverged, align_to_truth,
                             collocation_points, data_loss, ic_loss, loss_and_grad, loss_terms,
                             physics_loss, total_loss, train)

TABLE1 = EcmSpec(25.0, (RcBranch(3.5, 0.1), RcBranch(8.0, 0.5)), 1.0)


class ExactStatic(StaticPinn):
    """Outputs the analytical branch currents (normalized) with true surrogates."""

    def __init__(self, spec, norm, offset=0.0):
        rs, cs = norm.resistance_scale(spec.u_dc), norm.capacitance_scale(spec.u_dc)
        guess = {n: v / (rs if n.startswith("R") else cs)
                 for n, v in zip(spec.parameter_names(), spec.parameter_values())}
        super().__init__(spec.n, (5,), seed=0, u_dc=spec.u_dc, norm=norm, initial_guess=guess)
        self.spec, self.offset = spec, offset

    def forward(self, bound, x):
        tn = x.primal if isinstance(x, Dual) else np.asarray(x, dtype=float).reshape(1, -1)
        t = self.norm.time_inv(tn[0])
        y = np.vstack(branch_currents(self.spec, t)) / self.norm.current_scale + self.offset
        dy = np.vstack(branch_derivatives(self.spec, t)) * self.norm.t_scale / self.norm.current_scale
        return Dual(y, dy) if isinstance(x, Dual) else y


def constant_model(n_branches, outputs, norm=None, guess=None):
    m = StaticPinn(n_branches, (5,), seed=0, norm=norm, initial_guess=guess)
    for k in m.params:
        if not k.startswith("raw."):
            m.params[k] = np.zeros_like(m.params[k])
    m.params["main.1.bias"] = np.asarray(outputs, dtype=float).reshape(-1, 1)
    return m


def evaluate(fn, model, prob):
    v = fn(model, model.bind(Tape()), prob)
    return float(getattr(v, "value", v))


# schedule and collocation ------------------------------------------------------------

def test_learning_rate_schedule():
    cfg = TrainConfig()
    assert cfg.lr(0) == 1e-2
    assert cfg.lr(2000) == pytest.approx(9e-3, rel=1e-14)
    lrs = [cfg.lr(k) for k in range(0, 50_001, 500)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))


def test_collocation_grid():
    np.testing.assert_array_equal(collocation_points(3), [0.0, 0.5, 1.0])
    assert len(collocation_points(4096)) == 4096
    np.testing.assert_array_equal(collocation_points(1), [0.0])
    with pytest.raises(ValueError):
        collocation_points(0)


def test_collocation_temperature_variant():
    temps = np.linspace(-1, 1, 10)
    t, T = collocation_points(4096, temps, seed=3)
    assert len(t) == len(T) == 4096
    assert set(np.unique(T)) == set(temps)
    counts = [np.sum(T == x) for x in temps]
    assert max(counts) - min(counts) <= 1
    t2, T2 = collocation_points(4096, temps, seed=3)
    np.testing.assert_array_equal(t, t2)
    np.testing.assert_array_equal(T, T2)
    t3, _ = collocation_points(4096, temps, seed=4)
    assert not np.array_equal(t, t3)
    # fewer points than temperatures still represents every temperature
    _, T4 = collocation_points(4, temps, seed=0)
    assert set(np.unique(T4)) == set(temps)


# loss components ------------------------------------------------------------------------

def test_perfect_model_has_zero_losses():
    ds = generate_static(TABLE1, 50, 0.0, seed=0)
    prob = Problem.build(ds, 256)
    m = ExactStatic(TABLE1, ds.norm)
    assert evaluate(data_loss, m, prob) < 1e-20
    assert evaluate(physics_loss, m, prob) < 1e-16
    assert evaluate(ic_loss, m, prob) < 1e-20


def test_zero_model_data_loss():
    ds = generate_static(TABLE1, 50, 0.0, seed=0)
    prob = Problem.build(ds, 16)
    m = constant_model(2, [0.0, 0.0])
    expected = np.mean(normalize(ds)[0].current ** 2)
    assert evaluate(data_loss, m, prob) == pytest.approx(expected, rel=1e-14)


def test_noise_raises_data_loss_by_sigma_squared():
    sigma = 0.2
    ds = generate_static(TABLE1, 100_000, sigma, seed=6)
    prob = Problem.build(ds, 8)
    m = ExactStatic(TABLE1, ds.norm)
    expected = (sigma / ds.norm.current_scale) ** 2
    assert evaluate(data_loss, m, prob) == pytest.approx(expected, rel=0.02)


def test_constant_output_physics_loss():
    r0, r1, c1, c = 2.0, 0.5, 0.8, 0.3
    ds = generate_static(EcmSpec(25.0, (RcBranch(3.5, 0.1),)), 10, 0.0, seed=0)
    prob = Problem.build(ds, 33)
    m = constant_model(1, [c], guess={"R0": r0, "R1": r1, "C1": c1})
    expected = (1 / (r1 * c1)) ** 2 * (c - 1 / r0) ** 2
    assert evaluate(physics_loss, m, prob) == pytest.approx(expected, rel=1e-13)


def test_pure_resistor_physics_residual_is_derivative():
    ds = generate_static(EcmSpec(2.0), 10, 0.0, seed=0, t_end=1.0)
    prob = Problem.build(ds, 17)
    m = constant_model(0, [0.7])
    assert evaluate(physics_loss, m, prob) == 0.0


def test_ic_targets_at_true_values():
    guess = dict(zip(TABLE1.parameter_names(), TABLE1.parameter_values()))
    ds = generate_static(TABLE1, 10, 0.0, seed=0)
    prob = Problem.build(ds, 4)
    m = constant_model(2, [0.04 + 1 / 3.5, 0.125], norm=NormalizationInfo(1.0, 1.0), guess=guess)
    assert evaluate(ic_loss, m, prob) < 1e-30
    m2 = constant_model(2, [0.04 + 1 / 3.5 + 0.01, 0.125], norm=NormalizationInfo(1.0, 1.0), guess=guess)
    assert evaluate(ic_loss, m2, prob) == pytest.approx(1e-4, rel=1e-10)


def test_ic_offset_is_squared():
    ds = generate_static(TABLE1, 50, 0.0, seed=0)
    prob = Problem.build(ds, 8)
    d = 0.013
    m = ExactStatic(TABLE1, ds.norm, offset=np.array([[d], [0.0]]))
    assert evaluate(ic_loss, m, prob) == pytest.approx(d ** 2, rel=1e-10)


def test_total_is_weighted_sum_and_weights_scale_gradients():
    ds = generate_static(TABLE1, 20, 0.1, seed=0)
    prob = Problem.build(ds, 32)
    m = StaticPinn(2, (5,), seed=1, norm=ds.norm)
    terms = loss_terms(m, m.bind(Tape()), prob)
    assert all(float(v.value) >= 0 for v in terms.values())
    w = LossWeights(2.0, 3.0, 0.5)
    tot = total_loss(terms, w)
    expect = 2 * terms["data"].value + 3 * terms["phys"].value + 0.5 * terms["ic"].value
    assert float(tot.value) == pytest.approx(float(expect), rel=1e-15)
    _, _, g1 = loss_and_grad(m, prob, LossWeights(0, 1, 0))
    _, _, g2 = loss_and_grad(m, prob, LossWeights(0, 2, 0))
    for k in g1:
        np.testing.assert_allclose(g2[k], 2 * np.asarray(g1[k]), rtol=1e-14, atol=0)
    with pytest.raises(ValueError):
        LossWeights(-1.0)


# gradients against central differences ---------------------------------------------------------

def _fd_check(model, prob, weights, h=1e-6, tol=1e-5):
    _, _, g = loss_and_grad(model, prob, weights)
    for k, p in model.params.items():
        flat = p.reshape(-1)
        ga = np.asarray(g[k], dtype=float).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = loss_and_grad(model, prob, weights)[0]
            flat[i] = old - h
            fm = loss_and_grad(model, prob, weights)[0]
            flat[i] = old
            num = (fp - fm) / (2 * h)
            assert abs(ga[i] - num) <= tol * max(abs(num), 1e-3), (k, i, ga[i], num)


def test_static_gradient_matches_finite_differences():
    spec = EcmSpec(25.0, (RcBranch(3.5, 0.1),))
    ds = generate_static(spec, 8, 0.05, seed=2)
    prob = Problem.build(ds, 16)
    rng = np.random.default_rng(0)
    for trial in range(3):
        m = StaticPinn(1, (5,), seed=trial, norm=ds.norm)
        for k in m.params:
            m.params[k] = np.array(m.params[k] + rng.normal(0, 0.3, m.params[k].shape))
        _fd_check(m, prob, LossWeights(1.0, 1.0, 1.0))


def test_temperature_gradient_matches_finite_differences():
    law0 = ArrheniusLaw.from_reference(25.0, 294.0, 0.76)
    tspec = TempEcmSpec(law0, ((ArrheniusLaw(law0.a * 0.5, 0.76), 0.5),), 50.0)
    ds = generate_temperature(tspec, [294.0, 309.0, 324.0], 4, 0.1, seed=1)
    prob = Problem.build(ds, 16, seed=0)
    rng = np.random.default_rng(1)
    m = TemperaturePinn(1, (5,), (5,), seed=3, norm=ds.norm)
    for k in m.params:
        m.params[k] = np.array(m.params[k] + rng.normal(0, 0.3, m.params[k].shape))
    _fd_check(m, prob, LossWeights(1.0, 1.0, 1.0))


# training loop -------------------------------------------------------------------------------

def test_zero_iterations_leave_model_unchanged():
    ds = generate_static(TABLE1, 20, 0.0, seed=0)
    m = StaticPinn(2, (5,), seed=0, norm=ds.norm)
    before = {k: v.copy() for k, v in m.params.items()}
    _, trace, rep = train(m, ds, TrainConfig(iterations=0, collocation_count=16))
    assert trace.steps == [0] and len(trace.totals) == 1
    for k in before:
        np.testing.assert_array_equal(before[k], m.params[k])


def test_training_is_deterministic_and_logs():
    ds = generate_static(TABLE1, 20, 0.1, seed=0)
    cfg = TrainConfig(iterations=60, collocation_count=32, log_every=20)
    truth = dict(zip(TABLE1.parameter_names(), TABLE1.parameter_values()))
    runs = []
    for _ in range(2):
        m = StaticPinn(2, (5,), seed=7, norm=ds.norm, u_dc=1.0)
        seen = []
        m, trace, rep = train(m, ds, cfg, LossWeights(), truth, callback=seen.append)
        runs.append((m, trace, rep))
        assert trace.steps == [0, 20, 40, 60]
        assert [r.step for r in seen] == trace.steps
        assert set(rep.rel_errors) == set(truth)
    (m1, t1, r1), (m2, t2, r2) = runs
    for k in m1.params:
        np.testing.assert_array_equal(m1.params[k], m2.params[k])
    assert t1.totals == t2.totals
    assert report_text(r1, m1.checkpoint(), timing=False) == report_text(r2, m2.checkpoint(), timing=False)


def test_training_reduces_loss():
    ds = generate_static(TABLE1, 30, 0.0, seed=0)
    m = StaticPinn(2, (5,), seed=0, norm=ds.norm)
    _, trace, _ = train(m, ds, TrainConfig(iterations=300, collocation_count=32, log_every=100))
    assert trace.totals[-1] < 0.1 * trace.totals[0]


def test_nan_loss_aborts_with_diagnostic():
    ds = generate_static(TABLE1, 10, 0.0, seed=0)
    m = StaticPinn(2, (5,), seed=0, norm=ds.norm)
    m.params["raw.R1"] = np.array(-1e6)
    with pytest.raises(TrainingDiverged) as exc:
        train(m, ds, TrainConfig(iterations=5, collocation_count=8))
    assert exc.value.step == 0 and "phys" in exc.value.losses


def test_variant_mismatch_rejected():
    ds = generate_static(TABLE1, 10, 0.0, seed=0)
    with pytest.raises(ValueError):
        train(TemperaturePinn(1, seed=0), ds, TrainConfig(iterations=1))


def test_align_to_truth_swaps_labels():
    truth = {"R0": 25.0, "C1": 0.1, "R1": 3.5, "C2": 0.5, "R2": 8.0}
    fitted = {"R0": 24.0, "C1": 0.52, "R1": 7.9, "C2": 0.11, "R2": 3.4}
    out, order = align_to_truth(fitted, truth, 2)
    assert order == [1, 0]
    assert (out["R1"], out["C1"], out["R2"], out["C2"]) == (3.4, 0.11, 7.9, 0.52)
    same, order = align_to_truth(truth, truth, 2)
    assert same == truth and order == [0, 1]


def test_temperature_training_runs():
    law0 = ArrheniusLaw.from_reference(25.0, 294.0, 0.76)
    tspec = TempEcmSpec(law0, ((ArrheniusLaw(law0.a * 0.5, 0.76), 0.5),), 50.0)
    ds = generate_temperature(tspec, np.linspace(294, 324, 4), 10, 0.0, seed=1)
    m = TemperaturePinn(1, (5,), (5,), seed=0, norm=ds.norm, u_dc=50.0)
    _, trace, rep = train(m, ds, TrainConfig(iterations=100, collocation_count=64, log_every=50),
                          truth={"s1": 0.5, "C1": 0.5})
    assert trace.steps == [0, 50, 100]
    assert set(rep.params) == {"s1", "C1"}
    assert math.isfinite(rep.losses["total"])

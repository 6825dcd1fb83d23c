"""Experiment runners behind the CLI.

Each noise level is one experiment writing into its own ``sigma_<value>``
subdirectory: dataset CSV, training trace (parameters every ``log_every``
steps, total loss every step), fit report, plot-data CSVs and figures.  Sweeps write a summary table and a manifest at the top level.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import plots, report
from .baseline import LmResult, fit_arrhenius, fit_static
from .config import ExperimentConfig
from .ecm import EcmSpec, TempEcmSpec, check_conditioning
from .nn import StaticPinn, TemperaturePinn
from .synthdata import Dataset, generate_static, generate_temperature, read_csv, write_csv
from .training import FitReport, align_to_truth, train

log = logging.getLogger(__name__)

DENSE = 400  # points per predicted curve in plot data


def sigma_dir(out: Path, sigma: float) -> Path:
    return Path(out) / f"sigma_{sigma:g}"


def static_truth(spec: EcmSpec) -> dict:
    return dict(zip(spec.parameter_names(), spec.parameter_values()))


def temperature_truth(tspec: TempEcmSpec) -> dict:
    out = {}
    for i, (s, (_, c)) in enumerate(zip(tspec.scalings(), tspec.branch_laws), 1):
        out[f"C{i}"] = c
        out[f"s{i}"] = s
    return out


def make_dataset(cfg: ExperimentConfig, sigma: float) -> Dataset:
    if cfg.data.input is not None:
        return read_csv(cfg.data.input)
    if cfg.is_temperature:
        return generate_temperature(cfg.ecm, cfg.data.temperatures, cfg.data.n_samples, sigma,
                                    cfg.data.seed, cfg.data.t_end_rule, cfg.data.t_end)
    return generate_static(cfg.ecm, cfg.data.n_samples, sigma, cfg.data.seed, cfg.data.t_end)


def _sigmas(cfg: ExperimentConfig):
    if cfg.data.input is not None:
        return [read_csv(cfg.data.input).sigma]
    return list(cfg.data.sigmas)


def _trace_logger(quiet: bool):
    if quiet:
        return None

    def cb(rec):
        vals = ", ".join(f"{k}={v:.5g}" for k, v in rec.params.items())
        log.info("step %6d  data %.3e  phys %.3e  ic %.3e  %s",
                 rec.step, rec.loss_data, rec.loss_phys, rec.loss_ic, vals)
    return cb


# static ---------------------------------------------------------------------------

def static_experiment(cfg: ExperimentConfig, sigma: float, out: Path, quiet: bool = True) -> FitReport:
    out = Path(out)
    ds = make_dataset(cfg, sigma)
    spec = ds.spec if isinstance(ds.spec, EcmSpec) else cfg.ecm
    write_csv(ds, out / "dataset.csv")
    cond = check_conditioning(spec)
    for m in cond.warnings:
        log.warning("%s", m)
    model = StaticPinn(spec.n, cfg.net.hidden, seed=cfg.net.seed, u_dc=spec.u_dc, norm=ds.norm)
    truth = static_truth(spec)
    model, trace, rep = train(model, ds, cfg.train, cfg.weights, truth, _trace_logger(quiet))
    pred = model.predict(ds.t).sum(axis=1)
    rep.extra.update(
        sigma=sigma,
        rmse_noiseless=float(np.sqrt(np.mean((pred - ds.clean) ** 2))),
        rmse_observed=float(np.sqrt(np.mean((pred - ds.current) ** 2))),
        conditioning_warnings=len(cond.warnings),
    )
    rep.seeds.update(net=cfg.net.seed)
    report.write_trace(trace, out / "trace.csv")
    report.write_columns(out / "loss_history.csv",
                         {"step": np.arange(len(trace.totals)), "total": trace.totals})
    report.write_report(rep, out / "report.txt", model.checkpoint())

    data = {"t": ds.t, "current": ds.current, "clean": ds.clean}
    tt = np.linspace(0.0, ds.t_end, DENSE)
    br = model.predict(tt)
    curve = {"t": tt, "total": br.sum(axis=1)}
    for i in range(br.shape[1]):
        curve[f"branch_{i + 1}"] = br[:, i]
    report.write_columns(out / "fit_data.csv", data)
    report.write_columns(out / "fit_curve.csv", curve)
    if cfg.plots:
        plots.plot_fit(data, curve, out / "fit.png", f"sigma = {sigma:g}")
        plots.plot_trajectory(report.read_trace(out / "trace.csv"), out / "trajectory.png",
                              truth, f"sigma = {sigma:g}")
    if cfg.run_baseline:
        lm_report(ds, spec, cfg, out / "lm_report.txt")
    return rep


def lm_report(ds: Dataset, spec: EcmSpec, cfg: ExperimentConfig, path=None) -> FitReport:
    res: LmResult = fit_static(ds, spec.n, cfg.baseline, u_dc=spec.u_dc)
    truth = static_truth(spec)
    params = static_truth(res.spec)
    params, order = align_to_truth(params, truth, spec.n)
    rep = FitReport(
        method="lm", params=params, truth=truth,
        rel_errors=FitReport.relative_errors(params, truth),
        losses={"cost": res.cost, "residual_norm": res.residual_norm},
        config={"baseline": asdict(cfg.baseline)},
        seeds={"baseline": cfg.baseline.seed, "data": ds.seed},
        wall_time=res.wall_time,
        extra={"ill_conditioned": res.ill_conditioned, "iterations": res.iterations,
               "branch_order": order, "sigma": ds.sigma},
    )
    if path is not None:
        report.write_report(rep, path)
    return rep


# temperature ------------------------------------------------------------------------

def temperature_experiment(cfg: ExperimentConfig, sigma: float, out: Path,
                           quiet: bool = True) -> FitReport:
    out = Path(out)
    ds = make_dataset(cfg, sigma)
    tspec = ds.spec if isinstance(ds.spec, TempEcmSpec) else cfg.ecm
    write_csv(ds, out / "dataset.csv")
    temps = np.asarray(ds.temperatures)
    model = TemperaturePinn(tspec.n, cfg.net.hidden, cfg.net.sub_hidden, seed=cfg.net.seed,
                            u_dc=tspec.u_dc, norm=ds.norm)
    truth = temperature_truth(tspec)
    model, trace, rep = train(model, ds, cfg.train, cfg.weights, truth, _trace_logger(quiet))

    r0 = model.r0_curve(temps)
    r0_true = tspec.r0_law.evaluate(temps)
    law = fit_arrhenius(temps, r0)
    pred = np.concatenate([model.predict(ds.t[ds.temperature == T], T).sum(axis=1) for T in temps])
    clean = np.concatenate([ds.clean[ds.temperature == T] for T in temps])
    rep.extra.update(
        sigma=sigma,
        activation_energy=law.w,
        activation_energy_true=tspec.r0_law.w,
        r0_max_rel_dev=float(np.max(np.abs(r0 / r0_true - 1.0))),
        rmse_noiseless=float(np.sqrt(np.mean((pred - clean) ** 2))),
    )
    rep.seeds.update(net=cfg.net.seed)
    report.write_trace(trace, out / "trace.csv")
    report.write_columns(out / "loss_history.csv",
                         {"step": np.arange(len(trace.totals)), "total": trace.totals})
    report.write_report(rep, out / "report.txt", model.checkpoint())

    data = {"temperature": ds.temperature, "t": ds.t, "current": ds.current, "clean": ds.clean}
    cols = {"temperature": [], "t": [], "total": []}
    branch_cols = {f"branch_{i + 1}": [] for i in range(model.n_outputs)}
    for T in temps:
        tt = np.linspace(0.0, ds.t[ds.temperature == T].max(), DENSE // 4)
        br = model.predict(tt, T)
        cols["temperature"].append(np.full(len(tt), T))
        cols["t"].append(tt)
        cols["total"].append(br.sum(axis=1))
        for i, k in enumerate(branch_cols):
            branch_cols[k].append(br[:, i])
    curve = {k: np.concatenate(v) for k, v in {**cols, **branch_cols}.items()}
    grid = np.linspace(temps.min(), temps.max(), 61)
    res = {"temperature": grid}
    learned = model.resistance_curves(grid)
    res["R0_learned"] = learned["R0"]
    res["R0_true"] = tspec.r0_law.evaluate(grid)
    for i, (lw, _) in enumerate(tspec.branch_laws, 1):
        res[f"R{i}_learned"] = learned[f"R{i}"]
        res[f"R{i}_true"] = lw.evaluate(grid)
    report.write_columns(out / "fit_data.csv", data)
    report.write_columns(out / "fit_curve.csv", curve)
    report.write_columns(out / "resistance_curves.csv", res)
    if cfg.plots:
        plots.plot_fit_temperature(data, curve, out / "fit.png", f"sigma = {sigma:g}")
        plots.plot_trajectory(report.read_trace(out / "trace.csv"), out / "trajectory.png",
                              truth, f"sigma = {sigma:g}")
        plots.plot_resistance(res, out / "resistance.png", f"sigma = {sigma:g}")
    return rep


# sweeps ---------------------------------------------------------------------------

def _one(args):
    cfg, sigma, quiet = args
    fn = temperature_experiment if cfg.is_temperature else static_experiment
    return fn(cfg, sigma, sigma_dir(cfg.output_dir, sigma), quiet)


def sweep(cfg: ExperimentConfig, quiet: bool = True) -> list[FitReport]:
    """One experiment per noise level, in parallel processes when ``jobs > 1``."""
    jobs = [(cfg, s, quiet) for s in _sigmas(cfg)]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            return list(ex.map(_one, jobs))
    return [_one(j) for j in jobs]


def generate(cfg: ExperimentConfig) -> list[Path]:
    paths = []
    for s in _sigmas(cfg):
        ds = make_dataset(cfg, s)
        paths.append(write_csv(ds, sigma_dir(cfg.output_dir, s) / "dataset.csv"))
    return paths


def baseline(cfg: ExperimentConfig) -> list[FitReport]:
    reps = []
    for s in _sigmas(cfg):
        ds = make_dataset(cfg, s)
        spec = ds.spec if isinstance(ds.spec, EcmSpec) else cfg.ecm
        reps.append(lm_report(ds, spec, cfg, sigma_dir(cfg.output_dir, s) / "lm_report.txt"))
    return reps


def table1_summary(cfg: ExperimentConfig, reports: list[FitReport]) -> str:
    """summary.csv / summary.txt with one row per noise level (plus truth)."""
    names = cfg.ecm.parameter_names()
    rows, lines = [], []
    head = f"{'':<12}" + "".join(f"{n:>10}" for n in names) + f"{'max err':>10}"
    lines.append(head)
    truth = static_truth(cfg.ecm)
    lines.append(f"{'true':<12}" + "".join(f"{truth[n]:>10.4g}" for n in names))
    for rep in reports:
        s = rep.extra["sigma"]
        worst = max(rep.rel_errors.values())
        rows.append([s, rep.method] + [rep.params[n] for n in names] + [worst])
        lines.append(f"{'sigma=' + format(s, 'g'):<12}" + "".join(f"{rep.params[n]:>10.4g}" for n in names)
                     + f"{worst:>10.2%}")
    report.write_rows(cfg.output_dir / "summary.csv", ["sigma", "method", *names, "max_rel_error"], rows)
    text = "\n".join(lines) + "\n"
    (cfg.output_dir / "summary.txt").write_text(text)
    return text


def table2_summary(cfg: ExperimentConfig, reports: list[FitReport]) -> str:
    n = cfg.ecm.n
    names = [x for i in range(1, n + 1) for x in (f"s{i}", f"C{i}")]
    extra = ["activation_energy", "r0_max_rel_dev"]
    lines = [f"{'':<12}" + "".join(f"{k:>10}" for k in names) + f"{'W (eV)':>10}{'R0 dev':>10}"]
    truth = temperature_truth(cfg.ecm)
    lines.append(f"{'true':<12}" + "".join(f"{truth[k]:>10.4g}" for k in names)
                 + f"{cfg.ecm.r0_law.w:>10.4g}")
    rows = []
    for rep in reports:
        s = rep.extra["sigma"]
        rows.append([s] + [rep.params[k] for k in names] + [rep.extra[k] for k in extra])
        lines.append(f"{'sigma=' + format(s, 'g'):<12}" + "".join(f"{rep.params[k]:>10.4f}" for k in names)
                     + f"{rep.extra['activation_energy']:>10.4f}{rep.extra['r0_max_rel_dev']:>10.2%}")
    report.write_rows(cfg.output_dir / "summary.csv", ["sigma", *names, *extra], rows)
    text = "\n".join(lines) + "\n"
    (cfg.output_dir / "summary.txt").write_text(text)
    return text


def run(cfg: ExperimentConfig, quiet: bool = True) -> dict:
    """Dispatch on ``cfg.mode``; returns {"reports": [...], "summary": str | None}."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.text)
    summary = None
    reports: list[FitReport] = []
    if cfg.mode == "generate":
        generate(cfg)
    elif cfg.mode == "fit-baseline":
        reports = baseline(cfg)
    elif cfg.mode in ("train-static", "train-temperature"):
        reports = sweep(cfg, quiet)
    elif cfg.mode == "reproduce-table1":
        reports = sweep(cfg, quiet)
        summary = table1_summary(cfg, reports)
    elif cfg.mode == "reproduce-table2":
        reports = sweep(cfg, quiet)
        summary = table2_summary(cfg, reports)
    else:  # parse_config already rejects these
        raise ValueError(f"unknown mode {cfg.mode!r}")
    report.write_manifest(out, cfg.text, cfg.seeds(), {"mode": cfg.mode})
    return {"reports": reports, "summary": summary}

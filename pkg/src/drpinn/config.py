"""Experiment configuration files.

Grammar (INI-style, parsed with :mod:`configparser`)::

    [run]
    mode = reproduce-table1        # see MODES
    seed = 0                       # default for every section seed below
    output_dir = runs/table1
    jobs = 1                       # noise levels run in parallel processes if > 1
    plots = true

    [ecm]                          # static circuit ...
    u_dc = 50
    r0 = 25.0
    branches = 3.5:0.1, 8.0:0.5    # R:C per RC branch

    [ecm]                          # ... or temperature-dependent circuit
    u_dc = 50
    r0_ref = 25.0                  # R0 at t_ref
    t_ref = 294
    activation_energy = 0.76       # eV, shared by all resistances
    branches = 0.5:0.5             # scaling:C per RC branch, R_i(T) = scaling * R0(T)

    [data]
    n_samples = 50                 # per temperature for temperature circuits
    sigma = 0, 0.1, 0.2            # one experiment per noise level
    seed = 1
    t_end = 20                     # optional
    temperatures = 294:324:10      # start:stop:count, or an explicit list
    t_end_rule = per-temperature
    input = data.csv               # optional: fit this file instead of generating

    [net]      hidden, sub_hidden, seed
    [train]    iterations, lr0, decay_factor, decay_every, collocation_count,
               beta1, beta2, eps, seed, log_every, data_w, physics_w, ic_w
    [baseline] enabled, max_iters, lambda0, tol, multistart, box, seed, max_step

Unknown sections or keys are errors.  Relative paths resolve against the
config file's directory.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baseline import LmConfig
from .ecm import ArrheniusLaw, EcmSpec, RcBranch, TempEcmSpec
from .training import LossWeights, TrainConfig

MODES = ("generate", "train-static", "train-temperature", "fit-baseline",
         "reproduce-table1", "reproduce-table2")

_KEYS = {
    "run": {"mode", "seed", "output_dir", "jobs", "plots"},
    "ecm": {"u_dc", "r0", "branches", "r0_ref", "t_ref", "activation_energy"},
    "data": {"n_samples", "sigma", "seed", "t_end", "temperatures", "t_end_rule", "input"},
    "net": {"hidden", "sub_hidden", "seed"},
    "train": {f.name for f in dataclasses.fields(TrainConfig)} | {"data_w", "physics_w", "ic_w"},
    "baseline": {"enabled", "max_iters", "lambda0", "tol", "multistart", "box", "seed", "max_step"},
}


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    n_samples: int = 50
    sigmas: tuple[float, ...] = (0.0,)
    seed: int = 0
    t_end: float | None = None
    temperatures: tuple[float, ...] = ()
    t_end_rule: str = "per-temperature"
    input: Path | None = None


@dataclass
class NetConfig:
    hidden: tuple[int, ...] = (15, 15)
    sub_hidden: tuple[int, ...] = (15,)
    seed: int = 0


@dataclass
class ExperimentConfig:
    mode: str
    ecm: EcmSpec | TempEcmSpec
    data: DataConfig = field(default_factory=DataConfig)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    baseline: LmConfig = field(default_factory=LmConfig)
    run_baseline: bool = True
    output_dir: Path = Path("runs")
    seed: int = 0
    jobs: int = 1
    plots: bool = True
    text: str = ""

    @property
    def is_temperature(self) -> bool:
        return isinstance(self.ecm, TempEcmSpec)

    def seeds(self) -> dict:
        return {"data": self.data.seed, "net": self.net.seed, "train": self.train.seed,
                "baseline": self.baseline.seed}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _pairs(text: str) -> list[tuple[float, float]]:
    out = []
    for item in filter(None, (x.strip() for x in text.split(","))):
        a, sep, b = item.partition(":")
        if not sep:
            raise ConfigError(f"branch entry {item!r} must look like value:value")
        out.append((float(a), float(b)))
    return out


def _temperatures(text: str) -> tuple[float, ...]:
    if ":" in text:
        start, stop, count = text.split(":")
        return tuple(float(x) for x in np.linspace(float(start), float(stop), int(count)))
    return _floats(text)


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _ecm(sec: dict) -> EcmSpec | TempEcmSpec:
    u_dc = float(sec.get("u_dc", 1.0))
    branches = _pairs(sec.get("branches", ""))
    if "r0" in sec:
        if {"r0_ref", "t_ref", "activation_energy"} & set(sec):
            raise ConfigError("[ecm] mixes static (r0) and temperature (r0_ref) keys")
        return EcmSpec(float(sec["r0"]), tuple(RcBranch(r, c) for r, c in branches), u_dc)
    missing = {"r0_ref", "t_ref", "activation_energy"} - set(sec)
    if missing:
        raise ConfigError(f"[ecm] needs r0 or all of r0_ref, t_ref, activation_energy (missing {sorted(missing)})")
    w = float(sec["activation_energy"])
    law0 = ArrheniusLaw.from_reference(float(sec["r0_ref"]), float(sec["t_ref"]), w)
    laws = tuple((ArrheniusLaw(law0.a * s, w), c) for s, c in branches)
    return TempEcmSpec(law0, laws, u_dc)


def parse_config(text: str, base_dir: Path | str = ".", seed_override: int | None = None,
                 out_override: Path | str | None = None) -> ExperimentConfig:
    """Parse config text; ``seed_override`` replaces every seed in the file."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    for name in cp.sections():
        if name not in _KEYS:
            raise ConfigError(f"unknown section [{name}]")
        unknown = set(cp[name]) - _KEYS[name]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    sec = {name: dict(cp[name]) if cp.has_section(name) else {} for name in _KEYS}
    base_dir = Path(base_dir)
    try:
        run = sec["run"]
        mode = run.get("mode")
        if mode not in MODES:
            raise ConfigError(f"[run] mode must be one of {', '.join(MODES)}")
        seed = int(run.get("seed", 0)) if seed_override is None else int(seed_override)

        def sub_seed(s):
            if seed_override is not None or "seed" not in s:
                return seed
            return int(s["seed"])

        if "r0" not in sec["ecm"] and "r0_ref" not in sec["ecm"]:
            raise ConfigError("missing [ecm] section")
        ecm = _ecm(sec["ecm"])

        d = sec["data"]
        data = DataConfig(
            n_samples=int(d.get("n_samples", 50)),
            sigmas=_floats(d.get("sigma", "0")),
            seed=sub_seed(d),
            t_end=float(d["t_end"]) if "t_end" in d else None,
            temperatures=_temperatures(d.get("temperatures", "")),
            t_end_rule=d.get("t_end_rule", "per-temperature"),
            input=(base_dir / d["input"]) if "input" in d else None,
        )
        if not data.sigmas or min(data.sigmas) < 0:
            raise ConfigError("[data] sigma must list nonnegative noise levels")
        n = sec["net"]
        net = NetConfig(
            hidden=tuple(int(x) for x in _floats(n.get("hidden", "15, 15" if not isinstance(ecm, TempEcmSpec) else "15"))),
            sub_hidden=tuple(int(x) for x in _floats(n.get("sub_hidden", "15"))),
            seed=sub_seed(n),
        )
        t = sec["train"]
        ints = {"iterations", "decay_every", "collocation_count", "seed", "log_every"}
        targs = {k: (int(float(v)) if k in ints else float(v)) for k, v in t.items()
                 if k not in ("data_w", "physics_w", "ic_w")}
        targs["seed"] = sub_seed(t)
        for k in ("iterations", "collocation_count", "log_every", "decay_every"):
            if k in targs and targs[k] < 1:
                raise ConfigError(f"[train] {k} must be a positive integer")
        train = TrainConfig(**targs)
        weights = LossWeights(*(float(t.get(k, 1.0)) for k in ("data_w", "physics_w", "ic_w")))
        b = sec["baseline"]
        bargs = {k: float(v) for k, v in b.items() if k in ("lambda0", "tol", "max_step")}
        bargs.update({k: int(v) for k, v in b.items() if k in ("max_iters", "multistart")})
        if "box" in b:
            lo, hi = _floats(b["box"])
            bargs["box"] = (lo, hi)
        bargs["seed"] = sub_seed(b)
        lm = LmConfig(**bargs)
        out = Path(out_override) if out_override is not None else base_dir / run.get("output_dir", "runs")
        cfg = ExperimentConfig(
            mode=mode, ecm=ecm, data=data, net=net, train=train, weights=weights, baseline=lm,
            run_baseline=_bool(b.get("enabled", "true")), output_dir=out, seed=seed,
            jobs=int(run.get("jobs", 1)), plots=_bool(run.get("plots", "true")), text=text)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    temp_modes = ("train-temperature", "reproduce-table2")
    static_modes = ("train-static", "fit-baseline", "reproduce-table1")
    if cfg.mode in temp_modes and not cfg.is_temperature:
        raise ConfigError(f"mode {cfg.mode} needs a temperature circuit (r0_ref, t_ref, activation_energy)")
    if cfg.mode in static_modes and cfg.is_temperature:
        raise ConfigError(f"mode {cfg.mode} needs a static circuit (r0)")
    if cfg.is_temperature and cfg.data.input is None and len(cfg.data.temperatures) < 2:
        raise ConfigError("[data] temperatures needs at least two values")
    if cfg.data.t_end_rule not in ("global", "per-temperature"):
        raise ConfigError(f"unknown t_end_rule {cfg.data.t_end_rule!r}")
    if cfg.jobs < 1:
        raise ConfigError("[run] jobs must be >= 1")


def load_config(path, seed_override: int | None = None, out_override=None) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    return parse_config(text, path.parent, seed_override, out_override)


def builtin_config(name: str) -> Path:
    """Path of a packaged config (``table1``, ``table2``)."""
    p = Path(__file__).parent / "configs" / f"{name}.ini"
    if not p.exists():
        raise ConfigError(f"no built-in config {name!r}")
    return p

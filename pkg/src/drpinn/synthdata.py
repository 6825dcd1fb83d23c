"""Synthetic relaxation-current datasets with seeded Gaussian noise.

RNG: numpy's PCG64 seeded through ``SeedSequence(seed)``.  Temperature
datasets draw the noise for temperature ``k`` (in the given order) from
``SeedSequence(seed).spawn(len(temperatures))[k]``, so each temperature owns
an independent, reproducible stream.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .ecm import EcmSpec, TempEcmSpec, ArrheniusLaw, RcBranch, total_current

T_END_FACTOR = 5.0


@dataclass(frozen=True)
class Sample:
    t: float
    temperature: float | None
    current: float


@dataclass(frozen=True)
class NormalizationInfo:
    """Affine maps between physical and training units.

    Temperature datasets are normalized per measurement: the samples taken at
    temperature ``measurement_temps[k]`` have their time divided by
    ``measurement_t_scales[k]`` (the length of that measurement) and their
    current by ``measurement_current_scales[k]`` (its largest magnitude).
    The global ``t_scale`` and ``current_scale`` are the maxima of those and
    fix the units of the surrogate circuit parameters.
    """

    t_scale: float
    current_scale: float
    temp_offset: float = 0.0
    temp_scale: float = 1.0
    measurement_temps: tuple = ()
    measurement_t_scales: tuple = ()
    measurement_current_scales: tuple = ()

    def _lookup(self, values, temperature, default):
        if temperature is None or not self.measurement_temps:
            return default
        temperature = np.asarray(temperature, dtype=float)
        temps = np.asarray(self.measurement_temps)
        order = np.argsort(temps)
        # exact at measured temperatures, linear in between
        return np.interp(temperature, temps[order], np.asarray(values)[order])

    def t_scale_at(self, temperature=None):
        return self._lookup(self.measurement_t_scales, temperature, self.t_scale)

    def current_scale_at(self, temperature=None):
        return self._lookup(self.measurement_current_scales, temperature, self.current_scale)

    def time(self, t, temperature=None):
        return np.asarray(t, dtype=float) / self.t_scale_at(temperature)

    def time_inv(self, tn, temperature=None):
        return np.asarray(tn, dtype=float) * self.t_scale_at(temperature)

    def temp(self, temperature):
        return (np.asarray(temperature, dtype=float) - self.temp_offset) / self.temp_scale

    def temp_inv(self, tn):
        return np.asarray(tn, dtype=float) * self.temp_scale + self.temp_offset

    def current(self, i, temperature=None):
        return np.asarray(i, dtype=float) / self.current_scale_at(temperature)

    def current_inv(self, i_n, temperature=None):
        return np.asarray(i_n, dtype=float) * self.current_scale_at(temperature)

    # resistances and capacitances in the units where the ODEs are dimensionless
    def resistance_scale(self, u_dc: float) -> float:
        return u_dc / self.current_scale

    def capacitance_scale(self, u_dc: float) -> float:
        return self.t_scale / self.resistance_scale(u_dc)


@dataclass
class Dataset:
    t: np.ndarray
    current: np.ndarray
    clean: np.ndarray
    sigma: float
    seed: int
    t_end: float
    norm: NormalizationInfo
    temperature: np.ndarray | None = None
    spec: EcmSpec | TempEcmSpec | None = None
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def is_temperature(self) -> bool:
        return self.temperature is not None

    @property
    def samples(self) -> list[Sample]:
        temps = self.temperature if self.is_temperature else [None] * len(self.t)
        return [Sample(float(t), None if T is None else float(T), float(i))
                for t, T, i in zip(self.t, temps, self.current)]

    @property
    def temperatures(self) -> np.ndarray:
        """Distinct temperatures in first-appearance order."""
        if not self.is_temperature:
            return np.array([])
        _, idx = np.unique(self.temperature, return_index=True)
        return self.temperature[np.sort(idx)]


def _grid(n: int, t_end: float) -> np.ndarray:
    if n < 2:
        raise ValueError("need at least two samples")
    return np.linspace(0.0, t_end, n)


def default_t_end(spec: EcmSpec) -> float:
    if not spec.n:
        raise ValueError("t_end must be given for a circuit without RC branches")
    return T_END_FACTOR * max(spec.time_constants)


def _norm_for(t, current, temperature=None) -> NormalizationInfo:
    t_scale = float(np.max(t))
    scale = float(np.max(np.abs(current)))
    if temperature is None:
        return NormalizationInfo(t_scale, scale)
    lo, hi = float(np.min(temperature)), float(np.max(temperature))
    offset, half = (lo, 1.0) if hi == lo else (0.5 * (lo + hi), 0.5 * (hi - lo))
    _, first = np.unique(temperature, return_index=True)
    temps = temperature[np.sort(first)]
    return NormalizationInfo(
        t_scale, scale, offset, half,
        measurement_temps=tuple(float(T) for T in temps),
        measurement_t_scales=tuple(float(np.max(t[temperature == T])) for T in temps),
        measurement_current_scales=tuple(float(np.max(np.abs(current[temperature == T])))
                                         for T in temps),
    )


def generate_static(spec: EcmSpec, n_samples: int, sigma: float, seed: int,
                    t_end: float | None = None) -> Dataset:
    """Uniform time grid on [0, t_end] with additive N(0, sigma^2) noise."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if t_end is None:
        t_end = default_t_end(spec)
    t = _grid(n_samples, t_end)
    clean = total_current(spec, t)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    noise = rng.normal(0.0, 1.0, size=n_samples) * sigma
    current = clean + noise if sigma > 0 else clean.copy()
    return Dataset(t=t, current=current, clean=clean, sigma=sigma, seed=seed,
                   t_end=float(t_end), norm=_norm_for(t, current), spec=spec)


def generate_temperature(tspec: TempEcmSpec, temperatures: Sequence[float], n_per_temp: int,
                         sigma: float, seed: int, t_end_rule: str = "per-temperature",
                         t_end: float | None = None) -> Dataset:
    """Per-temperature time grids with noise std sigma / I(t, T).

    ``t_end_rule='per-temperature'`` sizes each grid to its own circuit
    (5 x its slowest time constant); ``'global'`` shares one grid sized to the
    slowest (coldest) circuit.  An explicit ``t_end`` overrides both.
    """
    temperatures = [float(x) for x in temperatures]
    if not temperatures or min(temperatures) <= 0:
        raise ValueError("need a non-empty list of positive temperatures")
    if t_end_rule not in ("global", "per-temperature"):
        raise ValueError(f"unknown t_end rule {t_end_rule!r}")
    specs = [tspec.materialize(T) for T in temperatures]
    ends = [t_end if t_end is not None else default_t_end(s) for s in specs]
    global_end = max(ends)
    streams = np.random.SeedSequence(seed).spawn(len(temperatures))
    ts, Ts, cleans, currents = [], [], [], []
    for T, s, end, ss in zip(temperatures, specs, ends, streams):
        t = _grid(n_per_temp, global_end if t_end_rule == "global" else end)
        clean = total_current(s, t)
        assert np.all(clean > 0)
        rng = np.random.Generator(np.random.PCG64(ss))
        z = rng.normal(0.0, 1.0, size=n_per_temp)
        cur = clean + z * (sigma / clean) if sigma > 0 else clean.copy()
        ts.append(t)
        Ts.append(np.full(n_per_temp, T))
        cleans.append(clean)
        currents.append(cur)
    t = np.concatenate(ts)
    temp = np.concatenate(Ts)
    current = np.concatenate(currents)
    return Dataset(t=t, current=current, clean=np.concatenate(cleans), sigma=sigma, seed=seed,
                   t_end=float(global_end), norm=_norm_for(t, current, temp),
                   temperature=temp, spec=tspec, meta={"t_end_rule": t_end_rule})


def normalize(dataset: Dataset) -> tuple[Dataset, NormalizationInfo]:
    """Times to [0, 1], temperatures to [-1, 1], currents divided by their max magnitude.

    Temperature datasets use the per-measurement scales of their
    :class:`NormalizationInfo`.
    """
    if not len(dataset):
        raise ValueError("empty dataset")
    if dataset.normalized:
        return dataset, dataset.norm
    nm = dataset.norm
    T = dataset.temperature
    out = Dataset(
        t=nm.time(dataset.t, T), current=nm.current(dataset.current, T),
        clean=nm.current(dataset.clean, T), sigma=dataset.sigma, seed=dataset.seed,
        t_end=dataset.t_end, norm=nm, temperature=None if T is None else nm.temp(T),
        spec=dataset.spec, normalized=True, meta=dict(dataset.meta))
    return out, nm


def denormalize(dataset: Dataset) -> Dataset:
    if not dataset.normalized:
        return dataset
    nm = dataset.norm
    T = None if dataset.temperature is None else nm.temp_inv(dataset.temperature)
    return Dataset(
        t=nm.time_inv(dataset.t, T), current=nm.current_inv(dataset.current, T),
        clean=nm.current_inv(dataset.clean, T), sigma=dataset.sigma, seed=dataset.seed,
        t_end=dataset.t_end, norm=nm, temperature=T,
        spec=dataset.spec, normalized=False, meta=dict(dataset.meta))


# persistence -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def spec_to_dict(spec) -> dict:
    if isinstance(spec, EcmSpec):
        return {"kind": "static", "r0": spec.r0, "u_dc": spec.u_dc,
                "branches": [[b.resistance, b.capacitance] for b in spec.branches]}
    if isinstance(spec, TempEcmSpec):
        return {"kind": "temperature", "u_dc": spec.u_dc,
                "r0_law": [spec.r0_law.a, spec.r0_law.w],
                "branch_laws": [[law.a, law.w, c] for law, c in spec.branch_laws]}
    return None


def spec_from_dict(d):
    if d is None:
        return None
    if d["kind"] == "static":
        return EcmSpec(d["r0"], tuple(RcBranch(r, c) for r, c in d["branches"]), d["u_dc"])
    return TempEcmSpec(ArrheniusLaw(*d["r0_law"]),
                       tuple((ArrheniusLaw(a, w), c) for a, w, c in d["branch_laws"]), d["u_dc"])


def write_csv(dataset: Dataset, path) -> Path:
    """Write ``t,temperature,current`` plus a ``.json`` metadata sidecar."""
    dataset = denormalize(dataset)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "temperature", "current"])
        temps = dataset.temperature if dataset.is_temperature else [None] * len(dataset)
        for t, T, i in zip(dataset.t, temps, dataset.current):
            w.writerow([_fmt(t), "" if T is None else _fmt(T), _fmt(i)])
    meta = {
        "spec": spec_to_dict(dataset.spec),
        "sigma": dataset.sigma,
        "seed": dataset.seed,
        "t_end": dataset.t_end,
        "normalization": asdict(dataset.norm),
        "clean_current": [float(x) for x in dataset.clean],
        **dataset.meta,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_csv(path) -> Dataset:
    path = Path(path)
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    cur = np.array([float(r["current"]) for r in rows])
    temp = None
    if rows and rows[0]["temperature"] != "":
        temp = np.array([float(r["temperature"]) for r in rows])
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    if "normalization" in meta:
        nd = meta["normalization"]
        norm = NormalizationInfo(**{k: tuple(v) if isinstance(v, list) else v for k, v in nd.items()})
    else:
        norm = _norm_for(t, cur, temp)
    clean = np.array(meta.get("clean_current", cur), dtype=float)
    extra = {k: v for k, v in meta.items()
             if k not in ("spec", "sigma", "seed", "t_end", "normalization", "clean_current")}
    return Dataset(t=t, current=cur, clean=clean, sigma=meta.get("sigma", float("nan")),
                   seed=meta.get("seed", 0), t_end=meta.get("t_end", float(t.max())), norm=norm,
                   temperature=temp, spec=spec_from_dict(meta.get("spec")), meta=extra)

"""Artifacts on disk: trace CSVs, key-value fit reports, comparisons, manifests.

CSV floats use 17 significant digits so values round-trip exactly.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .training import FitReport, TrainTrace

FLOAT_FMT = "{:.17g}"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT.format(float(x))
    return str(x)


def write_rows(path, header, rows):
    """Comma-separated, header row first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_rows(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(v) for v in row] for row in r if row]
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def write_columns(path, columns: dict):
    keys = list(columns)
    arrs = [np.asarray(columns[k], dtype=float).reshape(-1) for k in keys]
    return write_rows(path, keys, zip(*arrs))


# training traces ---------------------------------------------------------------

def write_trace(trace: TrainTrace, path):
    names = trace.param_names()
    rows = ([r.step, r.loss_data, r.loss_phys, r.loss_ic, r.lr] + [r.params[k] for k in names]
            for r in trace.records)
    return write_rows(path, ["step", "loss_data", "loss_phys", "loss_ic", "lr", *names], rows)


def read_trace(path) -> dict[str, np.ndarray]:
    header, data = read_rows(path)
    return {k: data[:, i] for i, k in enumerate(header)}


# fit reports -------------------------------------------------------------------

_SECTIONS = ("params", "truth", "rel_errors", "losses", "seeds", "extra")


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = ", ".join(fmt(x) for x in v)
        else:
            out[key] = fmt(v)
    return out


def report_text(report: FitReport, checkpoint=None, timing: bool = True) -> str:
    """Sectioned ``key = value`` text.

    ``timing=False`` leaves out the wall-clock line, which is the only part
    of a report that is not a function of config and seeds.
    """
    lines = ["[report]", f"method = {report.method}"]
    if timing:
        lines.append(f"wall_time = {report.wall_time:.3f}")
    for name in _SECTIONS:
        d = getattr(report, name)
        if not d:
            continue
        lines += ["", f"[{name}]"]
        lines += [f"{k} = {v}" for k, v in _flatten(d).items()]
    if report.config:
        lines += ["", "[config]"]
        lines += [f"{k} = {v}" for k, v in _flatten(report.config).items()]
    if checkpoint:
        lines += ["", "[checkpoint]"]
        lines += [f"{k} = {fmt(v)}" for k, v in checkpoint]
    return "\n".join(lines) + "\n"


def write_report(report: FitReport, path, checkpoint=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_text(report, checkpoint))
    return path


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str  # parameter names are case-sensitive
    return cp


def _num(v: str):
    try:
        return float(v)
    except ValueError:
        return v


def read_report(path) -> FitReport:
    cp = _parser()
    with open(path) as fh:
        cp.read_file(fh)
    if not cp.has_section("report"):
        raise ValueError(f"{path}: not a fit report")
    sec = {s: {k: _num(v) for k, v in cp.items(s)} for s in cp.sections()}
    return FitReport(
        method=sec["report"]["method"],
        params=sec.get("params", {}),
        truth=sec.get("truth"),
        rel_errors=sec.get("rel_errors"),
        losses=sec.get("losses"),
        config=sec.get("config", {}),
        seeds=sec.get("seeds", {}),
        wall_time=float(sec["report"].get("wall_time", 0.0)),
        extra=sec.get("extra", {}),
    )


def read_checkpoint(path) -> list[tuple[str, float]]:
    cp = _parser()
    with open(path) as fh:
        cp.read_file(fh)
    return [(k, float(v)) for k, v in cp.items("checkpoint")]


# comparison --------------------------------------------------------------------

def compare(report_a: FitReport, report_b: FitReport, threshold: float = 0.10):
    """Rows (name, a, b, |a - b| / |b|, flagged) over scalar circuit parameters.

    Both reports must describe the same topology (same parameter names).
    """
    pa = {k: v for k, v in report_a.params.items() if isinstance(v, float)}
    pb = {k: v for k, v in report_b.params.items() if isinstance(v, float)}
    if set(pa) != set(pb):
        raise ValueError(f"topology mismatch: {sorted(pa)} vs {sorted(pb)}")
    rows = []
    for k in pa:
        a, b = pa[k], pb[k]
        diff = abs(a - b) / abs(b) if b != 0 else (0.0 if a == 0 else float("inf"))
        rows.append((k, a, b, diff, diff > threshold))
    return rows


def format_comparison(rows, threshold: float = 0.10) -> str:
    out = [f"{'param':<10}{'a':>14}{'b':>14}{'rel diff':>12}"]
    for name, a, b, d, flag in rows:
        out.append(f"{name:<10}{a:>14.6g}{b:>14.6g}{d:>12.4%}" + ("  > {:.0%}".format(threshold) if flag else ""))
    return "\n".join(out)


# manifests ---------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config_text: str, seeds: dict, extra: dict | None = None):
    """manifest.json with the config hash, seeds and a checksum per artifact."""
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seeds": seeds,
        "artifacts": {p.relative_to(out_dir).as_posix(): sha256_file(p) for p in files},
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path

"""Experiment configs, cached Monte Carlo runs, verdicts and rate tables.

Output layout of :func:`run_experiment` under ``out_dir``::

    config.json          canonical echo of the config (workers omitted)
    errors.csv           n,p,functional,error,ci,M
    verdict.json         machine-readable verdict
    timing.json          wall time (kept apart so the rest is byte-stable)
    cells/<digest>/n<N>.csv   per-path functional values, one file per n

A rerun with the same config reads finished ``n<N>.csv`` cells instead of
resampling them.
"""
from dataclasses import dataclass, field, replace
import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path
import time
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (
    ErrorEstimate,
    ErrorFunctional,
    admissibility_warnings,
    check_admissible,
    fit_rate,
    lp_estimate,
    simulate_functionals,
    theoretical_rate,
)
from .levy import LevySpec, _is_power_of_two
from .rng import check_seed
from .sde import DriftSpec

OUT_DIR_ENV = "LEVY_EM_OUT_DIR"
CSV_COLUMNS = ("n", "p", "functional", "error", "ci", "M")
CSV_SCHEMA_VERSION = 1
DEFAULT_TOLERANCE = 0.15
L2_LIKE_P = 2.01


class ConfigError(ValueError):
    """Invalid experiment or sweep configuration."""


def default_out_dir():
    return Path(os.environ.get(OUT_DIR_ENV, "levy_em_out"))


@dataclass
class ExperimentConfig:
    levy: LevySpec
    drift: DriftSpec
    n_ladder: list
    n_ref: int
    p_values: list = field(default_factory=lambda: [L2_LIKE_P])
    functionals: list = field(default_factory=lambda: [ErrorFunctional()])
    M: int = 1000
    seed: int = 0
    x0: Optional[list] = None
    workers: Optional[int] = None
    tolerance: float = DEFAULT_TOLERANCE
    name: str = "experiment"

    def __post_init__(self):
        self.functionals = [ErrorFunctional.parse(f) for f in self.functionals]
        self.n_ladder = sorted(int(n) for n in self.n_ladder)
        self.p_values = [float(p) for p in self.p_values]
        self.validate()

    def validate(self):
        if not _is_power_of_two(self.n_ref):
            raise ConfigError(f"n_ref must be a power of two, got {self.n_ref}")
        if not self.n_ladder:
            raise ConfigError("n_ladder is empty")
        for n in self.n_ladder:
            if not _is_power_of_two(n):
                raise ConfigError(f"ladder entries must be powers of two, got {n}")
        if max(self.n_ladder) > self.n_ref // 8:
            raise ConfigError(f"max(n_ladder)={max(self.n_ladder)} exceeds n_ref/8={self.n_ref // 8}")
        if any(not p >= 1 for p in self.p_values) or not self.p_values:
            raise ConfigError(f"p_values must be >= 1, got {self.p_values}")
        if self.M < 100:
            raise ConfigError(f"M must be >= 100, got {self.M}")
        try:
            self.seed = check_seed(self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.x0 is not None and len(np.atleast_1d(self.x0)) not in (1, self.levy.dim):
            raise ConfigError(f"x0 must have {self.levy.dim} entries")

    def to_dict(self, include_workers=True):
        out = {
            "name": self.name,
            "levy": self.levy.to_dict(),
            "drift": self.drift.to_dict(),
            "x0": None if self.x0 is None else [float(v) for v in np.atleast_1d(self.x0)],
            "n_ladder": list(self.n_ladder),
            "n_ref": int(self.n_ref),
            "p_values": list(self.p_values),
            "functionals": [f.to_json() for f in self.functionals],
            "M": int(self.M),
            "seed": int(self.seed),
            "tolerance": self.tolerance,
        }
        if include_workers:
            out["workers"] = self.workers
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                levy=LevySpec.from_dict(data["levy"]),
                drift=DriftSpec.from_dict(data["drift"]),
                n_ladder=data["n_ladder"],
                n_ref=int(data["n_ref"]),
                p_values=data.get("p_values", [L2_LIKE_P]),
                functionals=data.get("functionals", ["sup"]),
                M=int(data.get("M", 1000)),
                seed=int(data.get("seed", 0)),
                x0=data.get("x0"),
                workers=data.get("workers"),
                tolerance=float(data.get("tolerance", DEFAULT_TOLERANCE)),
                name=str(data.get("name", "experiment")),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(load_json(path))

    def digest(self):
        """Hash of everything that determines outputs (not ``workers``)."""
        blob = json.dumps(self.to_dict(include_workers=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def cell_digest(self):
        """Hash of what determines per-path values (not p, tolerance, name)."""
        d = self.to_dict(include_workers=False)
        for k in ("p_values", "tolerance", "name", "n_ladder"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


def _fmt(x):
    return repr(float(x))


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# per-n cells


def _cell_path(out_dir, config, n):
    return Path(out_dir) / "cells" / config.cell_digest() / f"n{n}.csv"


def _write_cell(path, values, functionals):
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["path"] + [f.label for f in functionals])
    for i, row in enumerate(values):
        writer.writerow([i] + [_fmt(v) for v in row])
    tmp = path.with_suffix(".tmp")
    tmp.write_text(buf.getvalue())
    tmp.replace(path)


def _read_cell(path, functionals, M):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["path"] + [f.label for f in functionals] or len(rows) != M + 1:
        return None
    return np.array([[float(v) for v in row[1:]] for row in rows[1:]])


def compute_cells(config, out_dir=None):
    """Per-path values ``{n: (M, n_functionals)}``, resumed from disk when present."""
    values = {}
    missing = []
    for n in config.n_ladder:
        cached = _read_cell(_cell_path(out_dir, config, n), config.functionals, config.M) if out_dir and _cell_path(out_dir, config, n).exists() else None
        if cached is None:
            missing.append(n)
        else:
            values[n] = cached
    if missing:
        raw = simulate_functionals(
            config.levy, config.drift, missing, config.n_ref, config.functionals,
            config.M, config.seed, config.x0, config.workers,
        )
        for j, n in enumerate(missing):
            values[n] = raw[:, j, :]
            if out_dir:
                _write_cell(_cell_path(out_dir, config, n), values[n], config.functionals)
    return values


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    config_digest: str
    seed: int
    admissible: bool
    margin: float
    theoretical_rate: Optional[float]
    fitted_slope: Optional[float]
    tolerance: float
    passed: bool
    status: str
    wall_time: float = 0.0
    cells: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        """Deterministic part of the verdict (wall time excluded)."""
        return {
            "config_digest": self.config_digest,
            "seed": self.seed,
            "version": __version__,
            "admissible": self.admissible,
            "margin": self.margin,
            "theoretical_rate": self.theoretical_rate,
            "fitted_slope": self.fitted_slope,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "status": self.status,
            "cells": self.cells,
            "warnings": self.warnings,
            "csv_schema": CSV_SCHEMA_VERSION,
            "grid": "errors evaluated on the coarse grid k/n only",
        }


def _judge(report, rate, admissible, tolerance):
    if report.status == "exact":
        return "exact", True
    if not admissible or rate is None:
        return "informational", True
    ok = report.fitted_slope >= rate - tolerance
    return ("pass" if ok else "fail"), ok


def evaluate(config, values):
    """Estimates, rate reports and the verdict from per-path values."""
    adm = check_admissible(config.levy.alpha, config.levy.alpha_tilde, config.drift.beta)
    warnings = admissibility_warnings(config.levy, config.drift)
    rows, reports, cells = [], [], []
    for p in config.p_values:
        rate = theoretical_rate(config.levy.alpha, config.levy.alpha_tilde, config.drift.beta, p) if adm.admissible and p > 2 else None
        if p <= 2:
            warnings.append(f"p={p} is outside the range p > 2 of the rate bound; slope reported without a target")
        for f, func in enumerate(config.functionals):
            points = []
            for n in config.n_ladder:
                value, ci = lp_estimate(values[n][:, f], p)
                est = ErrorEstimate(value, ci, config.M, p, n, func.label)
                points.append((n, est))
                rows.append((n, p, func.label, value, ci, config.M))
            try:
                report = fit_rate(points, rate, adm.admissible)
                status, ok = _judge(report, rate, adm.admissible, config.tolerance)
            except ValueError as exc:
                report = None
                status, ok = f"insufficient data: {exc}", not adm.admissible or rate is None
            reports.append(report)
            cells.append({
                "p": p,
                "functional": func.label,
                "theoretical_rate": rate,
                "fitted_slope": None if report is None else report.fitted_slope,
                "last_octave_slope": None if report is None else report.last_octave_slope,
                "status": status,
                "pass": ok,
            })
    head = cells[0]
    statuses = {c["status"] for c in cells}
    overall = all(c["pass"] for c in cells)
    status = "exact" if statuses == {"exact"} else ("pass" if overall else "fail")
    if status != "exact" and (not adm.admissible or statuses <= {"informational", "exact"}):
        status = "informational"
    verdict = Verdict(
        config.digest(), config.seed, adm.admissible, adm.margin, head["theoretical_rate"],
        head["fitted_slope"], config.tolerance, overall, status, 0.0, cells, warnings,
    )
    return rows, reports, verdict


def write_errors_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for n, p, label, value, ci, M in rows:
            writer.writerow([n, _fmt(p), label, _fmt(value), _fmt(ci), M])


def run_experiment(config, out_dir=None):
    """Run (or resume) one experiment; returns ``(verdict, rate_reports)``."""
    start = time.perf_counter()
    out_dir = Path(out_dir) if out_dir is not None else default_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(config.to_dict(include_workers=False), out_dir / "config.json")
    values = compute_cells(config, out_dir)
    rows, reports, verdict = evaluate(config, values)
    write_errors_csv(rows, out_dir / "errors.csv")
    _dump_json(verdict.to_dict(), out_dir / "verdict.json")
    verdict.wall_time = time.perf_counter() - start
    _dump_json({"wall_time_s": verdict.wall_time, "version": __version__}, out_dir / "timing.json")
    return verdict, reports


# ---------------------------------------------------------------------------
# sweeps


TABLE_COLUMNS = (
    "cell", "levy", "alpha", "alpha_tilde", "drift", "beta", "p", "functional", "admissible",
    "margin", "theoretical_rate", "fitted_slope", "last_octave_slope", "tolerance", "status", "pass",
)


def sweep_configs(sweep):
    """Expand ``{"base": {...}, "cells": [{...}, ...]}`` into configs."""
    if "base" not in sweep or not sweep.get("cells"):
        raise ConfigError("sweep needs 'base' and a non-empty 'cells' list")
    out = []
    for i, cell in enumerate(sweep["cells"]):
        merged = {**sweep["base"], **cell}
        merged.setdefault("name", f"cell{i:02d}")
        out.append(ExperimentConfig.from_dict(merged))
    return out


def _table_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return _fmt(v)
    return str(v)


def run_sweep(configs, out_dir=None):
    """Run every config and write ``rate_table.csv``; returns the verdicts."""
    out_dir = Path(out_dir) if out_dir is not None else default_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    verdicts = []
    rows = []
    for i, config in enumerate(configs):
        verdict, _ = run_experiment(config, out_dir / f"cell{i:02d}-{config.digest()}")
        verdicts.append(verdict)
        for cell in verdict.cells:
            rows.append([
                config.name, config.levy.kind, config.levy.alpha, config.levy.alpha_tilde,
                config.drift.kind, config.drift.beta, cell["p"], cell["functional"], verdict.admissible,
                verdict.margin, cell["theoretical_rate"], cell["fitted_slope"], cell["last_octave_slope"],
                config.tolerance, cell["status"], cell["pass"],
            ])
    with open(out_dir / "rate_table.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for row in rows:
            writer.writerow([_table_value(v) for v in row])
    return verdicts


FIGURE_CELLS = (
    (0.8, 0.7), (0.8, 0.9),
    (1.0, 0.6), (1.0, 0.9),
    (1.5, 0.35), (1.5, 0.8),
    (2.0, 0.1), (2.0, 0.6),
)


def figure_sweep(M=1000, n_ladder=(16, 32, 64, 128, 256, 512), n_ref=4096, seed=2024, p=L2_LIKE_P):
    """Sweep over the (alpha, beta) plane with ``alpha_tilde = alpha``
    (Brownian at alpha = 2), HolderPower drifts just above and well above
    the admissibility threshold."""
    cells = []
    for alpha, beta in FIGURE_CELLS:
        if alpha == 2.0:
            levy = {"kind": "Brownian", "dim": 1}
        else:
            levy = {"kind": "IsotropicStable", "alpha": alpha, "dim": 1}
        cells.append({
            "name": f"alpha{alpha:g}-beta{beta:g}",
            "levy": levy,
            "drift": {"kind": "HolderPower", "beta": beta, "amplitude": 1.0, "center": 0.0},
        })
    base = {
        "n_ladder": list(n_ladder), "n_ref": n_ref, "p_values": [p], "functionals": ["sup"],
        "M": M, "seed": seed, "tolerance": DEFAULT_TOLERANCE,
    }
    return {"base": base, "cells": cells}


def with_overrides(config, seed=None, samples=None, workers=None):
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if samples is not None:
        changes["M"] = samples
    if workers is not None:
        changes["workers"] = workers
    return replace(config, **changes) if changes else config

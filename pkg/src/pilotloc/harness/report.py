"""Monte Carlo reports and their CSV form.

One CSV file per series (variant x estimator). The first line is a versioned
comment, the second the column names in ``COLUMNS`` order, then one row per
sweep point. Floats are written with ``repr`` (shortest round-trip form, no
locale), so ``parse_csv(emit)`` reproduces the table exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["CSV_VERSION", "COLUMNS", "PointResult", "SeriesResult", "MonteCarloReport",
           "series_csv_text", "emit_csv", "parse_csv", "series_filename"]

CSV_VERSION = "pilotloc-csv/1"

COLUMNS = (
    "sweep_value",
    "rmse_phi_deg", "rmse_theta_deg", "rmse_fd_hz",
    "crlb_phi_deg", "crlb_theta_deg", "crlb_fd_hz",
    "ser", "sdr_empirical", "sdr_analytic_1st", "sdr_analytic_2nd",
    "ci_rmse_phi_deg", "ci_rmse_theta_deg", "ci_rmse_fd_hz", "ci_ser", "ci_sdr_empirical",
    "trials", "failures",
)
_INT_COLUMNS = ("trials", "failures")


@dataclass
class PointResult:
    """Aggregates for one sweep point; ``samples`` keeps trial-level arrays (not written)."""

    sweep_value: float
    metrics: dict
    samples: dict = field(default_factory=dict, repr=False)
    warnings: list = field(default_factory=list)

    def row(self) -> list:
        out = []
        for name in COLUMNS:
            v = self.sweep_value if name == "sweep_value" else self.metrics[name]
            out.append(v)
        return out


@dataclass
class SeriesResult:
    variant: str
    estimator: str
    points: list = field(default_factory=list)

    @property
    def name(self) -> str:
        return f"{self.variant}/{self.estimator}"

    def column(self, name: str) -> np.ndarray:
        if name == "sweep_value":
            return np.array([p.sweep_value for p in self.points], dtype=float)
        return np.array([p.metrics[name] for p in self.points], dtype=float)

    def table(self) -> np.ndarray:
        return np.array([[float(v) for v in p.row()] for p in self.points],
                        dtype=float).reshape(len(self.points), len(COLUMNS))


@dataclass
class MonteCarloReport:
    scenario: str
    sweep_variable: str
    series: dict                      # name -> SeriesResult, insertion-ordered
    base_seed: int
    trials: int
    wall_time_s: float = 0.0
    warnings: list = field(default_factory=list)

    def get(self, variant: str, estimator: str) -> SeriesResult:
        return self.series[f"{variant}/{estimator}"]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def series_filename(scenario: str, series: SeriesResult) -> str:
    return f"{scenario}_{series.variant}_{series.estimator}.csv"


def series_csv_text(report: MonteCarloReport, series: SeriesResult) -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION} scenario={report.scenario} series={series.name} "
              f"sweep={report.sweep_variable} seed={report.base_seed} trials={report.trials}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for p in series.points:
        w.writerow([_fmt(v) if name not in _INT_COLUMNS else str(int(v))
                    for name, v in zip(COLUMNS, p.row())])
    return buf.getvalue()


def emit_csv(report: MonteCarloReport, out_dir: str | Path) -> list[Path]:
    """Write one file per series into ``out_dir``; returns the paths in series order."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = []
    for series in report.series.values():
        path = out / series_filename(report.scenario, series)
        try:
            path.write_text(series_csv_text(report, series), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        paths.append(path)
    return paths


def parse_csv(source) -> tuple[dict, np.ndarray]:
    """(header metadata, numeric table in ``COLUMNS`` order) from a path or CSV text."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError("missing version comment line")
    parts = lines[0][2:].split()
    if parts[0] != CSV_VERSION:
        raise ValueError(f"unsupported CSV version {parts[0]!r}")
    meta = dict(p.split("=", 1) for p in parts[1:])
    rows = list(csv.reader(lines[1:]))
    if tuple(rows[0]) != COLUMNS:
        raise ValueError("column header does not match the documented order")
    table = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    return meta, table.reshape(len(rows) - 1, len(COLUMNS))

"""Energy observables, power-law fits and run output files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .spectral import RangeMask, WavenumberGrid

CSV_HEADER = ("t", "E", "dEdt", "rms_z0", "rms_z1", "rms_z2")


class FitError(ValueError):
    pass


@dataclass
class TimeSeriesRecord:
    t: float
    E: float
    dEdt: float
    rms: tuple = ()  # per-order memory contribution RMS; missing orders omitted

    def row(self) -> list[str]:
        vals = [self.t, self.E, self.dEdt]
        cells = [_fmt(v) for v in vals]
        for j in range(3):
            cells.append(_fmt(self.rms[j]) if j < len(self.rms) else "")
        return cells


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class DecayFit:
    slope: float
    stderr: float
    window: tuple[float, float]
    points: int
    intercept: float = 0.0

    def to_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "window": list(self.window),
                "points": self.points, "intercept": self.intercept}


def energy(grid: WavenumberGrid, u: np.ndarray, mask: RangeMask = RangeMask.F) -> float:
    """``1/2 sum_{k in mask} |u_k|^2``."""
    grid.check(u)
    sel = grid.mask_array(mask)
    return 0.5 * float(np.sum(np.abs(u[:, sel]) ** 2))


def energy_resolved(grid: WavenumberGrid, u_hat: np.ndarray) -> float:
    return energy(grid, u_hat, RangeMask.F)


def energy_decay_rate(grid: WavenumberGrid, u: np.ndarray, dudt: np.ndarray,
                      mask: RangeMask = RangeMask.F) -> float:
    """``sum_{k in mask} Re(conj(u_k) . du_k/dt)``."""
    grid.check(u)
    grid.check(dudt)
    sel = grid.mask_array(mask)
    return float(np.sum(np.real(np.conj(u[:, sel]) * dudt[:, sel])))


def rms(packed: np.ndarray) -> float:
    """Root mean square over modes of a ``(3, nF)`` packed field."""
    if packed.size == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(packed) ** 2) / packed.shape[-1]))


def fit_loglog_slope(records: Sequence[TimeSeriesRecord],
                     window: tuple[float, float] = (10.0, 100.0),
                     min_points: int = 10) -> DecayFit:
    """Ordinary least squares of ``log E`` against ``log t`` for ``t`` in ``window``."""
    a, b = window
    pts = [(r.t, r.E) for r in records if a <= r.t <= b]
    if len(pts) < min_points:
        raise FitError(f"only {len(pts)} records in window {window}; need {min_points}")
    t = np.array([p[0] for p in pts])
    e = np.array([p[1] for p in pts])
    if np.any(t <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise FitError("log-log fit needs positive, finite t and E in the window")
    x, y = np.log(t), np.log(e)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    n = len(x)
    sxx = np.sum((x - x.mean()) ** 2)
    var = float(resid @ resid) / (n - 2) if n > 2 else 0.0
    stderr = math.sqrt(var / sxx) if sxx > 0 else float("inf")
    return DecayFit(float(coef[0]), stderr, (a, b), n, float(coef[1]))


def count_local_maxima(values: Sequence[float], min_prominence: float = 0.0) -> int:
    """Strict interior local maxima, optionally above a prominence threshold."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return 0
    if min_prominence <= 0:
        return int(np.sum((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])))
    from scipy.signal import find_peaks
    peaks, _ = find_peaks(v, prominence=min_prominence)
    return int(len(peaks))


def count_waves(records: Sequence[TimeSeriesRecord], t_after: float = 2.0,
                rel_prominence: float = 0.05) -> int:
    """Number of bursts of ``|dE/dt|`` after ``t_after``.

    A burst is a local maximum of ``|dE/dt|`` whose prominence exceeds
    ``rel_prominence`` times the largest ``|dE/dt|`` in that range.
    """
    vals = [abs(r.dEdt) for r in records if r.t > t_after]
    if not vals:
        return 0
    return count_local_maxima(vals, rel_prominence * max(vals))


def dominance_fraction(records: Sequence[TimeSeriesRecord], hi: int = 0, lo: int = 1,
                       factor: float = 10.0, t_after: float = 0.0) -> float:
    """Fraction of records where ``rms[hi] >= factor * rms[lo]``."""
    usable = [r for r in records if r.t > t_after and len(r.rms) > max(hi, lo)]
    if not usable:
        return 0.0
    ok = sum(r.rms[hi] >= factor * r.rms[lo] for r in usable)
    return ok / len(usable)


# -- files ------------------------------------------------------------------------


def write_energy_csv(records: Sequence[TimeSeriesRecord], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())
    return path


def read_energy_csv(path: str | Path) -> list[TimeSeriesRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in rd:
            rms_vals = tuple(float(x) for x in row[3:] if x != "")
            out.append(TimeSeriesRecord(float(row[0]), float(row[1]), float(row[2]), rms_vals))
    return out


@dataclass
class RunSummary:
    config: dict
    grid: dict
    fit: DecayFit | None
    blowup: dict | None
    wall_time: float
    steps: int
    final_time: float
    extra: dict = field(default_factory=dict)


def write_outputs(records: Sequence[TimeSeriesRecord], summary: RunSummary,
                  destination: str | Path) -> tuple[Path, Path]:
    """Write ``energy.csv`` and ``manifest.json`` into ``destination``."""
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
        csv_path = write_energy_csv(records, dest / "energy.csv")
        manifest = {
            "config": summary.config,
            "grid": summary.grid,
            "model": summary.config.get("model"),
            "t0": summary.config.get("t0"),
            "dt": summary.config.get("dt"),
            "integrator": summary.config.get("integrator"),
            "quadrature": summary.config.get("quadrature"),
            "fit_window": summary.config.get("fit_window"),
            "fit": summary.fit.to_dict() if summary.fit else None,
            "wall_clock_seconds": summary.wall_time,
            "steps": summary.steps,
            "final_time": summary.final_time,
            "blowup": summary.blowup,
            "records": len(records),
            **summary.extra,
        }
        man_path = dest / "manifest.json"
        man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write outputs to {dest}: {exc}") from exc
    return csv_path, man_path

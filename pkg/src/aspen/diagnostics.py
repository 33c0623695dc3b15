"""Figures of merit: errors, residual statistics, wall/energy/spectrum observables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelParams, predict
from .pde import PdeSpec
from .reference import Field


@dataclass
class EvalGrid:
    """Uniform tensor grid; deterministic, so disjoint in law from LHS points."""

    x: np.ndarray
    t: np.ndarray

    @classmethod
    def uniform(cls, pde: PdeSpec, nx: int = 1024, nt: int = 200) -> "EvalGrid":
        return cls(np.linspace(*pde.x_domain, nx), np.linspace(*pde.t_domain, nt))

    @classmethod
    def of(cls, f: Field) -> "EvalGrid":
        return cls(f.grid_x, f.grid_t)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (x, t) in row-major (t, x) order."""
        T, X = np.meshgrid(self.t, self.x, indexing="ij")
        return X.ravel(), T.ravel()


def relative_l2(pred, truth) -> float:
    """||A - A_hat||_2 / ||A||_2 over all grid values (complex magnitudes)."""
    p = pred.values if isinstance(pred, Field) else np.asarray(pred)
    q = truth.values if isinstance(truth, Field) else np.asarray(truth)
    if p.shape != q.shape:
        raise ValueError(f"grid mismatch: {p.shape} vs {q.shape}")
    den = np.linalg.norm(q)
    if den == 0:
        raise ValueError("truth field is identically zero")
    return float(np.linalg.norm(p - q) / den)


def predict_field(params: ModelParams, grid: EvalGrid, pde: PdeSpec | None = None) -> Field:
    X, T = grid.mesh()
    A = predict(params, X, T).reshape(grid.t.size, grid.x.size)
    return Field(grid.x.copy(), grid.t.copy(), A, pde)


def wall_position(row, x) -> float | None:
    """Zero crossing of Re A nearest x = 0, linearly interpolated; None if absent."""
    u = np.real(np.asarray(row))
    x = np.asarray(x, float)
    s = np.sign(u)
    exact = np.flatnonzero(u == 0)
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)
    cands = [x[i] - u[i] * (x[i + 1] - x[i]) / (u[i + 1] - u[i]) for i in idx]
    cands += list(x[exact])
    if not cands:
        return None
    cands = np.asarray(cands)
    return float(cands[np.argmin(np.abs(cands))])


def free_energy(row, dx: float) -> float:
    """sum(|dA/dx|^2 + (|A|^2 - 1)^2 / 2) dx; central differences, one-sided at ends."""
    A = np.asarray(row, dtype=np.complex128)
    dA = np.gradient(A, dx)
    return float(np.sum(np.abs(dA) ** 2 + 0.5 * (np.abs(A) ** 2 - 1.0) ** 2) * dx)


def power_spectrum(row, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided |DFT(Re A)|^2 with frequencies in cycles per unit x.

    Interior bins carry both signs of frequency, so sum(power) = Nx * sum(Re A^2).
    """
    u = np.real(np.asarray(row))
    n = u.size
    X = np.fft.rfft(u)
    p = np.abs(X) ** 2
    if n % 2 == 0:
        p[1:-1] *= 2.0
    else:
        p[1:] *= 2.0
    return np.fft.rfftfreq(n, d=dx), p


def mean_power_spectrum(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Power spectrum averaged over all stored snapshots."""
    freq, acc = power_spectrum(f.values[0], f.dx)
    for row in f.values[1:]:
        acc = acc + power_spectrum(row, f.dx)[1]
    return freq, acc / f.nt


def log_spectrum_rms(pred_power, truth_power, min_bin: int = 10, floor_rel: float = 1e-12) -> float:
    """RMS of log10 power differences over bins >= ``min_bin``.

    Both spectra are floored at ``floor_rel`` times the truth maximum so empty
    bins do not dominate.
    """
    floor = floor_rel * float(np.max(truth_power))
    a = np.log10(np.maximum(pred_power[min_bin:], floor))
    b = np.log10(np.maximum(truth_power[min_bin:], floor))
    return float(np.sqrt(np.mean((a - b) ** 2)))


def k_histogram(K_before, K_after, bins: int = 30):
    """Histograms of row norms |K_j| over shared bins: (edges, before, after)."""
    nb = np.linalg.norm(np.asarray(K_before, float), axis=1)
    na = np.linalg.norm(np.asarray(K_after, float), axis=1)
    if nb.size != na.size:
        raise ValueError("K matrices must have the same number of rows")
    hi = max(float(nb.max(initial=0.0)), float(na.max(initial=0.0)))
    edges = np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)
    return edges, np.histogram(nb, edges)[0], np.histogram(na, edges)[0]


def residual_grid(params: ModelParams, pde: PdeSpec, grid: EvalGrid) -> np.ndarray:
    """|f| on the grid, shape (nt, nx)."""
    from .training import residual_on_points

    X, T = grid.mesh()
    return residual_on_points(params, pde, X, T).reshape(grid.t.size, grid.x.size)


def residual_profile(params: ModelParams, pde: PdeSpec, grid: EvalGrid) -> np.ndarray:
    """Per-x maximum over t of |f|."""
    return residual_grid(params, pde, grid).max(axis=0)


def wall_series(f: Field) -> list[float | None]:
    return [wall_position(row, f.grid_x) for row in f.values]


def energy_series(f: Field) -> np.ndarray:
    return np.array([free_energy(row, f.dx) for row in f.values])


# --------------------------------------------------------------------------
# report

SCHEMAS = {
    "wall.csv": ["t", "x_wall", "x_wall_ref"],
    "energy.csv": ["t", "F", "F_ref"],
    "psd.csv": ["freq", "power", "power_ref"],
    "residual_profile.csv": ["x", "max_residual"],
    "k_hist.csv": ["bin_lo", "bin_hi", "count_init", "count_trained"],
}


@dataclass
class DiagnosticsReport:
    status: str = "ok"
    rel_l2: float | None = None
    res_median: float | None = None
    res_mean: float | None = None
    res_max: float | None = None
    t: np.ndarray | None = None
    wall: list | None = None
    wall_ref: list | None = None
    energy: np.ndarray | None = None
    energy_ref: np.ndarray | None = None
    psd_freq: np.ndarray | None = None
    psd: np.ndarray | None = None
    psd_ref: np.ndarray | None = None
    profile_x: np.ndarray | None = None
    profile: np.ndarray | None = None
    k_edges: np.ndarray | None = None
    k_init: np.ndarray | None = None
    k_trained: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {"status": self.status, "rel_l2": self.rel_l2, "res_median": self.res_median,
               "res_mean": self.res_mean, "res_max": self.res_max}
        out.update(self.extra)
        return out


def build_report(params: ModelParams | None, pde: PdeSpec, truth: Field | None,
                 K_init=None, status: str = "ok", res_grid: EvalGrid | None = None
                 ) -> DiagnosticsReport:
    """Evaluate a trained model against a reference Field.

    A diverged run (``params`` None or status != ok) yields a report carrying
    only the reference series and the status.
    """
    rep = DiagnosticsReport(status=status)
    if truth is not None:
        rep.t = truth.grid_t
        rep.wall_ref = wall_series(truth)
        rep.energy_ref = energy_series(truth)
        rep.psd_freq, rep.psd_ref = mean_power_spectrum(truth)
    if params is None or status != "ok":
        return rep
    if truth is not None:
        pred = predict_field(params, EvalGrid.of(truth), pde)
        if not np.all(np.isfinite(pred.values)):
            rep.status = "diverged"
            return rep
        rep.rel_l2 = relative_l2(pred, truth)
        rep.wall = wall_series(pred)
        rep.energy = energy_series(pred)
        rep.psd = mean_power_spectrum(pred)[1]
    grid = res_grid or EvalGrid.uniform(pde, 256, 64)
    r = residual_grid(params, pde, grid)
    rep.res_median, rep.res_mean, rep.res_max = (float(np.median(r)), float(np.mean(r)),
                                                 float(np.max(r)))
    rep.profile_x, rep.profile = grid.x, r.max(axis=0)
    if K_init is not None and params.spectral is not None:
        rep.k_edges, rep.k_init, rep.k_trained = k_histogram(K_init, params.spectral.K.value)
    return rep


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def write_csv(path, columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path, columns: list[str] | None = None) -> list[dict]:
    """Parse a CSV back into dicts of floats (empty cells -> None), checking the header."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if columns is not None and header != columns:
            raise ValueError(f"{path}: header {header} != {columns}")
        rows = []
        for line in rd:
            if len(line) != len(header):
                raise ValueError(f"{path}: ragged row {line}")
            rows.append({k: _parse_cell(v) for k, v in zip(header, line)})
    return rows


def _parse_cell(v: str):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def write_summary(path, summary: dict) -> None:
    with open(path, "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k} = {_fmt(v)}\n")


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition(" = ")
            out[k.strip()] = _parse_cell(v.strip())
    return out


def write_report(rep: DiagnosticsReport, out_dir) -> Path:
    """Write summary.txt plus one CSV per available series."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_summary(out / "summary.txt", rep.summary())
    n = 0 if rep.t is None else len(rep.t)
    col = lambda s, i: None if s is None else s[i]
    if n:
        write_csv(out / "wall.csv", SCHEMAS["wall.csv"],
                  ((rep.t[i], col(rep.wall, i), col(rep.wall_ref, i)) for i in range(n)))
        write_csv(out / "energy.csv", SCHEMAS["energy.csv"],
                  ((rep.t[i], col(rep.energy, i), col(rep.energy_ref, i)) for i in range(n)))
    if rep.psd_freq is not None:
        write_csv(out / "psd.csv", SCHEMAS["psd.csv"],
                  ((f, col(rep.psd, i), col(rep.psd_ref, i)) for i, f in enumerate(rep.psd_freq)))
    if rep.profile is not None:
        write_csv(out / "residual_profile.csv", SCHEMAS["residual_profile.csv"],
                  zip(rep.profile_x, rep.profile))
    if rep.k_edges is not None:
        e = rep.k_edges
        write_csv(out / "k_hist.csv", SCHEMAS["k_hist.csv"],
                  zip(e[:-1], e[1:], rep.k_init, rep.k_trained))
    return out

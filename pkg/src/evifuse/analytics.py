"""Quantitative companions to the fused maps: densities, sweeps, summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .reliability import expected_weights, tempered_posterior

KDE_GRID_SIZE = 512
KDE_SUBSAMPLE_LIMIT = 1_000_000
BANDWIDTH_FLOOR = 1e-3

# Paper-figure-style calibration ranges and probe magnitudes.
TEMPERATURE_GRID = (0.1, 100.0, 25)
SENSITIVITY_GRID = (1.0, 1000.0, 25)
DEFAULT_PROBE_MAGNITUDES = (0.002, 0.005, 0.02)


@dataclass(frozen=True)
class DensityCurve:
    metric: str
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n_points: int
    degenerate: bool = False
    spike_at: float | None = None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "grid": [float(g) for g in self.grid],
            "density": [float(d) for d in self.density],
            "bandwidth": float(self.bandwidth),
            "n_points": int(self.n_points),
            "degenerate": bool(self.degenerate),
            "spike_at": None if self.spike_at is None else float(self.spike_at),
        }


@dataclass(frozen=True)
class SweepCurve:
    parameter: str  # "T" or "lambda"
    xs: np.ndarray
    series: dict[str, np.ndarray]

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "xs": [float(x) for x in self.xs],
            "series": {name: [float(v) for v in ys] for name, ys in self.series.items()},
        }


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    median: float
    p05: float
    p95: float
    frac_above_half: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "median": self.median,
            "p05": self.p05,
            "p95": self.p95,
            "frac_above_half": self.frac_above_half,
        }


@dataclass(frozen=True)
class SummaryStats:
    metrics: dict[str, MetricSummary]
    mean_conflict: float
    weights: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "metrics": {name: s.to_dict() for name, s in self.metrics.items()},
            "mean_conflict": self.mean_conflict,
            "weights": self.weights,
        }


def silverman_bandwidth(values: np.ndarray) -> float:
    """Rule-of-thumb bandwidth, floored to avoid spikes on tight data."""
    std = float(np.std(values))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    bw = 0.9 * spread * len(values) ** (-0.2)
    return max(bw, BANDWIDTH_FLOOR)


def _spike_curve(metric: str, value: float, grid_size: int, n_points: int) -> DensityCurve:
    grid = np.linspace(0.0, 1.0, grid_size)
    density = np.zeros(grid_size)
    idx = int(np.argmin(np.abs(grid - value)))
    dx = grid[1] - grid[0]
    # Trapezoid integral of a single nonzero grid point is h*dx interior, h*dx/2 at an edge.
    density[idx] = (2.0 if idx in (0, grid_size - 1) else 1.0) / dx
    return DensityCurve(
        metric=metric,
        grid=grid,
        density=density,
        bandwidth=BANDWIDTH_FLOOR,
        n_points=n_points,
        degenerate=True,
        spike_at=float(value),
    )


def kde(
    values,
    grid_size: int = KDE_GRID_SIZE,
    *,
    metric: str = "value",
    subsample_limit: int = KDE_SUBSAMPLE_LIMIT,
    seed: int = 0,
) -> DensityCurve:
    """Gaussian-kernel density on [0, 1], truncated and renormalized.

    Mass metrics live on a closed interval; kernel mass spilling past the
    edges is handled by truncating to the grid and renormalizing the
    trapezoid integral to one, which preserves the characteristic spike
    at zero better than boundary reflection would. Fewer than two values
    or zero variance yields a flagged single-spike curve rather than an
    error. Inputs beyond the limit are uniformly subsampled with the
    given seed.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValidationError("density estimation needs at least one value")
    if not np.all(np.isfinite(v)):
        raise ValidationError("density estimation requires finite values")
    if float(v.min()) < -1e-9 or float(v.max()) > 1 + 1e-9:
        raise ValidationError("density estimation expects values in [0, 1]")
    v = np.clip(v, 0.0, 1.0)
    if grid_size < 2:
        raise ValidationError("grid_size must be at least 2")

    if v.size < 2 or float(np.std(v)) == 0.0:
        return _spike_curve(metric, float(v[0]), grid_size, v.size)

    if v.size > subsample_limit:
        rng = np.random.Generator(np.random.PCG64(seed))
        v = rng.choice(v, size=subsample_limit, replace=False)

    bw = silverman_bandwidth(v)
    grid = np.linspace(0.0, 1.0, grid_size)
    accum = np.zeros(grid_size)
    chunk = max(1, 2**22 // grid_size)
    for start in range(0, v.size, chunk):
        block = v[start : start + chunk]
        z = (grid[None, :] - block[:, None]) / bw
        accum += np.exp(-0.5 * z * z).sum(axis=0)
    density = accum / (v.size * bw * math.sqrt(2.0 * math.pi))
    integral = float(np.trapezoid(density, grid))
    density = density / integral
    return DensityCurve(
        metric=metric, grid=grid, density=density, bandwidth=bw, n_points=int(v.size)
    )


def default_temperature_grid() -> np.ndarray:
    lo, hi, n = TEMPERATURE_GRID
    return np.geomspace(lo, hi, n)


def default_sensitivity_grid() -> np.ndarray:
    lo, hi, n = SENSITIVITY_GRID
    return np.geomspace(lo, hi, n)


def _check_grid(xs, name: str) -> np.ndarray:
    g = np.asarray(xs, dtype=np.float64)
    if g.ndim != 1 or g.size < 2:
        raise ValidationError(f"{name} grid must be a 1-D sequence of at least two values")
    if np.any(g <= 0):
        raise ValidationError(f"{name} grid values must be positive")
    if np.any(np.diff(g) <= 0):
        raise ValidationError(f"{name} grid must be strictly ascending")
    return g


def sweep_temperature(counts, temperatures=None, *, alpha0=None, model_ids=None) -> SweepCurve:
    """Expected model weights across a temperature grid, one row per model."""
    ts = default_temperature_grid() if temperatures is None else _check_grid(temperatures, "temperature")
    c = np.asarray(counts, dtype=np.float64)
    names = (
        [f"model_{j}" for j in range(c.size)]
        if model_ids is None
        else [str(m) for m in model_ids]
    )
    if len(names) != c.size:
        raise ValidationError("model_ids length must match counts")
    rows = np.empty((c.size, ts.size))
    for i, t in enumerate(ts):
        rows[:, i] = expected_weights(tempered_posterior(c, float(t), alpha0)).w
    return SweepCurve(parameter="T", xs=ts, series={n: rows[j] for j, n in enumerate(names)})


def sweep_sensitivity(probe_magnitudes=None, sensitivities=None) -> SweepCurve:
    """Unit-weight belief mass across a sensitivity grid, one row per probe."""
    lams = (
        default_sensitivity_grid()
        if sensitivities is None
        else _check_grid(sensitivities, "sensitivity")
    )
    probes = DEFAULT_PROBE_MAGNITUDES if probe_magnitudes is None else tuple(probe_magnitudes)
    if not probes:
        raise ValidationError("at least one probe magnitude is required")
    p = np.asarray(probes, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValidationError("probe magnitudes must be finite")
    series = {}
    for phi in p:
        series[f"phi={phi:g}"] = np.maximum(0.0, np.tanh(lams * phi))
    return SweepCurve(parameter="lambda", xs=lams, series=series)


def summarize_metric(values: np.ndarray) -> MetricSummary:
    v = np.asarray(values, dtype=np.float64).ravel()
    p05, med, p95 = np.percentile(v, [5, 50, 95])
    return MetricSummary(
        mean=float(v.mean()),
        median=float(med),
        p05=float(p05),
        p95=float(p95),
        frac_above_half=float(np.mean(v > 0.5)),
    )


def summarize(bel, pl, unc, k_total, weights: dict[str, float]) -> SummaryStats:
    """Numeric digest of the fused planes and the weights that shaped them."""
    return SummaryStats(
        metrics={
            "belief": summarize_metric(bel),
            "plausibility": summarize_metric(pl),
            "uncertainty": summarize_metric(unc),
        },
        mean_conflict=float(np.asarray(k_total, dtype=np.float64).mean()),
        weights={k: float(v) for k, v in weights.items()},
    )

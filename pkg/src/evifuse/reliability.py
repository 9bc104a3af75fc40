"""Bayesian model reliability: counts, tempered posterior, weight draws.

Each ensemble member gets a single global reliability weight. Correct
prediction counts over a shared validation set act as multinomial
evidence for a Dirichlet posterior whose concentration is
``alpha0 + counts / temperature``. Low temperature sharpens the
posterior toward the empirical count ratios, high temperature washes it
out toward the prior. Weights used downstream are either the analytic
posterior mean or a single seeded draw from the posterior.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ValidationError

VALIDATION_LOG_HEADER = ("sample_id", "predicted_class", "true_class")


@dataclass(frozen=True)
class ValidationRecord:
    sample_id: str
    predicted_class: int
    true_class: int


@dataclass(frozen=True)
class ValidationLog:
    """Per-model prediction record over one validation set."""

    model_id: str
    records: tuple[ValidationRecord, ...]

    @property
    def size(self) -> int:
        return len(self.records)

    def sample_ids(self) -> tuple[str, ...]:
        return tuple(r.sample_id for r in self.records)


def load_validation_log(
    path: str | os.PathLike, model_id: str, *, n_classes: int | None = None
) -> ValidationLog:
    """Read a ``sample_id,predicted_class,true_class`` CSV (header required)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file, expected a header line") from None
            if tuple(h.strip() for h in header) != VALIDATION_LOG_HEADER:
                raise DataError(
                    f"{path}: bad header {header!r}, expected {','.join(VALIDATION_LOG_HEADER)}"
                )
            records = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
                sample_id, pred_s, true_s = (f.strip() for f in row)
                try:
                    pred, true = int(pred_s), int(true_s)
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: class indices must be integers, got {pred_s!r},{true_s!r}"
                    ) from None
                if pred < 0 or true < 0:
                    raise DataError(f"{path}:{lineno}: class indices must be non-negative")
                if n_classes is not None and (pred >= n_classes or true >= n_classes):
                    raise DataError(
                        f"{path}:{lineno}: class index out of range for {n_classes} classes"
                    )
                records.append(ValidationRecord(sample_id, pred, true))
    except OSError as exc:
        raise DataError(f"{path}: cannot read validation log ({exc})") from exc
    return ValidationLog(model_id=model_id, records=tuple(records))


def accumulate_counts(logs) -> np.ndarray:
    """Count correct predictions per model over an aligned validation set.

    All logs must cover the same samples in the same order; the shared
    ordering is what makes the counts comparable evidence.
    """
    logs = list(logs)
    if not logs:
        raise ValidationError("at least one validation log is required")
    reference = logs[0].sample_ids()
    if len(reference) == 0:
        raise ValidationError(f"validation log for {logs[0].model_id!r} is empty")
    for log in logs[1:]:
        ids = log.sample_ids()
        if ids != reference:
            detail = "lengths differ" if len(ids) != len(reference) else "sample order differs"
            raise ValidationError(
                f"validation logs are not aligned: {logs[0].model_id!r} vs {log.model_id!r} ({detail})"
            )
    counts = [
        sum(1 for r in log.records if r.predicted_class == r.true_class) for log in logs
    ]
    return np.asarray(counts, dtype=np.int64)


def scores_to_pseudo_counts(scores, scale: int) -> np.ndarray:
    """Turn per-model scores in [0, 1] into round(score * scale) pseudo-counts."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValidationError("scores must be a non-empty 1-D sequence")
    if np.any((s < 0) | (s > 1)):
        raise ValidationError("scores must lie in [0, 1]")
    if scale <= 0:
        raise ValidationError("score scale must be positive")
    return np.rint(s * scale).astype(np.int64)


@dataclass(frozen=True)
class DirichletPosterior:
    """Concentration ``alpha = alpha0 + counts / temperature``."""

    alpha: np.ndarray
    temperature: float
    alpha0: np.ndarray

    @property
    def size(self) -> int:
        return int(self.alpha.size)


@dataclass(frozen=True)
class WeightVector:
    """Normalized model weights plus how they were obtained."""

    w: np.ndarray
    provenance: str  # "expected" or "sampled"
    seed: int | None = None

    def label(self) -> str:
        if self.provenance == "sampled":
            return f"sampled(seed={self.seed})"
        return "expected"


def tempered_posterior(counts, temperature: float, alpha0=None) -> DirichletPosterior:
    """Update the Dirichlet prior with temperature-scaled counts."""
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 1 or c.size == 0:
        raise ValidationError("counts must be a non-empty 1-D sequence")
    if np.any(c < 0):
        raise ValidationError("counts must be non-negative")
    if not (isinstance(temperature, (int, float)) and math.isfinite(temperature) and temperature > 0):
        raise ValidationError(f"temperature must be a positive finite number, got {temperature!r}")
    if alpha0 is None:
        a0 = np.ones(c.size, dtype=np.float64)
    else:
        a0 = np.asarray(alpha0, dtype=np.float64)
        if a0.shape != c.shape:
            raise ValidationError(
                f"alpha0 length {a0.size} does not match {c.size} models"
            )
        if np.any(a0 <= 0):
            raise ValidationError("alpha0 entries must be positive")
    alpha = a0 + c / float(temperature)
    return DirichletPosterior(alpha=alpha, temperature=float(temperature), alpha0=a0)


def expected_weights(posterior: DirichletPosterior) -> WeightVector:
    """Posterior mean weights: alpha normalized to sum one."""
    w = posterior.alpha / posterior.alpha.sum()
    return WeightVector(w=w, provenance="expected")


def _gamma_marsaglia_tsang(rng: np.random.Generator, shape: float) -> float:
    """One Gamma(shape, 1) variate via the Marsaglia-Tsang squeeze.

    Exact-distribution rejection sampler; shapes below one are boosted
    through the Gamma(shape + 1) identity.
    """
    if shape < 1.0:
        u = rng.random()
        return _gamma_marsaglia_tsang(rng, shape + 1.0) * u ** (1.0 / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.random()
        if u < 1.0 - 0.0331 * x * x * x * x:
            return d * v
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v


def sample_weights(posterior: DirichletPosterior, seed: int) -> WeightVector:
    """One Dirichlet draw via normalized independent Gamma variates.

    Deterministic per (posterior, seed); the PCG64 stream is consumed in
    coordinate order so identical inputs give bit-identical weights.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = np.array(
        [_gamma_marsaglia_tsang(rng, float(a)) for a in posterior.alpha],
        dtype=np.float64,
    )
    w = draws / draws.sum()
    return WeightVector(w=w, provenance="sampled", seed=int(seed))

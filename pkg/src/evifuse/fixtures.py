"""Synthetic ensembles: blob attributions and validation logs on demand.

Everything the pipeline consumes can be generated here with a seed, so
the full engine exercises end to end without any learned model. Each
synthetic model contributes the shared blob signal scaled by its
fidelity (sign-flipped for deliberately conflicting members) plus its
own Gaussian noise, and a validation log with a prescribed number of
correct records.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import io as eio
from .errors import ValidationError
from .reliability import ValidationLog, ValidationRecord

DEFAULT_BLOB_AMPLITUDE = 0.02  # strong-signal operating point for sensitivity 100
DEFAULT_NOISE_SIGMA = 0.002 / 3.0


@dataclass(frozen=True)
class BlobSpec:
    row: float
    col: float
    radius: float
    amplitude: float = DEFAULT_BLOB_AMPLITUDE


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    accuracy: float
    blob_fidelity: float = 1.0
    conflict_flip: bool = False


@dataclass(frozen=True)
class FixtureSpec:
    height: int
    width: int
    blobs: tuple[BlobSpec, ...]
    models: tuple[ModelSpec, ...]
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    seed: int = 0
    val_size: int = 100
    class_names: tuple[str, ...] = ("negative", "positive")
    target_class: int = 1

    def validate(self) -> None:
        problems = []
        if self.height < 8 or self.width < 8:
            problems.append(f"image dimensions must be at least 8 x 8, got {self.height} x {self.width}")
        if not self.models:
            problems.append("at least one model is required")
        for m in self.models:
            if not 0.0 <= m.accuracy <= 1.0:
                problems.append(f"{m.model_id}: accuracy must lie in [0, 1]")
            if not 0.0 <= m.blob_fidelity <= 1.0:
                problems.append(f"{m.model_id}: blob_fidelity must lie in [0, 1]")
        for b in self.blobs:
            if b.radius <= 0:
                problems.append(f"blob at ({b.row}, {b.col}): radius must be positive")
        if self.noise_sigma < 0:
            problems.append("noise_sigma must be non-negative")
        if self.val_size < 1:
            problems.append("val_size must be at least 1")
        if len(self.class_names) < 2:
            problems.append("at least two class names are required")
        if not 0 <= self.target_class < len(self.class_names):
            problems.append("target_class out of range")
        if problems:
            raise ValidationError("invalid fixture spec: " + "; ".join(problems))


@dataclass
class FixtureBundle:
    attributions: dict[str, np.ndarray]
    logs: dict[str, ValidationLog]
    blob_mask: np.ndarray
    clean_signal: np.ndarray


def clean_signal(spec: FixtureSpec) -> np.ndarray:
    """Sum of Gaussian bumps, each radius acting as the Gaussian sigma."""
    rows = np.arange(spec.height, dtype=np.float64)[:, None]
    cols = np.arange(spec.width, dtype=np.float64)[None, :]
    signal = np.zeros((spec.height, spec.width))
    for b in spec.blobs:
        d2 = (rows - b.row) ** 2 + (cols - b.col) ** 2
        signal += b.amplitude * np.exp(-0.5 * d2 / (b.radius**2))
    return signal


def blob_mask(spec: FixtureSpec) -> np.ndarray:
    """Boolean disk union: pixels within one radius of any blob center."""
    rows = np.arange(spec.height, dtype=np.float64)[:, None]
    cols = np.arange(spec.width, dtype=np.float64)[None, :]
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    for b in spec.blobs:
        d2 = (rows - b.row) ** 2 + (cols - b.col) ** 2
        mask |= d2 <= b.radius**2
    return mask


def _make_log(model_id: str, accuracy: float, val_size: int, n_classes: int,
              rng: np.random.Generator) -> ValidationLog:
    n_correct = int(round(accuracy * val_size))
    correct = np.zeros(val_size, dtype=bool)
    correct[rng.permutation(val_size)[:n_correct]] = True
    records = []
    for i in range(val_size):
        true = i % n_classes
        pred = true if correct[i] else (true + 1) % n_classes
        records.append(ValidationRecord(f"sample_{i:04d}", pred, true))
    return ValidationLog(model_id=model_id, records=tuple(records))


def generate(spec: FixtureSpec) -> FixtureBundle:
    """Deterministically produce attributions, logs, and the truth mask."""
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    signal = clean_signal(spec)
    attributions: dict[str, np.ndarray] = {}
    logs: dict[str, ValidationLog] = {}
    for m in spec.models:
        sign = -1.0 if m.conflict_flip else 1.0
        noise = (
            rng.standard_normal(signal.shape) * spec.noise_sigma
            if spec.noise_sigma > 0
            else np.zeros_like(signal)
        )
        attributions[m.model_id] = sign * m.blob_fidelity * signal + noise
        logs[m.model_id] = _make_log(
            m.model_id, m.accuracy, spec.val_size, len(spec.class_names), rng
        )
    return FixtureBundle(
        attributions=attributions,
        logs=logs,
        blob_mask=blob_mask(spec),
        clean_signal=signal,
    )


def write_validation_log(log: ValidationLog, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "predicted_class", "true_class"])
        for r in log.records:
            writer.writerow([r.sample_id, r.predicted_class, r.true_class])


def write_fixture(spec: FixtureSpec, out_dir: str | os.PathLike) -> str:
    """Emit manifest-ready tensors and logs; returns the manifest path."""
    bundle = generate(spec)
    os.makedirs(out_dir, exist_ok=True)
    models = []
    for m in spec.models:
        attr_name = f"attr_{m.model_id}.npy"
        log_name = f"val_{m.model_id}.csv"
        eio.write_tensor(os.path.join(out_dir, attr_name), bundle.attributions[m.model_id])
        write_validation_log(bundle.logs[m.model_id], os.path.join(out_dir, log_name))
        models.append(
            {
                "model_id": m.model_id,
                "attribution_path": attr_name,
                "validation_log_path": log_name,
            }
        )
    eio.write_tensor(
        os.path.join(out_dir, "blob_mask.npy"), bundle.blob_mask.astype(np.float64)
    )
    manifest = {
        "models": models,
        "target_class": spec.target_class,
        "class_names": list(spec.class_names),
        "T": eio.DEFAULT_TEMPERATURE,
        "lambda": eio.DEFAULT_SENSITIVITY,
        "alpha0": [1.0] * len(spec.models),
        "seed": spec.seed,
        "channel_mode": "sum",
        "weight_mode": "counts",
        "score_scale": eio.DEFAULT_SCORE_SCALE,
        "output_dir": "run",
        "defaults_applied": [],
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    eio.save_json(manifest_path, manifest)
    return manifest_path


def spec_from_dict(raw: dict) -> FixtureSpec:
    """Parse the JSON form used by the fixture generation CLI."""
    if not isinstance(raw, dict):
        raise ValidationError("fixture spec must be a JSON object")
    known = {
        "height", "width", "blobs", "models", "noise_sigma", "seed",
        "val_size", "class_names", "target_class",
    }
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(f"fixture spec has unknown keys: {', '.join(unknown)}")
    try:
        blobs = tuple(
            BlobSpec(
                row=float(b["row"]),
                col=float(b["col"]),
                radius=float(b["radius"]),
                amplitude=float(b.get("amplitude", DEFAULT_BLOB_AMPLITUDE)),
            )
            for b in raw.get("blobs", [])
        )
        models = tuple(
            ModelSpec(
                model_id=str(m["model_id"]),
                accuracy=float(m["accuracy"]),
                blob_fidelity=float(m.get("blob_fidelity", 1.0)),
                conflict_flip=bool(m.get("conflict_flip", False)),
            )
            for m in raw.get("models", [])
        )
        spec = FixtureSpec(
            height=int(raw["height"]),
            width=int(raw["width"]),
            blobs=blobs,
            models=models,
            noise_sigma=float(raw.get("noise_sigma", DEFAULT_NOISE_SIGMA)),
            seed=int(raw.get("seed", 0)),
            val_size=int(raw.get("val_size", 100)),
            class_names=tuple(raw.get("class_names", ("negative", "positive"))),
            target_class=int(raw.get("target_class", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed fixture spec: {exc!r}") from exc
    spec.validate()
    return spec

"""File formats: NPY-subset tensors, run manifests, and stable JSON.

The tensor format is a strict subset of NPY version 1.0: little-endian
float32/float64, C order, 2-D or 3-D shapes. Everything else is rejected
with a precise diagnostic so that a bad input never silently degrades a
run. JSON artifacts are written with sorted keys so byte-level
reproducibility holds across runs.
"""

from __future__ import annotations

import ast
import json
import os
import re
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, ManifestError, ValidationError

NPY_MAGIC = b"\x93NUMPY"
_SUPPORTED_DESCR = {"<f4": np.float32, "<f8": np.float64}
_HEADER_ALIGN = 64

# Fixed layout of a run output directory.
WEIGHTS_JSON = "weights.json"
BEL_NPY = "bel.npy"
PL_NPY = "pl.npy"
UNC_NPY = "unc.npy"
CONFLICT_NPY = "conflict.npy"
STATS_JSON = "stats.json"
RESOLVED_MANIFEST_JSON = "resolved_manifest.json"
RENDER_DIR = "render"
FAILED_MARKER = "FAILED"

_MODEL_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

CHANNEL_MODES = ("sum", "mean", "l2")
WEIGHT_MODES = ("counts", "scores")

DEFAULT_TEMPERATURE = 5.0
DEFAULT_SENSITIVITY = 100.0
DEFAULT_SEED = 0
DEFAULT_SCORE_SCALE = 100


def mass_filename(model_id: str) -> str:
    return f"mass_{model_id}.npy"


@dataclass(frozen=True)
class TensorFile:
    """A parsed NPY-subset file: dtype name, shape, and payload array."""

    dtype: str
    shape: tuple[int, ...]
    data: np.ndarray


def _header_dict(descr: str, shape: tuple[int, ...]) -> bytes:
    header = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (
        descr,
        repr(tuple(int(s) for s in shape)),
    )
    base = len(NPY_MAGIC) + 2 + 2 + len(header) + 1
    pad = (-base) % _HEADER_ALIGN
    return (header + " " * pad + "\n").encode("latin1")


def write_tensor(path: str | os.PathLike, tensor: np.ndarray) -> None:
    """Write a 2-D or 3-D float tensor as a byte-stable NPY v1.0 file."""
    arr = np.asarray(tensor)
    if arr.dtype == np.float32:
        descr = "<f4"
    elif arr.dtype == np.float64:
        descr = "<f8"
    else:
        raise DataError(
            f"{path}: unsupported dtype {arr.dtype!r}; only float32/float64 tensors are written"
        )
    if arr.ndim not in (2, 3):
        raise DataError(f"{path}: tensors must be 2-D or 3-D, got {arr.ndim}-D")
    arr = np.ascontiguousarray(arr)
    header = _header_dict(descr, arr.shape)
    try:
        with open(path, "wb") as fh:
            fh.write(NPY_MAGIC)
            fh.write(bytes((1, 0)))
            fh.write(struct.pack("<H", len(header)))
            fh.write(header)
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise DataError(f"{path}: cannot write tensor ({exc})") from exc


def read_tensor(path: str | os.PathLike) -> TensorFile:
    """Parse an NPY v1.0-subset file, rejecting anything outside the subset."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: cannot read tensor ({exc})") from exc

    if len(raw) < 10 or raw[:6] != NPY_MAGIC:
        raise DataError(f"{path}: not an NPY file (bad magic)")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise DataError(f"{path}: unsupported NPY version {major}.{minor}; only 1.0 is accepted")
    (header_len,) = struct.unpack("<H", raw[8:10])
    header_end = 10 + header_len
    if len(raw) < header_end:
        raise DataError(f"{path}: truncated header")
    try:
        header = ast.literal_eval(raw[10:header_end].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise DataError(f"{path}: unparseable header ({exc})") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise DataError(f"{path}: malformed header keys {sorted(header)!r}")

    descr = header["descr"]
    if descr not in _SUPPORTED_DESCR:
        raise DataError(
            f"{path}: unsupported dtype descriptor {descr!r}; only little-endian '<f4'/'<f8' are accepted"
        )
    if header["fortran_order"]:
        raise DataError(f"{path}: fortran-order tensors are not accepted")
    shape = header["shape"]
    if (
        not isinstance(shape, tuple)
        or len(shape) not in (2, 3)
        or not all(isinstance(s, int) and s >= 0 for s in shape)
    ):
        raise DataError(f"{path}: shape must be a 2-D or 3-D tuple, got {shape!r}")

    dtype = np.dtype(_SUPPORTED_DESCR[descr])
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = raw[header_end:]
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload holds {len(payload)} bytes but header shape {shape} needs {expected}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return TensorFile(dtype=dtype.name, shape=tuple(shape), data=data)


def save_json(path: str | os.PathLike, payload: dict) -> None:
    """Serialize with sorted keys and a trailing newline for stable bytes."""
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load_json(path: str | os.PathLike) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


@dataclass(frozen=True)
class ModelEntry:
    model_id: str
    attribution_path: str
    validation_log_path: str | None = None
    score: float | None = None


@dataclass(frozen=True)
class RunManifest:
    """Resolved, validated description of one ensemble run."""

    models: tuple[ModelEntry, ...]
    target_class: int
    class_names: tuple[str, ...]
    temperature: float
    sensitivity: float
    alpha0: tuple[float, ...]
    seed: int
    channel_mode: str
    weight_mode: str
    score_scale: int
    output_dir: str | None
    defaults_applied: tuple[str, ...] = field(default_factory=tuple)

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(m.model_id for m in self.models)

    def to_dict(self) -> dict:
        return {
            "models": [
                {
                    k: v
                    for k, v in (
                        ("model_id", m.model_id),
                        ("attribution_path", m.attribution_path),
                        ("validation_log_path", m.validation_log_path),
                        ("score", m.score),
                    )
                    if v is not None
                }
                for m in self.models
            ],
            "target_class": self.target_class,
            "class_names": list(self.class_names),
            "T": self.temperature,
            "lambda": self.sensitivity,
            "alpha0": list(self.alpha0),
            "seed": self.seed,
            "channel_mode": self.channel_mode,
            "weight_mode": self.weight_mode,
            "score_scale": self.score_scale,
            "output_dir": self.output_dir,
            "defaults_applied": list(self.defaults_applied),
        }

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        temperature: float | None = None,
        sensitivity: float | None = None,
        output_dir: str | None = None,
    ) -> "RunManifest":
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed))
        if temperature is not None:
            if temperature <= 0:
                raise ValidationError("temperature override must be positive")
            out = replace(out, temperature=float(temperature))
        if sensitivity is not None:
            if sensitivity <= 0:
                raise ValidationError("sensitivity override must be positive")
            out = replace(out, sensitivity=float(sensitivity))
        if output_dir is not None:
            out = replace(out, output_dir=os.path.abspath(output_dir))
        return out


_TOP_KEYS = {
    "models",
    "target_class",
    "class_names",
    "T",
    "lambda",
    "alpha0",
    "seed",
    "channel_mode",
    "weight_mode",
    "score_scale",
    "output_dir",
    "defaults_applied",
}
_MODEL_KEYS = {"model_id", "attribution_path", "validation_log_path", "score"}


def load_manifest(path: str | os.PathLike, *, check_paths: bool = True) -> RunManifest:
    """Load, validate, and resolve a run manifest.

    All problems are collected and reported at once. Relative paths are
    resolved against the manifest's own directory; defaults applied during
    resolution are recorded in ``defaults_applied`` so the resolved form
    reloads to an identical structure.
    """
    raw = load_json(path)
    base = os.path.dirname(os.path.abspath(path))
    problems: list[str] = []

    if not isinstance(raw, dict):
        raise ManifestError(["manifest root must be a JSON object"])
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        problems.append(f"unknown keys: {', '.join(unknown)}")

    defaults_applied = list(raw.get("defaults_applied", []))
    if not isinstance(defaults_applied, list) or not all(
        isinstance(d, str) for d in defaults_applied
    ):
        problems.append("defaults_applied must be a list of strings")
        defaults_applied = []

    def default(key, value):
        if key not in raw:
            if key not in defaults_applied:
                defaults_applied.append(key)
            return value
        return raw[key]

    class_names = raw.get("class_names")
    if (
        not isinstance(class_names, list)
        or len(class_names) < 2
        or not all(isinstance(c, str) and c for c in class_names)
    ):
        problems.append("class_names must be a list of at least two non-empty strings")
        class_names = []
    elif len(set(class_names)) != len(class_names):
        dupes = sorted({c for c in class_names if class_names.count(c) > 1})
        problems.append(f"class_names contains duplicates: {', '.join(dupes)}")

    target_class = raw.get("target_class")
    if not isinstance(target_class, int) or isinstance(target_class, bool):
        problems.append("target_class must be an integer class index")
        target_class = 0
    elif class_names and not 0 <= target_class < len(class_names):
        problems.append(
            f"target_class {target_class} out of range for {len(class_names)} classes"
        )

    weight_mode = default("weight_mode", "counts")
    if weight_mode not in WEIGHT_MODES:
        problems.append(f"weight_mode must be one of {WEIGHT_MODES}, got {weight_mode!r}")
        weight_mode = "counts"

    channel_mode = default("channel_mode", "sum")
    if channel_mode not in CHANNEL_MODES:
        problems.append(f"channel_mode must be one of {CHANNEL_MODES}, got {channel_mode!r}")
        channel_mode = "sum"

    raw_models = raw.get("models")
    models: list[ModelEntry] = []
    if not isinstance(raw_models, list) or not raw_models:
        problems.append("models must be a non-empty list")
        raw_models = []
    seen_ids: set[str] = set()
    for i, entry in enumerate(raw_models):
        if not isinstance(entry, dict):
            problems.append(f"models[{i}] must be an object")
            continue
        bad = sorted(set(entry) - _MODEL_KEYS)
        if bad:
            problems.append(f"models[{i}]: unknown keys: {', '.join(bad)}")
        model_id = entry.get("model_id")
        if not isinstance(model_id, str) or not _MODEL_ID_RE.match(model_id or ""):
            problems.append(
                f"models[{i}]: model_id must match [A-Za-z0-9][A-Za-z0-9_.-]*, got {model_id!r}"
            )
            model_id = f"model_{i}"
        if model_id in seen_ids:
            problems.append(f"models[{i}]: duplicate model_id {model_id!r}")
        seen_ids.add(model_id)

        attribution_path = entry.get("attribution_path")
        if not isinstance(attribution_path, str) or not attribution_path:
            problems.append(f"models[{i}] ({model_id}): attribution_path is required")
            attribution_path = ""
        else:
            attribution_path = os.path.normpath(os.path.join(base, attribution_path))
            if check_paths and not os.path.isfile(attribution_path):
                problems.append(
                    f"models[{i}] ({model_id}): attribution file not found: {attribution_path}"
                )

        log_path = entry.get("validation_log_path")
        score = entry.get("score")
        if weight_mode == "counts":
            if score is not None:
                problems.append(
                    f"models[{i}] ({model_id}): score is not allowed in counts mode"
                )
            if not isinstance(log_path, str) or not log_path:
                problems.append(
                    f"models[{i}] ({model_id}): validation_log_path is required in counts mode"
                )
                log_path = None
            else:
                log_path = os.path.normpath(os.path.join(base, log_path))
                if check_paths and not os.path.isfile(log_path):
                    problems.append(
                        f"models[{i}] ({model_id}): validation log not found: {log_path}"
                    )
        else:
            if log_path is not None:
                problems.append(
                    f"models[{i}] ({model_id}): validation_log_path is not allowed in scores mode"
                )
                log_path = None
            if not isinstance(score, (int, float)) or isinstance(score, bool) or not 0 <= score <= 1:
                problems.append(
                    f"models[{i}] ({model_id}): score must be a number in [0, 1] in scores mode"
                )
                score = None
            else:
                score = float(score)

        models.append(
            ModelEntry(
                model_id=model_id,
                attribution_path=attribution_path,
                validation_log_path=log_path,
                score=score,
            )
        )

    temperature = default("T", DEFAULT_TEMPERATURE)
    if not isinstance(temperature, (int, float)) or isinstance(temperature, bool) or temperature <= 0:
        problems.append(f"T must be a positive number, got {temperature!r}")
        temperature = DEFAULT_TEMPERATURE

    sensitivity = default("lambda", DEFAULT_SENSITIVITY)
    if not isinstance(sensitivity, (int, float)) or isinstance(sensitivity, bool) or sensitivity <= 0:
        problems.append(f"lambda must be a positive number, got {sensitivity!r}")
        sensitivity = DEFAULT_SENSITIVITY

    alpha0 = default("alpha0", [1.0] * max(len(models), 1))
    if (
        not isinstance(alpha0, list)
        or (models and len(alpha0) != len(models))
        or not all(isinstance(a, (int, float)) and not isinstance(a, bool) and a > 0 for a in alpha0)
    ):
        problems.append("alpha0 must be a list of positive numbers, one per model")
        alpha0 = [1.0] * max(len(models), 1)

    seed = default("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool):
        problems.append(f"seed must be an integer, got {seed!r}")
        seed = DEFAULT_SEED

    score_scale = default("score_scale", DEFAULT_SCORE_SCALE)
    if not isinstance(score_scale, int) or isinstance(score_scale, bool) or score_scale <= 0:
        problems.append(f"score_scale must be a positive integer, got {score_scale!r}")
        score_scale = DEFAULT_SCORE_SCALE

    output_dir = raw.get("output_dir")
    if output_dir is not None:
        if not isinstance(output_dir, str) or not output_dir:
            problems.append("output_dir must be a non-empty string or omitted")
            output_dir = None
        else:
            output_dir = os.path.normpath(os.path.join(base, output_dir))

    if problems:
        raise ManifestError(problems)

    return RunManifest(
        models=tuple(models),
        target_class=target_class,
        class_names=tuple(class_names),
        temperature=float(temperature),
        sensitivity=float(sensitivity),
        alpha0=tuple(float(a) for a in alpha0),
        seed=seed,
        channel_mode=channel_mode,
        weight_mode=weight_mode,
        score_scale=score_scale,
        output_dir=output_dir,
        defaults_applied=tuple(defaults_applied),
    )

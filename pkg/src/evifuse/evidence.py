"""Attribution maps to basic probability assignments.

Signed per-pixel attribution scores are squashed through
``tanh(sensitivity * value)`` and routed by sign: positive evidence
commits mass to the target hypothesis, negative evidence to its
complement, and whatever the (weight-scaled) squash leaves unassigned
lands on the ignorance set. Pixels with no signal therefore yield full
ignorance instead of false confidence, and the three planes sum to one
by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, InvariantViolation, ValidationError
from .io import CHANNEL_MODES


@dataclass(frozen=True)
class AttributionMap:
    """Per-model signed attribution scores for one target class."""

    model_id: str
    target_class: int
    values: np.ndarray  # H x W float64, channel-reduced
    source_shape: tuple[int, ...]


@dataclass(frozen=True)
class MassMap:
    """Per-pixel mass planes for one evidence source.

    ``m_for + m_against + m_ignorance`` is one everywhere, and for masses
    built by the sign-routed squash at most one of the committed planes
    is nonzero per pixel.
    """

    model_id: str
    m_for: np.ndarray
    m_against: np.ndarray
    m_ignorance: np.ndarray
    sensitivity: float
    weight: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.m_for.shape


def channel_reduce(raw, mode: str = "sum") -> np.ndarray:
    """Collapse an H x W x C tensor to H x W (sum, mean, or l2 norm)."""
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] < 1:
        raise ValidationError(f"channel_reduce expects an H x W x C tensor, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("attribution tensor contains non-finite values")
    if mode == "sum":
        return arr.sum(axis=2)
    if mode == "mean":
        return arr.mean(axis=2)
    if mode == "l2":
        return np.sqrt((arr * arr).sum(axis=2))
    raise ValidationError(f"channel mode must be one of {CHANNEL_MODES}, got {mode!r}")


def attribution_from_tensor(
    model_id: str, target_class: int, raw, channel_mode: str = "sum"
) -> AttributionMap:
    """Build an AttributionMap from a raw 2-D or 3-D tensor."""
    arr = np.asarray(raw)
    if arr.ndim == 2:
        values = np.asarray(arr, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise DataError(f"{model_id}: attribution tensor contains non-finite values")
    elif arr.ndim == 3:
        values = channel_reduce(arr, channel_mode)
    else:
        raise DataError(f"{model_id}: attribution tensor must be 2-D or 3-D, got {arr.ndim}-D")
    return AttributionMap(
        model_id=model_id,
        target_class=int(target_class),
        values=values,
        source_shape=tuple(arr.shape),
    )


def attribution_to_mass(amap: AttributionMap, weight: float, sensitivity: float) -> MassMap:
    """Squash signed attributions into weighted mass planes."""
    if not (isinstance(weight, (int, float)) and 0.0 <= weight <= 1.0):
        raise ValidationError(f"model weight must lie in [0, 1], got {weight!r}")
    if not (isinstance(sensitivity, (int, float)) and math.isfinite(sensitivity) and sensitivity > 0):
        raise ValidationError(f"sensitivity must be a positive finite number, got {sensitivity!r}")
    values = amap.values
    if not np.all(np.isfinite(values)):
        raise DataError(f"{amap.model_id}: attribution values contain non-finite entries")

    # Squash in double precision; the sum-to-one tolerance depends on it.
    psi = np.tanh(float(sensitivity) * np.asarray(values, dtype=np.float64))
    m_for = float(weight) * np.maximum(0.0, psi)
    m_against = float(weight) * np.maximum(0.0, -psi)
    m_ignorance = 1.0 - (m_for + m_against)
    return MassMap(
        model_id=amap.model_id,
        m_for=m_for,
        m_against=m_against,
        m_ignorance=m_ignorance,
        sensitivity=float(sensitivity),
        weight=float(weight),
    )


def vacuous_mass(shape: tuple[int, int], model_id: str = "vacuous") -> MassMap:
    """All mass on the ignorance set: the identity element for fusion."""
    h, w = int(shape[0]), int(shape[1])
    if h <= 0 or w <= 0:
        raise ValidationError(f"mass map dimensions must be positive, got {(h, w)}")
    zeros = np.zeros((h, w), dtype=np.float64)
    return MassMap(
        model_id=model_id,
        m_for=zeros,
        m_against=zeros.copy(),
        m_ignorance=np.ones((h, w), dtype=np.float64),
        sensitivity=1.0,
        weight=0.0,
    )


def mass_to_tensor(mass: MassMap) -> np.ndarray:
    """Stack the three planes as (3, H, W): for, against, ignorance."""
    return np.stack([mass.m_for, mass.m_against, mass.m_ignorance], axis=0)


def mass_from_tensor(model_id: str, tensor, sensitivity: float, weight: float) -> MassMap:
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"{model_id}: mass tensor must have shape (3, H, W), got {arr.shape}")
    return MassMap(
        model_id=model_id,
        m_for=arr[0],
        m_against=arr[1],
        m_ignorance=arr[2],
        sensitivity=float(sensitivity),
        weight=float(weight),
    )


def validate_mass_map(mass: MassMap, *, sign_routed: bool = True, atol: float = 1e-12) -> None:
    """Raise InvariantViolation if the mass planes are not a valid assignment.

    ``sign_routed`` additionally requires min(m_for, m_against) == 0 and
    max committed mass bounded by the source weight; fused masses do not
    satisfy those and are checked with it disabled.
    """
    planes = (mass.m_for, mass.m_against, mass.m_ignorance)
    names = ("m_for", "m_against", "m_ignorance")
    for name, plane in zip(names, planes):
        if plane.shape != mass.m_for.shape:
            raise InvariantViolation(f"{mass.model_id}: {name} shape mismatch")
        if np.any(plane < -atol) or np.any(plane > 1 + atol):
            raise InvariantViolation(f"{mass.model_id}: {name} outside [0, 1]")
    total = mass.m_for + mass.m_against + mass.m_ignorance
    err = float(np.max(np.abs(total - 1.0)))
    if err > atol:
        raise InvariantViolation(
            f"{mass.model_id}: mass planes sum to 1 +/- {err:.3e}, beyond {atol:.0e}"
        )
    if sign_routed:
        if float(np.max(np.minimum(mass.m_for, mass.m_against))) > 0.0:
            raise InvariantViolation(
                f"{mass.model_id}: both committed planes are nonzero at some pixel"
            )
        committed_max = float(np.max(np.maximum(mass.m_for, mass.m_against), initial=0.0))
        if committed_max > mass.weight + atol:
            raise InvariantViolation(
                f"{mass.model_id}: committed mass {committed_max:.6f} exceeds weight {mass.weight:.6f}"
            )

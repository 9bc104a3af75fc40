"""Deterministic rendering of metric planes to binary PPM images.

Scale semantics: belief darkens toward green, plausibility toward blue,
uncertainty runs dark purple (low) to bright yellow (high), conflict
darkens toward red. The stop tables are fixed constants of this
artifact; only their qualitative direction is externally meaningful.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ValidationError

GREY = (128, 128, 128)  # NaN pixels


@dataclass(frozen=True)
class ColorScale:
    """Piecewise-linear RGB ramp over [0, 1]."""

    name: str
    stops: tuple[tuple[float, tuple[int, int, int]], ...]

    def __post_init__(self):
        positions = [p for p, _ in self.stops]
        if len(positions) < 2 or positions[0] != 0.0 or positions[-1] != 1.0:
            raise ValidationError(f"{self.name}: stops must start at 0.0 and end at 1.0")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValidationError(f"{self.name}: stop positions must be strictly ascending")


BELIEF_GREEN = ColorScale(
    "belief_green",
    ((0.0, (247, 252, 245)), (0.5, (116, 196, 118)), (1.0, (0, 68, 27))),
)
PLAUSIBILITY_BLUE = ColorScale(
    "plausibility_blue",
    ((0.0, (247, 251, 255)), (0.5, (107, 174, 214)), (1.0, (8, 48, 107))),
)
# Channels are individually nondecreasing so the quantized lightness ramp
# never dips.
UNCERTAINTY_VIRIDIS_LIKE = ColorScale(
    "uncertainty_viridis_like",
    ((0.0, (46, 0, 60)), (0.5, (150, 110, 60)), (1.0, (250, 240, 60))),
)
CONFLICT_RED = ColorScale(
    "conflict_red",
    ((0.0, (255, 245, 240)), (0.5, (251, 106, 74)), (1.0, (103, 0, 13))),
)

SCALES = {
    s.name: s
    for s in (BELIEF_GREEN, PLAUSIBILITY_BLUE, UNCERTAINTY_VIRIDIS_LIKE, CONFLICT_RED)
}


@dataclass(frozen=True)
class RenderedImage:
    pixels: np.ndarray  # H x W x 3 uint8
    clamped: int
    nan_pixels: int


def _interpolate(values: np.ndarray, scale: ColorScale) -> np.ndarray:
    positions = np.array([p for p, _ in scale.stops])
    channels = np.array([c for _, c in scale.stops], dtype=np.float64)
    flat = values.ravel()
    out = np.empty((flat.size, 3))
    for ch in range(3):
        out[:, ch] = np.interp(flat, positions, channels[:, ch])
    return out.reshape(values.shape + (3,))


def render_map(values, scale: ColorScale) -> RenderedImage:
    """Map a [0, 1] plane through the scale; NaN renders mid-grey."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"render expects a 2-D plane, got shape {arr.shape}")
    nan_mask = np.isnan(arr)
    nan_count = int(nan_mask.sum())
    finite = np.where(nan_mask, 0.0, arr)
    clamped = int(np.sum((finite < 0.0) | (finite > 1.0)))
    finite = np.clip(finite, 0.0, 1.0)
    rgb = _interpolate(finite, scale)
    if nan_count:
        rgb[nan_mask] = GREY
    pixels = np.rint(rgb).astype(np.uint8)
    return RenderedImage(pixels=pixels, clamped=clamped, nan_pixels=nan_count)


def render_overlay(values, scale: ColorScale, base, alpha: float = 0.5) -> RenderedImage:
    """Alpha-blend the rendered map over a base image in [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"blend factor must lie in [0, 1], got {alpha!r}")
    rendered = render_map(values, scale)
    b = np.asarray(base, dtype=np.float64)
    if b.ndim == 2:
        b = np.repeat(b[:, :, None], 3, axis=2)
    if b.ndim != 3 or b.shape[2] != 3:
        raise ValidationError(f"base image must be H x W or H x W x 3, got shape {b.shape}")
    if b.shape[:2] != rendered.pixels.shape[:2]:
        raise ValidationError(
            f"base image shape {b.shape[:2]} does not match map shape {rendered.pixels.shape[:2]}"
        )
    b = np.clip(b, 0.0, 1.0) * 255.0
    blended = alpha * rendered.pixels.astype(np.float64) + (1.0 - alpha) * b
    pixels = np.rint(blended).astype(np.uint8)
    return RenderedImage(pixels=pixels, clamped=rendered.clamped, nan_pixels=rendered.nan_pixels)


def write_image(image, path: str | os.PathLike) -> None:
    """Write a binary PPM (P6, maxval 255); byte-stable for fixed input."""
    pixels = image.pixels if isinstance(image, RenderedImage) else np.asarray(image)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ValidationError("PPM writer expects an H x W x 3 uint8 buffer")
    h, w = pixels.shape[:2]
    try:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(np.ascontiguousarray(pixels).tobytes())
    except OSError as exc:
        raise DataError(f"{path}: cannot write image ({exc})") from exc

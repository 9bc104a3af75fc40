"""Dempster's rule over the binary frame, with conflict tracking.

The working frame has three focal sets: the target hypothesis, its
complement, and the ignorance set. For two sources the only empty
intersections are the two cross terms, so the conflict for a pixel is
``a_for * b_against + a_against * b_for`` and the orthogonal sum
renormalizes the surviving products by ``1 - conflict``. Sources are
folded left to right in manifest order; although the rule is
associative and commutative in exact arithmetic, float results can
differ at the last bit, so the fold order is fixed for
bit-reproducibility. Total conflict (``1 - K`` below epsilon) yields a
vacuous pixel plus a flag instead of a division blow-up, so one bad
pixel never aborts an image.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .evidence import MassMap

EPSILON_CONFLICT = 1e-12

THREADS_ENV_VAR = "UBIQ_THREADS"
_MAX_AUTO_WORKERS = 8


def worker_count() -> int:
    """Resolve the worker cap from the environment (0 or unset = auto)."""
    raw = os.environ.get(THREADS_ENV_VAR, "0")
    try:
        requested = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from None
    if requested < 0:
        raise ValidationError(f"{THREADS_ENV_VAR} must be >= 0, got {requested}")
    if requested == 0:
        return min(_MAX_AUTO_WORKERS, os.cpu_count() or 1)
    return requested


@dataclass(frozen=True)
class PixelMass:
    """One pixel's mass triple (for, against, ignorance)."""

    m_for: float
    m_against: float
    m_ignorance: float


@dataclass
class ConflictMap:
    """Accumulated per-step conflict plus total-conflict flags."""

    k_total: np.ndarray
    steps: int
    saturated: np.ndarray  # bool plane: pixels that hit the total-conflict guard


@dataclass
class EpistemicMaps:
    """Fused belief, plausibility, and uncertainty planes."""

    bel: np.ndarray
    pl: np.ndarray
    unc: np.ndarray
    fused_mass: MassMap
    conflict: ConflictMap


def combine_pair(a: PixelMass, b: PixelMass) -> tuple[PixelMass, float]:
    """Orthogonal sum of two pixel masses; returns (fused mass, conflict).

    Under total conflict (``1 - K <= EPSILON_CONFLICT``) the vacuous mass
    is returned instead of dividing by ~0; callers flag such pixels.
    """
    k = a.m_for * b.m_against + a.m_against * b.m_for
    denom = 1.0 - k
    if denom <= EPSILON_CONFLICT:
        return PixelMass(0.0, 0.0, 1.0), k
    m_for = (a.m_for * b.m_for + a.m_for * b.m_ignorance + a.m_ignorance * b.m_for) / denom
    m_against = (
        a.m_against * b.m_against + a.m_against * b.m_ignorance + a.m_ignorance * b.m_against
    ) / denom
    m_ignorance = (a.m_ignorance * b.m_ignorance) / denom
    return PixelMass(m_for, m_against, m_ignorance), k


def _combine_planes(af, aa, ai, bf, ba, bi):
    """Vectorized orthogonal sum; same arithmetic as combine_pair."""
    k = af * ba + aa * bf
    saturated = (1.0 - k) <= EPSILON_CONFLICT
    denom = np.where(saturated, 1.0, 1.0 - k)
    f = (af * bf + af * bi + ai * bf) / denom
    a = (aa * ba + aa * bi + ai * ba) / denom
    i = (ai * bi) / denom
    if np.any(saturated):
        f = np.where(saturated, 0.0, f)
        a = np.where(saturated, 0.0, a)
        i = np.where(saturated, 1.0, i)
    return f, a, i, k, saturated


def _fold_block(stacks):
    """Left-fold the model axis of (M, rows, W) plane stacks."""
    for_s, against_s, ign_s = stacks
    f, a, i = for_s[0], against_s[0], ign_s[0]
    k_total = np.zeros_like(f)
    saturated = np.zeros(f.shape, dtype=bool)
    for j in range(1, for_s.shape[0]):
        f, a, i, k, sat = _combine_planes(f, a, i, for_s[j], against_s[j], ign_s[j])
        k_total += k
        saturated |= sat
    return f, a, i, k_total, saturated


def fuse_sequential(masses, *, workers: int | None = None) -> EpistemicMaps:
    """Fold mass maps in order and extract belief/plausibility/uncertainty.

    Pixels are independent, so the image may be split into row blocks
    across workers; each pixel's fold order is preserved, making the
    output identical for any partitioning.
    """
    masses = list(masses)
    if not masses:
        raise ValidationError("fusion needs at least one mass map")
    shape = masses[0].shape
    for m in masses[1:]:
        if m.shape != shape:
            raise ValidationError(
                f"mass map shapes differ: {masses[0].model_id} is {shape}, {m.model_id} is {m.shape}"
            )

    for_s = np.stack([m.m_for for m in masses])
    against_s = np.stack([m.m_against for m in masses])
    ign_s = np.stack([m.m_ignorance for m in masses])

    n_workers = worker_count() if workers is None else max(1, int(workers))
    height = shape[0]
    if n_workers > 1 and height >= 2 * n_workers:
        bounds = np.linspace(0, height, n_workers + 1, dtype=int)
        blocks = [
            (for_s[:, lo:hi], against_s[:, lo:hi], ign_s[:, lo:hi])
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(_fold_block, blocks))
        f = np.concatenate([p[0] for p in parts])
        a = np.concatenate([p[1] for p in parts])
        i = np.concatenate([p[2] for p in parts])
        k_total = np.concatenate([p[3] for p in parts])
        saturated = np.concatenate([p[4] for p in parts])
    else:
        f, a, i, k_total, saturated = _fold_block((for_s, against_s, ign_s))

    bel = f
    pl = 1.0 - a
    unc = pl - bel
    fused = MassMap(
        model_id="fused",
        m_for=f,
        m_against=a,
        m_ignorance=i,
        sensitivity=masses[0].sensitivity,
        weight=1.0,
    )
    conflict = ConflictMap(k_total=k_total, steps=len(masses) - 1, saturated=saturated)
    return EpistemicMaps(bel=bel, pl=pl, unc=unc, fused_mass=fused, conflict=conflict)


def duality_check(maps: EpistemicMaps) -> float:
    """Max pixel deviation from plausibility = 1 - belief(complement)."""
    return float(np.max(np.abs(maps.pl - (1.0 - maps.fused_mass.m_against))))

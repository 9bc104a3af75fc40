"""Shared oracles and strategies.

The Dempster oracle here enumerates the full power set of the binary
frame and never touches the engine's closed-form arithmetic, so the two
routes stay independent.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

# Focal sets of the binary frame as frozensets; the empty set carries no
# mass on input but appears in intersections.
THETA = frozenset({"target"})
NOT_THETA = frozenset({"rest"})
OMEGA = THETA | NOT_THETA
EMPTY = frozenset()

FOCAL_SETS = (THETA, NOT_THETA, OMEGA)


def oracle_mass(m_for: float, m_against: float, m_ignorance: float) -> dict:
    return {THETA: m_for, NOT_THETA: m_against, OMEGA: m_ignorance, EMPTY: 0.0}


def oracle_combine(m1: dict, m2: dict) -> tuple[dict, float]:
    """Brute-force orthogonal sum over all subset pairs of the frame."""
    conflict = 0.0
    combined = {s: 0.0 for s in (THETA, NOT_THETA, OMEGA, EMPTY)}
    for b, mb in m1.items():
        for c, mc in m2.items():
            inter = b & c
            if inter == EMPTY:
                conflict += mb * mc
            else:
                combined[inter] += mb * mc
    norm = 1.0 - conflict
    result = {s: v / norm for s, v in combined.items()}
    result[EMPTY] = 0.0
    return result, conflict


def oracle_bel_pl(mass: dict):
    """Belief and plausibility of the target singleton from first principles."""
    bel = sum(v for s, v in mass.items() if s and s <= THETA)
    pl = sum(v for s, v in mass.items() if s & THETA)
    return bel, pl


@st.composite
def pixel_mass_triples(draw, max_committed: float = 1.0):
    """Valid (for, against, ignorance) triples built on the simplex."""
    f = draw(st.floats(min_value=0.0, max_value=max_committed))
    a = draw(st.floats(min_value=0.0, max_value=max(0.0, max_committed - f)))
    return f, a, 1.0 - f - a


def random_mass_planes(rng: np.random.Generator, shape, weight: float):
    """Random sign-routed mass planes mimicking the attribution squash."""
    psi = rng.uniform(-1.0, 1.0, size=shape)
    m_for = weight * np.maximum(0.0, psi)
    m_against = weight * np.maximum(0.0, -psi)
    return m_for, m_against, 1.0 - (m_for + m_against)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20260809))

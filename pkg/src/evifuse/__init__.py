"""Evidential fusion of attribution maps into belief/plausibility/uncertainty maps."""

__version__ = "0.1.0"

from .analytics import DensityCurve, SummaryStats, SweepCurve, kde, sweep_sensitivity, sweep_temperature
from .errors import DataError, EngineError, InvariantViolation, ManifestError, ValidationError
from .evidence import AttributionMap, MassMap, attribution_to_mass, channel_reduce, vacuous_mass
from .fusion import EpistemicMaps, PixelMass, combine_pair, duality_check, fuse_sequential
from .io import RunManifest, TensorFile, load_manifest, read_tensor, write_tensor
from .reliability import (
    DirichletPosterior,
    ValidationLog,
    WeightVector,
    accumulate_counts,
    expected_weights,
    sample_weights,
    tempered_posterior,
)

__all__ = [
    "AttributionMap",
    "DataError",
    "DensityCurve",
    "DirichletPosterior",
    "EngineError",
    "EpistemicMaps",
    "InvariantViolation",
    "ManifestError",
    "MassMap",
    "PixelMass",
    "RunManifest",
    "SummaryStats",
    "SweepCurve",
    "TensorFile",
    "ValidationError",
    "ValidationLog",
    "WeightVector",
    "accumulate_counts",
    "attribution_to_mass",
    "channel_reduce",
    "combine_pair",
    "duality_check",
    "expected_weights",
    "fuse_sequential",
    "kde",
    "load_manifest",
    "read_tensor",
    "sample_weights",
    "sweep_sensitivity",
    "sweep_temperature",
    "tempered_posterior",
    "vacuous_mass",
    "write_tensor",
]

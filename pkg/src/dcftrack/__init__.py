"""Correlation-filter visual tracking: filters, features, trackers and
benchmark tooling."""

from .features import GrayImage
from .mcdcf import (
    CorrelationScores,
    FeatureSample,
    FilterModel,
    InvalidStateError,
)
from .trackers import (
    TRACKER_KINDS,
    BoundingBox,
    TargetState,
    TrackerConfig,
    default_config,
    init_tracker,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CorrelationScores",
    "FeatureSample",
    "FilterModel",
    "GrayImage",
    "InvalidStateError",
    "TargetState",
    "TrackerConfig",
    "TRACKER_KINDS",
    "default_config",
    "init_tracker",
    "__version__",
]

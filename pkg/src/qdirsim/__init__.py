"""Simulation of direction-private communication with two-photon images.

Two transmitters share a biphoton source whose image lives only in the
correlations between the photons.  A coincidence receiver reads the image;
any single-photon measurement sees an (almost) featureless angular
distribution and cannot locate the transmitters.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (  # noqa: E402
    AliasingError,
    ConditioningError,
    ConfigError,
    DomainError,
    InsufficientDataError,
    NonIdentifiableError,
    NullStateError,
    QdirsimError,
)
from .geometry import SystemGeometry, check_feasibility  # noqa: E402
from .state import BiphotonState, ImageSpec, TransverseGrid, make_difference_correlated_state  # noqa: E402
from .measurement import EventTable, MeasurementChannel, sample_events  # noqa: E402
from .scenario import Scenario, ScenarioConfig  # noqa: E402

__all__ = [
    "AliasingError",
    "BiphotonState",
    "ConditioningError",
    "ConfigError",
    "DomainError",
    "EventTable",
    "ImageSpec",
    "InsufficientDataError",
    "MeasurementChannel",
    "NonIdentifiableError",
    "NullStateError",
    "QdirsimError",
    "Scenario",
    "ScenarioConfig",
    "SystemGeometry",
    "TransverseGrid",
    "__version__",
    "check_feasibility",
    "make_difference_correlated_state",
    "sample_events",
]

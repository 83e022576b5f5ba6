"""torsiongeo: geometry with curvature and torsion, from triad fields to sliced propagators."""

from . import catalog
from .errors import TorsionGeoError
from .geometry import (
    Geometry,
    TensorValue,
    connection_bundle,
    covariant_derivative,
    curvature_bundle,
    induced_metric,
    reciprocal_triad,
)
from .triads import MetricField, TriadField, triad_grid_from_csv

__all__ = [
    "Geometry",
    "MetricField",
    "TensorValue",
    "TorsionGeoError",
    "TriadField",
    "catalog",
    "connection_bundle",
    "covariant_derivative",
    "curvature_bundle",
    "induced_metric",
    "reciprocal_triad",
    "triad_grid_from_csv",
]

__version__ = "0.1.0"

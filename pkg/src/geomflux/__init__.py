"""Adiabatic geometry and time-correlation numerics for parameterised Hermitian families."""
from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.1.0"

from ._backend import BACKEND
from .config import RunConfig, validate_config
from .errors import (
    DegenerateSpectrum,
    DimensionMismatch,
    EnergyBelowMinimum,
    GeomfluxError,
    LevelTrackingLost,
    NonHermitianInput,
    NotIntegrable,
    PathNotClosed,
    ReferenceOverlapVanishing,
    SamplingFailure,
    SchemaError,
    StepSizeTooLarge,
)
from .families import (
    AvoidedCrossingFamily,
    MatrixPolynomialFamily,
    SeededRandomPolynomialFamily,
    SpinFamily,
    evaluate,
    gradient,
)
from .geometry import (
    ParameterPath,
    berry_connection,
    cyclic_berry_phase,
    eigen_at,
    gauge_potentials,
    metric_and_geometric_tensor,
    open_path_phase,
    reference_state,
)
from .correlation import q_correlation, regularized_time_integral, susceptibility, theorem_check

"""Thin-film limits of the Ginzburg-Landau heat flow around closed plane curves."""

from .geometry import (
    Circle,
    Ellipse,
    FlatBand,
    FourierCurve,
    Harmonic,
    OutOfTubeError,
    ThicknessProfile,
    ThinDomain,
    fermi_map,
    jacobian,
    make_curve,
    validate,
)
from .discretization import SurfaceGrid, ThinGrid
from .stepping import GLParams, NumericalError, StabilityGuardError

__version__ = "0.1.0"

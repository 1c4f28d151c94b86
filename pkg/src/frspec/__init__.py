"""Spectral toolkit for density-stratified incompressible fluids in the
low-Froude regime on an anisotropic 3-torus."""

from .geometry import TorusGeometry, check_frequency
from .fields import (
    SpectralField4,
    PhysicalField4,
    zero_field,
    single_mode_field,
    to_physical,
    to_spectral,
    leray_project,
    convolve_quadratic,
    l2_norm,
    sobolev_norm,
)
from .waves import (
    eigenbasis,
    pa_symbol,
    apply_pa,
    apply_filter,
    decompose,
)

__version__ = "0.1.0"

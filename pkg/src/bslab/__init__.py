"""Numerical laboratory for backscattering of time-dependent wave potentials."""

from .core import (
    AmplitudeSample,
    DataCube,
    DirectionSet,
    Grid3,
    Mollifier,
    Potential,
    SeparableBump,
    Sinogram,
    SpaceTimeField,
    WedgeWindow,
    bump,
    cknorm_estimate,
    default_three_bump,
    linf_l2_norm,
    make_bump_potential,
    plane_frame,
    random_bump_potential,
)
from .solver import solve_free, solve_scattered, solve_scattered_plus, solve_source
from .born import born_cube, born_scattered
from .radon import data_norm, fbp_inverse, radon_forward
from .scattering import (
    backscatter_cube,
    m_component,
    measurement_window,
    scattering_amplitude,
    wave_profile_far_field,
    wave_profile_from_source,
)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeSample",
    "DataCube",
    "DirectionSet",
    "Grid3",
    "Mollifier",
    "Potential",
    "SeparableBump",
    "Sinogram",
    "SpaceTimeField",
    "WedgeWindow",
    "backscatter_cube",
    "born_cube",
    "born_scattered",
    "bump",
    "cknorm_estimate",
    "data_norm",
    "default_three_bump",
    "fbp_inverse",
    "linf_l2_norm",
    "m_component",
    "make_bump_potential",
    "measurement_window",
    "plane_frame",
    "radon_forward",
    "random_bump_potential",
    "scattering_amplitude",
    "solve_free",
    "solve_scattered",
    "solve_scattered_plus",
    "solve_source",
    "wave_profile_far_field",
    "wave_profile_from_source",
    "__version__",
]

"""Electron-spin-echo spectral diffusion of a donor in a dilute nuclear spin bath.

Submodules
----------
lattice    diamond-cubic host lattice and seeded isotope placement
couplings  hyperfine / dipolar couplings and thermal bath statistics
pairecho   pair-correlation Hahn echo and ensemble averaging
oracle     exact small-cluster echo by block diagonalization
fitting    stretched-exponential and saturation least-squares fits
cli        command line front end (``spindiff``)
"""

from .constants import CONSTANTS, PhysicalConstants
from .errors import (
    CapacityError,
    ConfigError,
    ConvergenceError,
    InvalidInputError,
    SingularGeometryError,
    SpindiffError,
)
from .lattice import (
    BathConfiguration,
    LatticeSite,
    LatticeSpec,
    build_supercell,
    populate_isotopes,
    set_orientation,
)
from .couplings import (
    CouplingTable,
    HyperfineParams,
    build_coupling_table,
    dipolar,
    hyperfine,
    thermal_polarization,
)
from .pairecho import DecayCurve, EnsembleSpec, echo_curve, ensemble_decay, pair_exponent
from .oracle import (
    ClusterProblem,
    EchoResult,
    build_conditional_hamiltonians,
    exact_echo_state,
    exact_echo_trace,
)
from .fitting import (
    DecayModel,
    DecayModelFit,
    SaturationFit,
    eval_decay_model,
    fit_decay,
    fit_saturation,
)

__version__ = "0.1.0"

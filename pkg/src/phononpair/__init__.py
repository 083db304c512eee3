"""Sideband photon correlations of laser-cooled mechanical oscillators.

Closed-form cooling and correlation theory, Monte Carlo click records,
diffusive heterodyne records, and the estimators that recover nonclassical
sideband statistics from either kind of data.
"""

from .params import (
    DerivedParams,
    SystemParams,
    TwoCavityParams,
    derive,
    desk_pair,
    desk_system,
    occupancy_regime,
    paper_system,
)
from .correlations import (
    A_BLUE,
    A_RED,
    B_BLUE,
    B_RED,
    SINGLE_BLUE,
    SINGLE_RED,
    DetectorTag,
    classical_crossover_tau,
    concurrence,
    g2_single_cross,
    g2_single_same,
    g2_two_cavity,
    heralded_concurrence,
    output_spectrum,
    sideband_cross_correlator,
    tau_validity_floor,
    violation_boundary,
    witness_Rm,
    witness_from_g2,
)
from .filter_cavities import (
    FilterChainParams,
    carrier_reflection,
    filter_chain,
    filter_functions,
)
from .jumps import (
    ClickRecord,
    TrajectoryResult,
    build_channels,
    build_single_channels,
    conditional_after_red,
    evolve,
    run_ensemble,
)
from .counting import (
    classical_tests,
    combine_as_detectors,
    estimate_g2,
    estimate_witness,
    first_blue_after_red,
    witness_crossing,
    witness_from_estimates,
)
from .heterodyne import (
    HeterodyneRecord,
    filter_sidebands,
    reconstruct_g2,
    synthesize_surrogate,
    unravel_qsd,
    unravel_qsd_single,
)
from .master_equation import evolve_fixed_step, steady_state, unconditional_system
from . import errors

__version__ = "0.1.0"

__all__ = [
    "A_BLUE",
    "A_RED",
    "B_BLUE",
    "B_RED",
    "SINGLE_BLUE",
    "SINGLE_RED",
    "ClickRecord",
    "DerivedParams",
    "DetectorTag",
    "FilterChainParams",
    "HeterodyneRecord",
    "SystemParams",
    "TrajectoryResult",
    "TwoCavityParams",
    "build_channels",
    "build_single_channels",
    "carrier_reflection",
    "classical_crossover_tau",
    "classical_tests",
    "combine_as_detectors",
    "concurrence",
    "conditional_after_red",
    "derive",
    "desk_pair",
    "desk_system",
    "errors",
    "estimate_g2",
    "estimate_witness",
    "evolve",
    "filter_chain",
    "filter_functions",
    "filter_sidebands",
    "first_blue_after_red",
    "g2_single_cross",
    "g2_single_same",
    "g2_two_cavity",
    "heralded_concurrence",
    "occupancy_regime",
    "output_spectrum",
    "paper_system",
    "reconstruct_g2",
    "run_ensemble",
    "sideband_cross_correlator",
    "evolve_fixed_step",
    "steady_state",
    "synthesize_surrogate",
    "tau_validity_floor",
    "unconditional_system",
    "unravel_qsd",
    "unravel_qsd_single",
    "violation_boundary",
    "witness_Rm",
    "witness_crossing",
    "witness_from_estimates",
    "witness_from_g2",
]

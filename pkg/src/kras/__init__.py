"""Dissipative state-feedback synthesis for linear systems with pointwise and distributed delays."""

from .config import ProblemSpec, benchmark_config, builtin_config, load_config, parse_config
from .eda import EdaDecomposition, IntervalBasis, build_basis
from .estimator import DissipativeStateFeedback
from .exceptions import *  # noqa: F401,F403
from .expr import parse
from .synth import (
    Certificate,
    ControllerGains,
    IterateParams,
    IterationLog,
    iterate,
    prepare,
    refine_fixed_K,
    refine_fixed_P,
    synth_convex,
)
from .system import DelaySystem, SupplyRate
from .verify import (
    check_dissipation,
    closed_loop,
    kf_value,
    l2_gain_estimate,
    simulate,
    spectral_abscissa,
)

__version__ = "0.1.0"

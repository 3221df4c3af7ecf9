"""Coalescence of ancestral lines when parents may live many generations back."""
from .distributions import (
    AgeDistribution,
    from_dict,
    make_dirac,
    make_explicit,
    make_power_law,
    mean,
    sample_age,
    sample_ages,
    to_dict,
    truncate,
    zeta,
)
from .errors import (
    IncompleteBoundaryError,
    InvalidParameterError,
    RegimeError,
    ResourceError,
    SeedbankError,
)
from .renewal import RenewalSequence, compute_renewal_sequence, cross_sum, sum_q_squared
from .ancestry import (
    exact_meeting_probability,
    pairwise_no_coalescence_curve,
    run_pair_tmrca,
    simulate_ancestral_partition,
    simulate_pair_tmrca,
)
from .urn import UrnState, stationary_pmf, step_urn, verify_stationarity_exact
from .forward import (
    assign_types,
    build_genealogy,
    compute_frequency_series,
    estimate_correlation_mc,
    exact_covariance,
    exact_variance,
    label_components,
    limiting_correlation,
    propagate_types_conditional,
)

__version__ = "0.1.0"

"""Delay statistics of an energy-harvesting sensor that retransmits within
a window: exact distributions, large-window limits, and a cross-checking
Monte Carlo simulator."""

__version__ = "0.1.0"

from .arrivals import (
    ArrivalGrid,
    ArrivalModel,
    Deterministic,
    Exponential,
    GammaArrival,
    GridDensity,
    Tabulated,
    big_g,
    eh_count_pmf,
    g_i_density,
    load_tabulated,
    mean_energy,
    stationary_excess_cdf,
    steady_state_pdf,
)
from .channel import outage_probability
from .delay import (
    AgeCycleSummary,
    Pmf,
    iota_seq,
    success_probability,
    summary,
    update_age_limit,
    update_age_mean,
    update_age_mean_det,
    update_age_mean_exp,
    update_age_mean_gen,
    update_age_pmf,
    update_age_pmf_det,
    update_age_pmf_exp,
    update_age_pmf_gen,
    update_cycle_limit,
    update_cycle_mean,
    update_cycle_mean_det,
    update_cycle_mean_exp,
    update_cycle_mean_gen,
    update_cycle_pmf,
    update_cycle_pmf_det,
    update_cycle_pmf_exp,
    update_cycle_pmf_gen,
    vartheta_seq,
    zeta_seq,
)
from .errors import (
    ConfigError,
    EmptySamplesError,
    GridOverflowError,
    NoProgressError,
    NonIntegerMultipleError,
    NonPositiveError,
)
from .params import (
    DirectChannel,
    ProtocolParams,
    RayleighChannel,
    ValidatedConfig,
    dbm_to_watts,
    default_config,
    energy_from_power_mw,
    load_config,
    validate,
    watts_to_dbm,
)
from .simulator import (
    CompareResult,
    SimResult,
    compare,
    empirical_pmf,
    replicate,
    simulate,
)

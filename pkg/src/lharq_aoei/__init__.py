"""Simulator and closed-form analytics for truncated layer-coded HARQ status
updating over shadowed-Rician satellite links."""

__version__ = "0.1.0"

from .analytics import (
    AoeiReport,
    DepartureAccumulator,
    IidErrorModel,
    arithmetic_geometric_sum,
    arithmetic_geometric_sum_direct,
    average_aoei,
    brute_force_aoei,
    circle_failure_product,
    empirical_aoei,
    empirical_aoei_from_arrays,
    expected_backtrack_depth,
    expected_depth_given_rounds,
    expected_interdeparture,
    expected_interdeparture_sq,
)
from .channel import (
    CodeParams,
    InterfererSpec,
    LinkBudget,
    SHADOWING_PRESETS,
    ShadowedRicianParams,
    adapt_rate,
    backtrack_error_prob,
    confluent_1f1,
    feedforward_error_prob,
    sample_channel_gain,
    shadowed_rician_pdf,
    sinr,
    sinr_bank,
    threshold_error_prob,
)
from .encoding import (
    Action,
    ActionKind,
    EncodingPolicy,
    PolicySimConfig,
    PolicyTrace,
    SenderState,
    decide_action,
    decoding_probability,
    packet_delivery_ratio,
    run_policy,
    select_packet,
    transmission_efficiency,
)
from .harness import (
    ExperimentSpec,
    SweepResult,
    SweepRow,
    default_spec,
    run_experiment,
    sweep_gamma_th,
    sweep_interference,
    sweep_k,
    sweep_policy,
    sweep_snr,
    write_manifest,
    write_rows_csv,
)
from .harq import (
    BernoulliErrorModel,
    ChannelErrorModel,
    CycleRecord,
    DepartureSequence,
    HarqConfig,
    MixedPacket,
    attempt_round,
    backtrack,
    mix_packet,
    run_circle,
    run_circles,
    run_departure_sequence,
    sample_departures,
)
from .sensitivity import (
    Regime,
    WeightContext,
    age_eps_sensitivity,
    aoei_partials,
    error_prob_from_weight,
    optimal_decay,
    regime_classify,
    sensitivity_grid,
    write_sensitivity_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]

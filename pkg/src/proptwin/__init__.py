"""Trace-driven radio propagation twin.

Learns a deterministic distance -> path-loss predictor and a stochastic
fast-fading distribution from wireless network traces, then reproduces total
propagation loss, received power, and saturated-UDP goodput inside a
deterministic, seedable link-level simulator.
"""

from .baselines import LogDistanceParams, default_log_distance, friis_loss, log_distance_loss
from .errors import FileFormatError, FitError, ValidationError
from .fading import (
    CdfTable,
    FadingFit,
    Residuals,
    extract_residuals,
    fit_all,
    fit_normal,
    fit_rayleigh,
    fit_rician,
    read_cdf_table,
    select_fading,
    to_cdf_table,
    write_cdf_table,
)
from .linksim import (
    DEFAULT_RATE_TABLE,
    LinkRow,
    LinkRun,
    RateTable,
    SimConfig,
    Trajectory,
    goodput_estimate,
    position_at,
    read_linkrun,
    read_trajectory,
    run,
    select_rate,
    write_linkrun,
    write_trajectory,
)
from .metrics import (
    BoxStats,
    PercentileCurve,
    ScenarioSplit,
    box_stats,
    make_split,
    percentile,
    percentile_curve,
    percentile_diff,
)
from .pathloss import (
    PathLossModel,
    TrainConfig,
    TreeNode,
    load_model,
    predict,
    predict_many,
    rmse,
    save_model,
    train,
)
from .propagation import LinkBudget, PropagationEngine, rx_power
from .randvar import RngStream, interpolate_table, make_stream, sample_fading, sample_fading_many
from .synth import SynthConfig, generate_records, true_loss
from .traces import (
    PathLossSample,
    RadioConfig,
    TraceRecord,
    distance,
    noise_floor,
    parse_raw,
    parse_simple,
    record_to_sample,
    records_to_samples,
    write_raw,
    write_simple,
)

__version__ = "0.1.0"

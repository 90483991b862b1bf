"""Conversational-memory token accounting and pause-triggered reset simulation."""

__version__ = "0.1.0"

from .impact import (
    EnergyModel,
    ImpactEstimate,
    PricingModel,
    estimate_co2e,
    estimate_cost,
    estimate_impact,
    load_energy_models,
    load_pricing,
)
from .ingest import LogRecord, ValidationReport, parse_log, sort_records, write_log
from .memory_model import (
    BufferWindow,
    FullHistory,
    IdleReset,
    ModelLimits,
    SummaryMemory,
    Turn,
    accumulate,
    parse_policy,
    policy_total,
)
from .report import pause_histogram, token_distribution
from .simulate import (
    DEFAULT_THRESHOLDS,
    AdjustedThread,
    SimulationResult,
    apply_reset,
    replay_oracle,
    sweep,
)
from .threads import (
    HelperMarker,
    Message,
    Thread,
    annotate,
    detect_helpers,
    filter_irregular,
    infer_title_delta,
    label_threads,
    reconstruct,
)
from .workload import Dist, GeneratorConfig, GroundTruth, generate, perturb, preset

"""Probabilistic geosteering sandbox.

A procedural fluvial earth-model generator with a low-dimensional latent
parameterization, a closed-form along-well electromagnetic logging model,
and two ways to condition the earth model to measurements: an iterative
ensemble smoother and adaptive-Metropolis MCMC.
"""

from .generator import (
    BACKGROUND,
    CHANNEL,
    CREVASSE,
    DEFAULT_CONFIG,
    GeneratorConfig,
    PriorSpec,
    generate,
    sample_prior,
)
from .petro import FACIES_RESISTIVITY, LayeredMedium, derive_resistivity, extract_layers
from .emlog import Channel, ToolSpec, default_tool, forward, load_tool_spec, simulate_log
from .enrml import (
    Anomalies,
    EnrmlConfig,
    EnrmlResult,
    ObservationModel,
    compute_anomalies,
    enrml_update,
    localize,
    run_enrml,
    truncate_svd,
)
from .mcmc import (
    ChainRun,
    GaussianTarget,
    McmcResult,
    ProposalState,
    accept_step,
    psrf,
    retained_count,
    run_chain,
    run_mcmc,
    warm_start,
)
from .harness import (
    DESK_ANCHOR,
    DESK_INFLATION,
    DESK_PROTOCOL,
    PAPER_SCALE_PROTOCOL,
    WELL_ROW,
    PosteriorSummary,
    TruthCase,
    ahead_ratio,
    build_noise_model,
    default_well,
    make_forward,
    make_truth,
    near_well_ratio,
    noise_blocks,
    noise_std,
    posterior_stats,
    simulate_well_log,
    warm_start_mcmc,
)

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "CHANNEL",
    "CREVASSE",
    "DEFAULT_CONFIG",
    "DESK_ANCHOR",
    "DESK_INFLATION",
    "DESK_PROTOCOL",
    "FACIES_RESISTIVITY",
    "PAPER_SCALE_PROTOCOL",
    "WELL_ROW",
    "Anomalies",
    "ChainRun",
    "Channel",
    "EnrmlConfig",
    "EnrmlResult",
    "GaussianTarget",
    "GeneratorConfig",
    "LayeredMedium",
    "McmcResult",
    "ObservationModel",
    "PosteriorSummary",
    "PriorSpec",
    "ProposalState",
    "ToolSpec",
    "TruthCase",
    "accept_step",
    "ahead_ratio",
    "build_noise_model",
    "compute_anomalies",
    "default_tool",
    "default_well",
    "derive_resistivity",
    "enrml_update",
    "extract_layers",
    "forward",
    "generate",
    "load_tool_spec",
    "localize",
    "make_forward",
    "make_truth",
    "near_well_ratio",
    "noise_blocks",
    "noise_std",
    "posterior_stats",
    "psrf",
    "retained_count",
    "run_chain",
    "run_enrml",
    "run_mcmc",
    "sample_prior",
    "simulate_log",
    "simulate_well_log",
    "truncate_svd",
    "warm_start",
    "warm_start_mcmc",
]

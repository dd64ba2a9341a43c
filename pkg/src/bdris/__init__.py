"""Wideband BD-RIS aided SISO-OFDM simulation and optimization toolkit."""

from .channel import (
    AdmittanceChannels,
    ChannelSet,
    FrequencyGrid,
    PathlossModel,
    TapChannels,
    build_channel_set,
    effective_channel_admittance,
    effective_channel_scattering,
    proposition1_oracle,
)
from .circuit import (
    FrequencyBand,
    LinearSusceptanceModel,
    VaractorCircuit,
    exact_susceptance,
    fit_linear_model,
    flat_model,
)
from .config import ArchitecturePoint, ConfigError, ScenarioConfig, load_config, validate_config
from .experiment import ResultRow, ResultTable, emit_results, plot_rate_vs_power, run_experiment
from .network import (
    FOREST,
    GROUP,
    AdmittanceMatrixSet,
    QuantizedSet,
    RisTopology,
    assemble_admittance_set,
    scattering_from_admittance,
)
from .optimize import (
    ContinuousSolverConfig,
    GreedyConfig,
    RunResult,
    SumGainProblem,
    average_rate,
    solve_continuous,
    solve_discrete_greedy,
    solve_frequency_independent,
    sum_gain,
    two_stage_pipeline,
    water_filling,
)

__version__ = "0.1.0"

__all__ = [
    "AdmittanceChannels",
    "AdmittanceMatrixSet",
    "ArchitecturePoint",
    "ChannelSet",
    "ConfigError",
    "ContinuousSolverConfig",
    "FOREST",
    "FrequencyBand",
    "FrequencyGrid",
    "GROUP",
    "GreedyConfig",
    "LinearSusceptanceModel",
    "PathlossModel",
    "QuantizedSet",
    "ResultRow",
    "ResultTable",
    "RisTopology",
    "RunResult",
    "ScenarioConfig",
    "SumGainProblem",
    "TapChannels",
    "VaractorCircuit",
    "assemble_admittance_set",
    "average_rate",
    "build_channel_set",
    "effective_channel_admittance",
    "effective_channel_scattering",
    "emit_results",
    "exact_susceptance",
    "fit_linear_model",
    "flat_model",
    "load_config",
    "plot_rate_vs_power",
    "proposition1_oracle",
    "run_experiment",
    "scattering_from_admittance",
    "solve_continuous",
    "solve_discrete_greedy",
    "solve_frequency_independent",
    "sum_gain",
    "two_stage_pipeline",
    "validate_config",
    "water_filling",
]

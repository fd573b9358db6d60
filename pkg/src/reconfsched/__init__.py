"""Power-capped resource management simulator for reconfigurable multicores.

The library models a multicore whose cores resize three pipeline sections on
the fly and share a way-partitionable LLC, plus the measurement, prediction,
and search machinery a per-quantum resource manager needs: paired profiling,
collaborative matrix reconstruction, surrogate fits, stochastic discrete
search, and several baseline managers for comparison sweeps.
"""

from .config_space import (
    ConfigSpace,
    CoreConfig,
    HeteroSpace,
    load_space,
    save_space,
    space_from_dict,
    space_hash,
)
from .reconstruct import ReconstructionResult, SgdParams, run_three_reconstructions
from .runtime import (
    MANAGER_KINDS,
    QuantumPlan,
    QuantumReport,
    RuntimeOptions,
    TraceResult,
    run_trace,
)
from .sampling import MeasureContext, Sample, measure, profile_pair, three_mm3_design
from .search import (
    Budget,
    ConstrainedObjective,
    DdsParams,
    GaParams,
    InfeasibleBudget,
    PredictionTables,
    SearchOutcome,
    brute_force,
    dds_search,
    ga_search,
    geomean,
    lc_config_select,
    power_repair,
)
from .surrogate import RbfModel, fit_rbf
from .workload import (
    AppProfile,
    Scenario,
    generate_scenario,
    generate_workload,
    ground_truth,
    load_profiles,
    load_scenario,
    save_profiles,
    save_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "AppProfile",
    "Budget",
    "ConfigSpace",
    "ConstrainedObjective",
    "CoreConfig",
    "DdsParams",
    "GaParams",
    "HeteroSpace",
    "InfeasibleBudget",
    "MANAGER_KINDS",
    "MeasureContext",
    "PredictionTables",
    "QuantumPlan",
    "QuantumReport",
    "RbfModel",
    "ReconstructionResult",
    "RuntimeOptions",
    "Sample",
    "Scenario",
    "SearchOutcome",
    "SgdParams",
    "TraceResult",
    "brute_force",
    "dds_search",
    "fit_rbf",
    "ga_search",
    "generate_scenario",
    "generate_workload",
    "geomean",
    "ground_truth",
    "lc_config_select",
    "load_profiles",
    "load_scenario",
    "load_space",
    "measure",
    "power_repair",
    "profile_pair",
    "run_three_reconstructions",
    "run_trace",
    "save_profiles",
    "save_scenario",
    "save_space",
    "space_from_dict",
    "space_hash",
    "three_mm3_design",
    "__version__",
]

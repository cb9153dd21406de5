"""SLA-aware probabilistic CNN model selection for cloud inference.

Public surface: profile storage and file formats, budget arithmetic, the
three-stage selector with baselines, the request-replay simulator, and the
mock inference gateway.
"""
from .budget import (
    BudgetRange,
    EstimationUnavailableError,
    NetworkEstimator,
    NetworkProfile,
    RequestContext,
    compute_budget,
    load_network_profile,
    should_downscale,
)
from .gateway import GatewayConfig, MockBackend, create_app
from .profiles import (
    DuplicateModelError,
    ModelProfile,
    ProfileFormatError,
    ProfileStore,
    UnknownModelError,
    dump_profiles,
    load_profiles,
    parse_profiles,
    save_profiles,
)
from .selector import (
    NoModelsError,
    SelectionDecision,
    SelectorConfig,
    fastest_select,
    greedy_select,
    select,
    stage1_base,
    stage2_explore,
    stage3_select,
)
from .simulator import (
    POLICIES,
    ConfigError,
    InsufficientPoliciesError,
    NetworkSpec,
    PolicyStats,
    SimulationConfig,
    SimulationReport,
    compare_policies,
    parse_network_spec,
    run_simulation,
    simulate_device_fallback,
)
from .version import __version__

__all__ = [
    "BudgetRange",
    "ConfigError",
    "DuplicateModelError",
    "EstimationUnavailableError",
    "GatewayConfig",
    "InsufficientPoliciesError",
    "MockBackend",
    "ModelProfile",
    "NetworkEstimator",
    "NetworkProfile",
    "NetworkSpec",
    "NoModelsError",
    "POLICIES",
    "PolicyStats",
    "ProfileFormatError",
    "ProfileStore",
    "RequestContext",
    "SelectionDecision",
    "SelectorConfig",
    "SimulationConfig",
    "SimulationReport",
    "UnknownModelError",
    "__version__",
    "compare_policies",
    "compute_budget",
    "create_app",
    "dump_profiles",
    "fastest_select",
    "greedy_select",
    "load_network_profile",
    "load_profiles",
    "parse_network_spec",
    "parse_profiles",
    "run_simulation",
    "save_profiles",
    "select",
    "should_downscale",
    "simulate_device_fallback",
    "stage1_base",
    "stage2_explore",
    "stage3_select",
]

"""Proxy-based causal discovery and dose-response estimation under hidden
confounding, for settings with multiple continuous treatments and multiple
outcomes.

The pipeline: simulate or ingest a dataset, test every treatment-outcome edge
with a proxy-conditioned chi-square statistic, select admissible (Z, W)
proxies from the discovered bipartite graph, fit kernel bridge functions by
penalized moment-restriction least squares, and average the kernel
doubly-robust integrand over a dose grid.
"""

from .benchmark import run_benchmark, write_report
from .bridge import (
    BridgeModel,
    KernelConfig,
    PropensityEstimate,
    default_regularizers,
    estimate_propensity,
    fit_outcome_bridge,
    fit_treatment_bridge,
    gram,
    median_trick,
    predict,
)
from .data import Dataset
from .discovery import (
    BipartiteGraph,
    ProxyAssignment,
    check_null_proxy,
    certify,
    discover_graph,
    graph_metrics,
    select_proxies,
    truth_graph,
)
from .discretize import BinnedColumn, BinningSpec, apply_edges, discretize
from .errors import ProxidoseError
from .estimator import (
    EffectCurve,
    bandwidth_rule,
    cmae,
    effect_curve,
    pdr_estimate,
    pkdr_estimate,
)
from .proxytest import (
    ProbabilityTables,
    TestResult,
    build_tables,
    chi_square_sf,
    estimate_covariance,
    projection_statistic,
    test_edge,
)
from .scm import (
    Arg,
    Node,
    Noise,
    ScmSpec,
    Term,
    builtin_scenario,
    ground_truth_curve,
    load_spec,
    sample,
    save_spec,
)

__version__ = "0.1.0"

__all__ = [
    "Arg",
    "BinnedColumn",
    "BinningSpec",
    "BipartiteGraph",
    "BridgeModel",
    "Dataset",
    "EffectCurve",
    "KernelConfig",
    "Node",
    "Noise",
    "ProbabilityTables",
    "ProxidoseError",
    "PropensityEstimate",
    "ProxyAssignment",
    "ScmSpec",
    "Term",
    "TestResult",
    "apply_edges",
    "bandwidth_rule",
    "build_tables",
    "builtin_scenario",
    "certify",
    "check_null_proxy",
    "chi_square_sf",
    "cmae",
    "default_regularizers",
    "discover_graph",
    "discretize",
    "effect_curve",
    "estimate_covariance",
    "estimate_propensity",
    "fit_outcome_bridge",
    "fit_treatment_bridge",
    "graph_metrics",
    "gram",
    "ground_truth_curve",
    "load_spec",
    "median_trick",
    "pdr_estimate",
    "pkdr_estimate",
    "predict",
    "projection_statistic",
    "run_benchmark",
    "sample",
    "save_spec",
    "select_proxies",
    "test_edge",
    "truth_graph",
    "write_report",
]

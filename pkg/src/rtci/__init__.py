"""Locality-weighted causal effect estimation for time series attached to the
nodes of a graph."""

from rtci._backend import BACKEND
from rtci.errors import (
    DimensionError,
    EstimationError,
    ParseError,
    SingularDesignError,
    TestUndefinedError,
    UnderdeterminedError,
)
from rtci.estimators import (
    FitResult,
    ItsSpec,
    ModelSpec,
    Variant,
    beta_deltas,
    fit,
    fit_its,
    fit_wls,
    its_effect,
    sliding_beta_series,
)
from rtci.graph import (
    Graph,
    LocalityWeights,
    load_edge_list,
    locality_weights,
    neighbor_sum,
    relational_mean,
    truncated_bfs,
)
from rtci.inference import HausmanResult, chi_square_sf, hausman_test
from rtci.panel import (
    LaggedDesign,
    Panel,
    build_design,
    difference_rank,
    load_panel_csv,
    minmax_scale,
    top_k_by_rank,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DimensionError", "EstimationError", "FitResult", "Graph",
    "HausmanResult", "ItsSpec", "LaggedDesign", "LocalityWeights", "ModelSpec",
    "Panel", "ParseError", "SingularDesignError", "TestUndefinedError",
    "UnderdeterminedError", "Variant", "beta_deltas", "build_design",
    "chi_square_sf", "difference_rank", "fit", "fit_its", "fit_wls",
    "hausman_test", "its_effect", "load_edge_list", "load_panel_csv",
    "locality_weights", "minmax_scale", "neighbor_sum", "relational_mean",
    "sliding_beta_series", "top_k_by_rank", "truncated_bfs",
]

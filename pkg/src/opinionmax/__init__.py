"""Opinion maximization under Friedkin-Johnsen dynamics.

Pick ``k`` nodes whose internal opinions, once set to 1, maximize the sum of
equilibrium expressed opinions.
"""

from .baselines import BaselineKind, baseline_scores, baseline_select
from .dynamics import (
    ConvergenceError,
    DenseSizeError,
    EquilibriumResult,
    OpinionEvaluator,
    OpinionModel,
    brute_force_topk,
    equilibrium_dense,
    equilibrium_iterative,
    fundamental_matrix,
    overall_opinion_after,
    structural_centrality_dense,
)
from .graph import Graph, GraphFormatError, load_edge_list, write_edge_list
from .harness import (
    ExperimentConfig,
    ResistanceSpec,
    build_model,
    gen_er_graph,
    gen_opinions,
    gen_resistance,
    ndcg_at_k,
    precision_at_k,
    run_experiment,
)
from .push import (
    GlobalPush,
    TargetedRefiner,
    global_inf_approx,
    max_influence_selector,
    partition_candidates,
    push_centrality,
    targeted_node_refine,
)
from .results import CentralityVector, SelectionResult, top_k
from .sampling import ForestParams, RwbParams, forest_estimate, forest_select, rwb_estimate, rwb_select

__version__ = "0.1.0"

__all__ = [
    "BaselineKind", "CentralityVector", "ConvergenceError", "DenseSizeError", "EquilibriumResult",
    "ExperimentConfig", "ForestParams", "GlobalPush", "Graph", "GraphFormatError", "OpinionEvaluator",
    "OpinionModel", "ResistanceSpec", "RwbParams", "SelectionResult", "TargetedRefiner",
    "baseline_scores", "baseline_select", "brute_force_topk", "build_model", "equilibrium_dense",
    "equilibrium_iterative", "forest_estimate", "forest_select", "fundamental_matrix", "gen_er_graph",
    "gen_opinions", "gen_resistance", "global_inf_approx", "load_edge_list", "max_influence_selector",
    "ndcg_at_k", "overall_opinion_after", "partition_candidates", "precision_at_k", "push_centrality",
    "rwb_estimate", "rwb_select", "run_experiment", "structural_centrality_dense",
    "targeted_node_refine", "top_k", "write_edge_list",
]

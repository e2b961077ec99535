"""Sparse group factor analysis for joint biclustering of multi-view data.

Fits a Bayesian factor model with spike-and-slab sparsity on both factors
and loadings by Gibbs sampling, supports collections paired in two modes,
extracts biclusters from posterior samples, matches components across
chains, and predicts missing cells.
"""

__version__ = "0.1.0"

from .biclusters import (
    Bicluster,
    BiclusterSet,
    EffectiveKReport,
    MatchedGroup,
    MatchedMember,
    RobustComponentReport,
    component_stability,
    extract_biclusters,
    match_chains,
    report_effective_K,
)
from .evaluate import (
    GridResult,
    RegressionMetrics,
    cv_splits,
    f1_cells,
    regression_metrics,
    run_experiment_grid,
)
from .model import (
    CollectionLayout,
    ConfigurationError,
    DataCollection,
    GfabicError,
    HyperParams,
    InvariantError,
    ModelState,
    ModelVariant,
    NumericalError,
    ViewData,
    check_state,
    init_state,
    log_joint,
)
from .sampler import (
    ChainConfig,
    DataDims,
    PosteriorStore,
    ancestral_sample,
    draw_data,
    gibbs_sweep,
    predict_missing,
    run_chain,
)
from .simulate import (
    GroundTruth,
    SimulationSpec,
    generate,
    generate_two_mode_blocks,
)
from .storage import load_store, save_store
from .updates import (
    update_alpha,
    update_factors,
    update_loadings,
    update_pi,
    update_tau,
)

__all__ = [
    "Bicluster",
    "BiclusterSet",
    "ChainConfig",
    "CollectionLayout",
    "ConfigurationError",
    "DataCollection",
    "DataDims",
    "EffectiveKReport",
    "GfabicError",
    "GridResult",
    "GroundTruth",
    "HyperParams",
    "InvariantError",
    "MatchedGroup",
    "MatchedMember",
    "ModelState",
    "ModelVariant",
    "NumericalError",
    "PosteriorStore",
    "RegressionMetrics",
    "RobustComponentReport",
    "SimulationSpec",
    "ViewData",
    "ancestral_sample",
    "check_state",
    "component_stability",
    "cv_splits",
    "draw_data",
    "extract_biclusters",
    "f1_cells",
    "generate",
    "generate_two_mode_blocks",
    "gibbs_sweep",
    "init_state",
    "load_store",
    "log_joint",
    "match_chains",
    "predict_missing",
    "regression_metrics",
    "report_effective_K",
    "run_chain",
    "run_experiment_grid",
    "save_store",
    "update_alpha",
    "update_factors",
    "update_loadings",
    "update_pi",
    "update_tau",
]

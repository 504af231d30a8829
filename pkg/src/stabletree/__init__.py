"""stabletree: distill a black-box classifier into a stable decision tree."""

__version__ = "0.1.0"

from .builder import BuildConfig, build_tree, enumerate_candidates, select_split
from .core import (
    ColumnSpec,
    Dataset,
    Internal,
    Leaf,
    NodeDiagnostics,
    Region,
    Schema,
    SoftLabeledSample,
    SplitRule,
    Tree,
    predict,
    predict_batch,
    refine,
    route,
    tree_from_dict,
    tree_from_json,
    tree_to_dict,
    tree_to_dot,
    tree_to_json,
)
from .evaluation import (
    MimicReport,
    StabilityReport,
    mimic_accuracy,
    predictive_accuracy,
    stability_experiment,
    structure_key,
)
from .oracle import (
    BuiltinForest,
    ConstantOracle,
    ExternalProcessOracle,
    ForestConfig,
    FunctionOracle,
    fit_forest,
    load_forest,
    save_forest,
)
from .sampler import (
    NodeContext,
    PseudoSample,
    SamplerConfig,
    draw_covariates,
    draw_labeled,
    make_stream,
    silverman_bandwidth,
)
from .splitstat import (
    GiniSummary,
    SplitComparisonStats,
    TestOutcome,
    aggregate_pvalue,
    better_split_pvalue,
    compare_splits,
    gini_gain_distribution,
    prune_candidates,
    required_sample_size,
    split_gini_index,
)
from .synth import class1_probability, logit_value, sample_synthetic, synthetic_schema

__all__ = [name for name in dir() if not name.startswith("_")]

"""Optimal survival trees: proportional-hazards trees fitted by restarted
coordinate-descent search, plus evaluation metrics and a ground-truth
simulation study."""

from .survival_core import *  # noqa: F401,F403
from .tree_model import (  # noqa: F401
    ModelError,
    Split,
    SplitRule,
    SurvivalTree,
    TreeNode,
    build_tree,
    deserialize,
    fit_leaf_coefficient,
    node_error,
    null_tree,
    objective,
    serialize,
    to_dot,
    tree_error,
)
from .search import (  # noqa: F401
    SearchTrace,
    TrainParams,
    best_split,
    calibrate_alpha,
    cross_validate,
    greedy_grow,
    local_search,
    random_start_tree,
    train,
)
from .metrics import (  # noqa: F401
    MetricReport,
    RiskAssignment,
    brier_point,
    cox_score,
    evaluate,
    harrell_c,
    integrated_brier,
    uno_c,
)
from . import kernels  # noqa: F401

__version__ = "0.1.0"

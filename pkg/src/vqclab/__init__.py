"""Variational quantum classifier workbench with hyperparameter importance analysis."""

from .circuits import (
    CircuitTemplate,
    EntanglingMap,
    assemble_circuit,
    build_encoding_block,
    build_entangling_map,
    realize_circuit,
)
from .data import Dataset, FoldSplit, load_dataset, make_folds, preprocess
from .fanova import aggregate_importance, tree_marginal, variance_decomposition
from .forest import Forest, assess_quality, fit_forest, fit_tree, predict
from .space import (
    Configuration,
    ConfigurationSpace,
    HyperparameterDef,
    RunRow,
    RunTable,
    default_space,
    from_feature_vector,
    sample_configuration,
    to_feature_vector,
)
from .statevector import (
    GateSpec,
    ObservableSpec,
    StateVector,
    apply_diagonal_phase,
    apply_gate,
    expectation_z_product,
    init_state,
)
from .training import (
    ModelParameters,
    TrainingRecord,
    adam_update,
    circuit_gradient,
    forward,
    loss,
    train_fold,
)
from .verification import aggregate_y_star, fixed_search, rank_curves, run_verification

__version__ = "0.1.0"

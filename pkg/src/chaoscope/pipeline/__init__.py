"""Datasets, evaluation and experiment runners."""
from .dataset import (
    DatasetError,
    DatasetSpec,
    LabeledDataset,
    ReferenceCache,
    build_dataset,
    concat,
    default_cache,
    k_values,
    load_dataset,
    save_dataset,
)
from .evaluation import EvalReport, evaluate
from .experiments import (
    EXPERIMENTS,
    TEST_SPEC,
    TRAIN_SPEC,
    logistic_dataset,
    lorenz_dataset,
    run_classifier_compare,
    run_experiment,
    run_k_generalization,
    run_logistic_cross,
    run_lorenz_cross,
    run_lyapunov_baseline,
    run_nk_sweep,
    train_model,
)

__all__ = [
    "DatasetError", "DatasetSpec", "LabeledDataset", "ReferenceCache", "build_dataset", "concat",
    "default_cache", "k_values", "load_dataset", "save_dataset", "EvalReport", "evaluate",
    "EXPERIMENTS", "TEST_SPEC", "TRAIN_SPEC", "logistic_dataset", "lorenz_dataset",
    "run_classifier_compare", "run_experiment", "run_k_generalization", "run_logistic_cross",
    "run_lorenz_cross", "run_lyapunov_baseline", "run_nk_sweep", "train_model",
]

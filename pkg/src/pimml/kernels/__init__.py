"""Host-orchestrated training kernels for the simulated PIM machine."""

from .common import (
    BLOCK_ROWS,
    MODE_FIXED,
    MODE_REAL,
    Hyperparams,
    PackedDataset,
    load_dataset,
)
from .dtree import dtree_train
from .gd import linreg_train, logreg_train
from .kmeans import initial_centroids, kmeans_train
from .models import (
    CentroidModel,
    LinearModel,
    ModelState,
    TreeModel,
    accuracy,
    inertia,
    metrics,
    model_from_text,
    model_to_text,
    mse,
    predict,
    predict_proba,
)

__all__ = [
    "BLOCK_ROWS",
    "MODE_FIXED",
    "MODE_REAL",
    "Hyperparams",
    "PackedDataset",
    "load_dataset",
    "linreg_train",
    "logreg_train",
    "kmeans_train",
    "initial_centroids",
    "dtree_train",
    "CentroidModel",
    "LinearModel",
    "ModelState",
    "TreeModel",
    "predict",
    "predict_proba",
    "metrics",
    "mse",
    "accuracy",
    "inertia",
    "model_to_text",
    "model_from_text",
]

"""Trained model states, prediction, metrics, and flat-text serialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..fixedpoint import QFormat
from ..layout import Dataset
from .common import bin_indices, distances_sq, stable_sigmoid

MODEL_MAGIC = "pimml-model v1"


@dataclass
class LinearModel:
    weights: np.ndarray  # float64, length d
    kind: str  # "linreg" | "logreg"
    raw: Optional[np.ndarray] = None  # fixed-mode raws, if trained in fixed mode
    fmt: Optional[QFormat] = None


@dataclass
class CentroidModel:
    centroids: np.ndarray  # (k, d) float64
    raw: Optional[np.ndarray] = None
    fmt: Optional[QFormat] = None


@dataclass
class TreeModel:
    """Binary classification tree; routing compares histogram bin indices."""

    feature: list[int] = field(default_factory=list)  # -1 for leaves
    cut_bin: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    leaf_class: list[int] = field(default_factory=list)  # -1 for internal nodes
    bin_lo: np.ndarray = None  # per-feature bin origin (global min)
    bin_width: np.ndarray = None  # per-feature bin width; 0 for constant features
    n_bins: int = 32
    n_classes: int = 2

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def bin_matrix(self, x: np.ndarray) -> np.ndarray:
        """Per-feature uniform bin index of every value, clipped to range."""
        return bin_indices(x, self.bin_lo, self.bin_width, self.n_bins)

    def route(self, x: np.ndarray) -> np.ndarray:
        """Leaf node id for every row."""
        bins = self.bin_matrix(x)
        node = np.zeros(x.shape[0], dtype=np.int64)
        feat = np.array(self.feature, dtype=np.int64)
        cut = np.array(self.cut_bin, dtype=np.int64)
        left = np.array(self.left, dtype=np.int64)
        right = np.array(self.right, dtype=np.int64)
        while True:
            nf = feat[node]
            internal = nf >= 0
            if not internal.any():
                return node
            row_bin = bins[np.arange(x.shape[0]), np.where(internal, nf, 0)]
            child = np.where(row_bin < cut[node], left[node], right[node])
            node = np.where(internal, child, node)

    def structure(self) -> list[tuple]:
        """Comparable structural summary (for tree-equality tests).

        Leaf thresholds are stored as nan, which never compares equal, so
        leaves report None instead.
        """
        return [
            (self.feature[i], self.cut_bin[i],
             self.threshold[i] if self.feature[i] >= 0 else None,
             self.left[i], self.right[i], self.leaf_class[i])
            for i in range(self.n_nodes)
        ]


ModelState = Union[LinearModel, CentroidModel, TreeModel]


def predict(model: ModelState, ds: Dataset) -> np.ndarray:
    """Model outputs per row: values, class labels, or cluster assignments."""
    x = ds.features
    if isinstance(model, LinearModel):
        if x.shape[1] != model.weights.shape[0]:
            raise ValueError(
                f"model expects {model.weights.shape[0]} features, dataset has {x.shape[1]}"
            )
        z = x @ model.weights
        if model.kind == "logreg":
            return (stable_sigmoid(z) >= 0.5).astype(np.int64)
        return z
    if isinstance(model, CentroidModel):
        if x.shape[1] != model.centroids.shape[1]:
            raise ValueError("centroid dimensionality mismatch")
        return np.argmin(distances_sq(x, model.centroids), axis=1)
    if isinstance(model, TreeModel):
        if x.shape[1] != len(model.bin_lo):
            raise ValueError("tree feature-count mismatch")
        leaves = model.route(x)
        return np.array([model.leaf_class[i] for i in leaves], dtype=np.int64)
    raise TypeError(f"unknown model type {type(model).__name__}")


def predict_proba(model: LinearModel, ds: Dataset) -> np.ndarray:
    return stable_sigmoid(ds.features @ model.weights)


def mse(predictions: np.ndarray, labels: np.ndarray) -> float:
    if predictions.shape != labels.shape:
        raise ValueError("prediction/label shape mismatch")
    diff = predictions - labels
    return float(diff @ diff / len(diff)) if len(diff) else 0.0


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    if predictions.shape != labels.shape:
        raise ValueError("prediction/label shape mismatch")
    if not len(labels):
        return 0.0
    return float(np.mean(predictions == labels.astype(np.int64)))


def inertia(ds: Dataset, centroids: np.ndarray) -> float:
    """Sum of squared distances to the nearest centroid, in double precision."""
    return float(math.fsum(distances_sq(ds.features, centroids).min(axis=1)))


def metrics(model: ModelState, ds: Dataset) -> dict[str, float]:
    preds = predict(model, ds)
    if isinstance(model, LinearModel) and model.kind == "linreg":
        return {"mse": mse(preds, ds.labels)}
    if isinstance(model, LinearModel):
        return {"accuracy": accuracy(preds, ds.labels)}
    if isinstance(model, CentroidModel):
        return {"inertia": inertia(ds, model.centroids)}
    return {"accuracy": accuracy(preds, ds.labels)}


# ---------------------------------------------------------------------------
# Flat text serialization: one weight / centroid row / tree node per line.
# ---------------------------------------------------------------------------


def model_to_text(model: ModelState) -> str:
    lines = []
    if isinstance(model, LinearModel):
        lines.append(f"{MODEL_MAGIC} {model.kind}")
        for i, w in enumerate(model.weights):
            lines.append(f"w {i} {float(w)!r}")
    elif isinstance(model, CentroidModel):
        lines.append(f"{MODEL_MAGIC} kmeans")
        for i, row in enumerate(model.centroids):
            lines.append("c " + str(i) + " " + " ".join(repr(float(v)) for v in row))
    elif isinstance(model, TreeModel):
        lines.append(f"{MODEL_MAGIC} dtree")
        lines.append(f"meta {model.n_bins} {model.n_classes}")
        lines.append("binlo " + " ".join(repr(float(v)) for v in model.bin_lo))
        lines.append("binw " + " ".join(repr(float(v)) for v in model.bin_width))
        for i in range(model.n_nodes):
            lines.append(
                f"node {i} {model.feature[i]} {model.cut_bin[i]} {model.threshold[i]!r} "
                f"{model.left[i]} {model.right[i]} {model.leaf_class[i]}"
            )
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")
    return "\n".join(lines) + "\n"


def model_from_text(text: str) -> ModelState:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if " ".join(head[:2]) != MODEL_MAGIC:
        raise ValueError(f"bad model header {lines[0]!r}")
    kind = head[2]
    if kind in ("linreg", "logreg"):
        ws = [float(ln.split()[2]) for ln in lines[1:]]
        return LinearModel(np.array(ws), kind)
    if kind == "kmeans":
        rows = [[float(v) for v in ln.split()[2:]] for ln in lines[1:]]
        return CentroidModel(np.array(rows))
    if kind == "dtree":
        _, n_bins, n_classes = lines[1].split()
        bin_lo = np.array([float(v) for v in lines[2].split()[1:]])
        bin_width = np.array([float(v) for v in lines[3].split()[1:]])
        model = TreeModel(bin_lo=bin_lo, bin_width=bin_width,
                          n_bins=int(n_bins), n_classes=int(n_classes))
        for ln in lines[4:]:
            parts = ln.split()
            model.feature.append(int(parts[2]))
            model.cut_bin.append(int(parts[3]))
            model.threshold.append(float(parts[4]))
            model.left.append(int(parts[5]))
            model.right.append(int(parts[6]))
            model.leaf_class.append(int(parts[7]))
        return model
    raise ValueError(f"unknown model kind {kind!r}")

"""Boosted regression trees over a single feature: distance -> mean path loss.

The learner is deliberately self-contained and deterministic. Each boosting
round fits one depth-limited regression tree to the current residuals with an
exhaustive best-split search:

* split candidates are the midpoints between consecutive distinct sorted
  distances of the samples reaching a node;
* the split objective is the reduction in the sum of squared residuals;
* a sample with distance <= threshold routes left;
* ties between equally good candidates resolve to the smallest threshold.

Because trees are piecewise constant, predictions are exactly flat outside the
training distance range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError, ValidationError

MODEL_HEADER = "mlplmodel v1"


@dataclass(frozen=True)
class TreeNode:
    """Regression tree node: a leaf when ``value`` is set, else a split on distance."""

    value: float | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @staticmethod
    def leaf(value: float) -> "TreeNode":
        return TreeNode(value=float(value))

    @staticmethod
    def split(threshold: float, left: "TreeNode", right: "TreeNode") -> "TreeNode":
        return TreeNode(threshold=float(threshold), left=left, right=right)

    @property
    def is_leaf(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 5

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.learning_rate <= 1:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")


@dataclass(frozen=True)
class PathLossModel:
    base_score: float  # dB
    trees: tuple[TreeNode, ...]
    learning_rate: float
    train_range: tuple[float, float]  # metres

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.train_range[0] > self.train_range[1]:
            raise ValueError(f"invalid train range {self.train_range}")


def evaluate_tree(node: TreeNode, d: float) -> float:
    while not node.is_leaf:
        node = node.left if d <= node.threshold else node.right
    return node.value


def evaluate_tree_many(node: TreeNode, d: np.ndarray) -> np.ndarray:
    out = np.empty(len(d), dtype=float)
    stack = [(node, np.arange(len(d)))]
    while stack:
        current, idx = stack.pop()
        if len(idx) == 0:
            continue
        if current.is_leaf:
            out[idx] = current.value
        else:
            goes_left = d[idx] <= current.threshold
            stack.append((current.left, idx[goes_left]))
            stack.append((current.right, idx[~goes_left]))
    return out


def _best_split(seg_d: np.ndarray, seg_r: np.ndarray, min_leaf: int):
    """Best candidate split of a sorted segment, or None when no split helps.

    Returns (position, threshold) where the left child takes indices [0..position].
    """
    n = len(seg_d)
    c1 = np.cumsum(seg_r)
    c2 = np.cumsum(seg_r * seg_r)
    total1 = c1[-1]
    total2 = c2[-1]
    parent_sse = total2 - total1 * total1 / n

    pos = np.arange(n - 1)
    n_left = pos + 1
    n_right = n - n_left
    valid = (seg_d[:-1] < seg_d[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None

    sse_left = c2[:-1] - c1[:-1] * c1[:-1] / n_left
    sse_right = (total2 - c2[:-1]) - (total1 - c1[:-1]) * (total1 - c1[:-1]) / n_right
    child_sse = np.where(valid, sse_left + sse_right, np.inf)
    k = int(np.argmin(child_sse))  # first minimum -> smallest threshold on ties
    if not child_sse[k] < parent_sse:
        return None
    return k, 0.5 * (seg_d[k] + seg_d[k + 1])


def _build_tree(dist: np.ndarray, resid: np.ndarray, lo: int, hi: int,
                depth: int, cfg: TrainConfig) -> TreeNode:
    if depth >= cfg.max_depth or hi - lo < 2 * cfg.min_samples_leaf:
        return TreeNode.leaf(resid[lo:hi].mean())
    found = _best_split(dist[lo:hi], resid[lo:hi], cfg.min_samples_leaf)
    if found is None:
        return TreeNode.leaf(resid[lo:hi].mean())
    k, threshold = found
    mid = lo + k + 1
    return TreeNode.split(
        threshold,
        _build_tree(dist, resid, lo, mid, depth + 1, cfg),
        _build_tree(dist, resid, mid, hi, depth + 1, cfg),
    )


def train(samples, cfg: TrainConfig = TrainConfig()) -> PathLossModel:
    """Fit a boosted-tree model to (distance, path loss) samples.

    The base score is the mean path loss; every round adds one tree fitted to
    the current residuals, scaled by the learning rate. With fewer than two
    distinct distances no split candidate exists and the model degrades to the
    constant mean, which is the documented behaviour rather than an error.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot train on an empty sample set")
    d = np.array([s.distance for s in samples], dtype=float)
    y = np.array([s.path_loss for s in samples], dtype=float)
    order = np.argsort(d, kind="stable")
    d = d[order]
    y = y[order]

    base_score = float(y.mean())
    pred = np.full(len(d), base_score)
    trees = []
    for _ in range(cfg.n_trees):
        resid = y - pred
        root = _build_tree(d, resid, 0, len(d), 0, cfg)
        pred = pred + cfg.learning_rate * evaluate_tree_many(root, d)
        trees.append(root)
    return PathLossModel(
        base_score=base_score,
        trees=tuple(trees),
        learning_rate=cfg.learning_rate,
        train_range=(float(d[0]), float(d[-1])),
    )


def predict(model: PathLossModel, d: float) -> float:
    """Predicted mean path loss (dB) at distance ``d`` metres."""
    if not d > 0:
        raise ValueError(f"distance must be > 0 m, got {d}")
    total = 0.0
    for tree in model.trees:
        total += evaluate_tree(tree, d)
    return model.base_score + model.learning_rate * total


def predict_many(model: PathLossModel, distances) -> np.ndarray:
    d = np.asarray(distances, dtype=float)
    if d.size and not d.min() > 0:
        raise ValueError("all distances must be > 0 m")
    total = np.zeros(len(d))
    for tree in model.trees:
        total += evaluate_tree_many(tree, d)
    return model.base_score + model.learning_rate * total


def rmse(model: PathLossModel, samples) -> float:
    """Root-mean-square prediction error against a sample set, dB."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot score an empty sample set")
    pred = predict_many(model, [s.distance for s in samples])
    err = pred - np.array([s.path_loss for s in samples])
    return float(np.sqrt(np.mean(err * err)))


def _write_node(node: TreeNode, lines: list):
    if node.is_leaf:
        lines.append(f"leaf {node.value!r}")
    else:
        lines.append(f"split {node.threshold!r}")
        _write_node(node.left, lines)
        _write_node(node.right, lines)


def save_model(model: PathLossModel, path):
    """Write the model in its line-oriented text format (see MODEL_HEADER).

    Floats are written in shortest round-trip form, so a load reproduces the
    model bit for bit.
    """
    lines = [
        MODEL_HEADER,
        f"base {model.base_score!r}",
        f"lr {model.learning_rate!r}",
        f"range {model.train_range[0]!r} {model.train_range[1]!r}",
    ]
    for tree in model.trees:
        _write_node(tree, lines)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_float(token: str, path, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise FileFormatError(f"not a number: {token!r}", path=path, line=line) from None


def load_model(path) -> PathLossModel:
    """Load a model file; raises FileFormatError on version or structure problems."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [(i, text.strip()) for i, text in enumerate(fh, start=1) if text.strip()]
    if not lines or lines[0][1] != MODEL_HEADER:
        raise FileFormatError(f"missing or unsupported header, expected {MODEL_HEADER!r}", path=path)

    def field(index: int, key: str, n_values: int) -> list:
        if index >= len(lines):
            raise FileFormatError(f"missing {key!r} line", path=path)
        lineno, text = lines[index]
        parts = text.split()
        if parts[0] != key or len(parts) != 1 + n_values:
            raise FileFormatError(f"expected {key!r} line, got {text!r}", path=path, line=lineno)
        return [_parse_float(p, path, lineno) for p in parts[1:]]

    (base,) = field(1, "base", 1)
    (lr,) = field(2, "lr", 1)
    lo, hi = field(3, "range", 2)

    pos = 4

    def parse_node() -> TreeNode:
        nonlocal pos
        if pos >= len(lines):
            raise FileFormatError("truncated file: unterminated tree", path=path)
        lineno, text = lines[pos]
        pos += 1
        parts = text.split()
        if parts[0] == "leaf" and len(parts) == 2:
            return TreeNode.leaf(_parse_float(parts[1], path, lineno))
        if parts[0] == "split" and len(parts) == 2:
            threshold = _parse_float(parts[1], path, lineno)
            left = parse_node()
            right = parse_node()
            return TreeNode.split(threshold, left, right)
        raise FileFormatError(f"expected 'split' or 'leaf' line, got {text!r}", path=path, line=lineno)

    trees = []
    while pos < len(lines):
        trees.append(parse_node())

    try:
        model = PathLossModel(base, tuple(trees), lr, (lo, hi))
    except ValueError as exc:
        raise ValidationError(str(exc), path=path) from None
    if not math.isfinite(base):
        raise ValidationError(f"base score must be finite, got {base}", path=path)
    return model

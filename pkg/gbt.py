"""
Gradient-Boosted Trees
Histogram-based, leaf-wise regression trees fitted to logistic-loss gradients,
with split finding that only touches the non-zero entries of sparse columns
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.special import expit

from errors import ConfigError, NonFiniteFeatureError, SingleClassError, TrainingDataError
from logger_config import LoggerSetup

logger = LoggerSetup.get_logger(__name__)

MAX_STEP_HALVINGS = 20


@dataclass(frozen=True)
class GBTParams:
    """Boosting hyperparameters"""

    n_trees: int = 100
    learning_rate: float = 0.1
    max_leaves: int = 8
    min_samples_leaf: int = 5
    n_bins: int = 64
    l2_lambda: float = 1.0
    min_split_gain: float = 0.0
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ConfigError("n_trees must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate must be in (0, 1]")
        if self.max_leaves < 2:
            raise ConfigError("max_leaves must be >= 2")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if not 2 <= self.n_bins <= 256:
            raise ConfigError("n_bins must be between 2 and 256")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be >= 0")
        if not 0 < self.subsample <= 1:
            raise ConfigError("subsample must be in (0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_trees": self.n_trees,
            "learning_rate": self.learning_rate,
            "max_leaves": self.max_leaves,
            "min_samples_leaf": self.min_samples_leaf,
            "n_bins": self.n_bins,
            "l2_lambda": self.l2_lambda,
            "min_split_gain": self.min_split_gain,
            "subsample": self.subsample,
            "seed": self.seed,
        }


def as_csc(X) -> sparse.csc_matrix:
    X = sparse.csc_matrix(X, dtype=np.float64)
    X.eliminate_zeros()
    return X


def check_training_data(X, y: np.ndarray) -> Tuple[sparse.csc_matrix, np.ndarray]:
    """Shared input checks: matching rows, both classes present, finite values"""
    y = np.asarray(y, dtype=np.int64).ravel()
    X = as_csc(X)
    if X.shape[0] != y.size:
        raise TrainingDataError(f"X has {X.shape[0]} rows but y has {y.size} labels")
    if not np.all(np.isin(y, (0, 1))):
        raise TrainingDataError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise SingleClassError("training labels contain a single class")
    if not np.all(np.isfinite(X.data)):
        raise NonFiniteFeatureError("feature matrix contains NaN or infinite values")
    return X, y


class BinMapper:
    """Per-feature bin edges: midpoints of distinct values, or quantiles when too many"""

    def __init__(self, n_bins: int = 64):
        self.n_bins = n_bins
        self.edges: List[np.ndarray] = []
        self.zero_bin: np.ndarray = np.zeros(0, dtype=np.int64)

    def fit(self, X: sparse.csc_matrix) -> "BinMapper":
        n_rows = X.shape[0]
        self.edges = []
        zero_bins = []
        for j in range(X.shape[1]):
            values = X.data[X.indptr[j]:X.indptr[j + 1]]
            if values.size < n_rows:
                values = np.concatenate((values, [0.0]))
            distinct = np.unique(values)
            if distinct.size <= self.n_bins:
                edges = (distinct[:-1] + distinct[1:]) / 2.0
            else:
                column = X[:, j].toarray().ravel()
                quantiles = np.quantile(column, np.linspace(0, 1, self.n_bins + 1)[1:-1])
                edges = np.unique(quantiles)
            self.edges.append(edges)
            zero_bins.append(int(np.searchsorted(edges, 0.0, side="right")))
        self.zero_bin = np.asarray(zero_bins, dtype=np.int64)
        return self

    def transform(self, X: sparse.csc_matrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rows, features, bins) of the non-zero entries"""
        rows = X.indices.astype(np.int64)
        features = np.repeat(np.arange(X.shape[1], dtype=np.int64), np.diff(X.indptr))
        bins = np.empty(X.nnz, dtype=np.int64)
        for j, edges in enumerate(self.edges):
            start, stop = X.indptr[j], X.indptr[j + 1]
            bins[start:stop] = np.searchsorted(edges, X.data[start:stop], side="right")
        return rows, features, bins


@dataclass
class Tree:
    """Regression tree in array form; feature -1 marks a leaf, left iff x < threshold"""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, columns: Dict[int, np.ndarray], n_rows: int) -> np.ndarray:
        node = np.zeros(n_rows, dtype=np.int64)
        while True:
            feature = self.feature[node]
            internal = feature >= 0
            if not internal.any():
                return self.value[node]
            for f in np.unique(feature[internal]).tolist():
                rows = np.nonzero(feature == f)[0]
                go_left = columns[f][rows] < self.threshold[node[rows]]
                node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def scaled(self, factor: float) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right, self.value * factor)

    def to_dict(self) -> Dict[str, List]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, List]) -> "Tree":
        return cls(
            feature=np.asarray(payload["feature"], dtype=np.int64),
            threshold=np.asarray(payload["threshold"], dtype=np.float64),
            left=np.asarray(payload["left"], dtype=np.int64),
            right=np.asarray(payload["right"], dtype=np.int64),
            value=np.asarray(payload["value"], dtype=np.float64),
        )


@dataclass
class GBTModel:
    """Boosted ensemble: margin = base_score + sum of tree outputs"""

    trees: List[Tree]
    base_score: float
    params: GBTParams
    n_features: int
    train_loss: List[float] = field(default_factory=list)

    @property
    def learning_rate(self) -> float:
        return self.params.learning_rate

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def used_features(self) -> np.ndarray:
        used = [tree.feature[tree.feature >= 0] for tree in self.trees]
        return np.unique(np.concatenate(used)) if used else np.zeros(0, dtype=np.int64)

    def decision_function(self, X) -> np.ndarray:
        X = sparse.csc_matrix(X, dtype=np.float64)
        n_rows = X.shape[0]
        columns = {}
        for f in self.used_features().tolist():
            columns[f] = X[:, f].toarray().ravel() if f < X.shape[1] else np.zeros(n_rows)
        margin = np.full(n_rows, self.base_score, dtype=np.float64)
        for tree in self.trees:
            margin += tree.apply(columns, n_rows)
        return margin

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def __repr__(self) -> str:
        return f"GBTModel(trees={self.n_trees}, n_features={self.n_features})"


def logistic_loss(margin: np.ndarray, y: np.ndarray, weight: np.ndarray) -> float:
    """Weighted mean logistic loss"""
    losses = np.logaddexp(0.0, margin) - y * margin
    return float(np.sum(weight * losses) / np.sum(weight))


class _TreeGrower:
    """Grows one tree leaf-wise from gradient/hessian histograms"""

    def __init__(self, X, entries, zero_bin, gradients, hessians, params: GBTParams):
        self.X = X
        self.rows, self.features, self.bins = entries
        self.zero_bin = zero_bin
        self.n_features = X.shape[1]
        self.g = gradients
        self.h = hessians
        self.params = params
        self.mask = np.zeros(gradients.size, dtype=bool)

    def best_split(self, samples: np.ndarray) -> Optional[Tuple[float, int, int]]:
        p = self.params
        self.mask[:] = False
        self.mask[samples] = True
        in_node = self.mask[self.rows]
        rows = self.rows[in_node]
        features = self.features[in_node]
        bins = self.bins[in_node]

        nnz = np.bincount(features, minlength=self.n_features)
        active = np.nonzero(nnz >= p.min_samples_leaf)[0]
        if active.size == 0:
            return None
        compact = np.full(self.n_features, -1, dtype=np.int64)
        compact[active] = np.arange(active.size)
        keep = compact[features] >= 0
        slot = compact[features[keep]] * p.n_bins + bins[keep]
        kept_rows = rows[keep]
        size = active.size * p.n_bins
        shape = (active.size, p.n_bins)
        hist_g = np.bincount(slot, weights=self.g[kept_rows], minlength=size).reshape(shape)
        hist_h = np.bincount(slot, weights=self.h[kept_rows], minlength=size).reshape(shape)
        hist_c = np.bincount(slot, minlength=size).reshape(shape).astype(np.float64)

        G, H, C = self.g[samples].sum(), self.h[samples].sum(), float(samples.size)
        lines = np.arange(active.size)
        zero_bins = self.zero_bin[active]
        hist_g[lines, zero_bins] += G - hist_g.sum(axis=1)
        hist_h[lines, zero_bins] += H - hist_h.sum(axis=1)
        hist_c[lines, zero_bins] += C - hist_c.sum(axis=1)

        gl = np.cumsum(hist_g, axis=1)[:, :-1]
        hl = np.cumsum(hist_h, axis=1)[:, :-1]
        cl = np.cumsum(hist_c, axis=1)[:, :-1]
        gr, hr, cr = G - gl, H - hl, C - cl
        lam = p.l2_lambda
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = gl**2 / (hl + lam) + gr**2 / (hr + lam) - G**2 / (H + lam)
        valid = (cl >= p.min_samples_leaf) & (cr >= p.min_samples_leaf) & np.isfinite(gain)
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))
        best_gain = float(gain.flat[best])
        # tolerance keeps exactly-zero gains (symmetric data) splittable
        if not np.isfinite(best_gain) or best_gain < p.min_split_gain - 1e-12:
            return None
        line, split_bin = divmod(best, p.n_bins - 1)
        return best_gain, int(active[line]), split_bin

    def leaf_value(self, samples: np.ndarray) -> float:
        G, H = self.g[samples].sum(), self.h[samples].sum()
        denominator = H + self.params.l2_lambda
        if denominator <= 0:
            return 0.0
        return float(-self.params.learning_rate * G / denominator)

    def grow(self, samples: np.ndarray, edges: List[np.ndarray]) -> Tree:
        feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
        members = {0: samples}
        split = {0: self.best_split(samples)}
        n_leaves = 1
        while n_leaves < self.params.max_leaves:
            candidates = [(s[0], node) for node, s in split.items() if s is not None]
            if not candidates:
                break
            # highest gain first, earliest leaf on ties
            _, node = max(candidates, key=lambda item: (item[0], -item[1]))
            _, f, split_bin = split.pop(node)
            cut = float(edges[f][split_bin])
            node_samples = members.pop(node)
            go_left = self.X[:, f].toarray().ravel()[node_samples] < cut
            children = []
            for part in (node_samples[go_left], node_samples[~go_left]):
                child = len(feature)
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
                members[child] = part
                split[child] = self.best_split(part)
                children.append(child)
            feature[node], threshold[node] = f, cut
            left[node], right[node] = children
            n_leaves += 1
        for node, node_samples in members.items():
            value[node] = self.leaf_value(node_samples)
        return Tree(
            feature=np.asarray(feature, dtype=np.int64),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int64),
            right=np.asarray(right, dtype=np.int64),
            value=np.asarray(value, dtype=np.float64),
        )


def gbt_train(X, y, params: Optional[GBTParams] = None, sample_weight: Optional[np.ndarray] = None) -> GBTModel:
    """
    Fit boosted trees to the weighted logistic loss

    Parameters:
    -----------
    X : sparse or dense matrix (N, d)
    y : array of {0, 1}
    params : GBTParams, optional
    sample_weight : array, optional
        Per-row weights (class weighting is applied by the caller)

    Returns:
    --------
    GBTModel whose ``train_loss`` holds the loss before and after every stage
    """
    params = params or GBTParams()
    X, y = check_training_data(X, y)
    n_rows, n_features = X.shape
    weight = np.ones(n_rows) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)

    prior = float(np.clip(np.sum(weight * y) / np.sum(weight), 1e-6, 1 - 1e-6))
    base_score = float(np.log(prior / (1 - prior)))
    margin = np.full(n_rows, base_score)
    losses = [logistic_loss(margin, y, weight)]

    mapper = BinMapper(params.n_bins).fit(X)
    entries = mapper.transform(X)
    rng = np.random.default_rng(params.seed)

    trees: List[Tree] = []
    for stage in range(params.n_trees):
        p = expit(margin)
        gradients = weight * (p - y)
        hessians = weight * p * (1 - p)
        if params.subsample < 1.0:
            size = max(2 * params.min_samples_leaf, int(round(params.subsample * n_rows)))
            samples = np.sort(rng.choice(n_rows, size=min(size, n_rows), replace=False))
        else:
            samples = np.arange(n_rows)
        grower = _TreeGrower(X, entries, mapper.zero_bin, gradients, hessians, params)
        tree = grower.grow(samples, mapper.edges)

        columns = {
            f: X[:, f].toarray().ravel() for f in np.unique(tree.feature[tree.feature >= 0]).tolist()
        }
        step = tree.apply(columns, n_rows)
        # halve the stage until the training loss does not increase
        scale = 1.0
        for _ in range(MAX_STEP_HALVINGS):
            candidate = logistic_loss(margin + scale * step, y, weight)
            if candidate <= losses[-1]:
                break
            scale /= 2.0
        else:
            scale = 0.0
            candidate = losses[-1]
        if scale != 1.0:
            tree = tree.scaled(scale)
        margin = margin + scale * step
        trees.append(tree)
        losses.append(candidate)
        logger.debug(f"stage {stage}: {tree.n_leaves} leaves, loss {candidate:.6f}")

    return GBTModel(trees=trees, base_score=base_score, params=params, n_features=n_features, train_loss=losses)

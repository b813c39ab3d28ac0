"""
Classifiers
Logistic regression (L2 or L1), the single-attribute threshold baseline, the
no-information Bernoulli baseline, shared prediction and model files
"""

import json
from dataclasses import dataclass, field
from functools import singledispatch
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.special import expit

from errors import ConfigError, DatasetParseError, NonFiniteFeatureError, TrainingDataError
from gbt import GBTModel, GBTParams, Tree, as_csc, check_training_data, gbt_train
from logger_config import LoggerSetup
from settings import TOOL_VERSION

logger = LoggerSetup.get_logger(__name__)

MODEL_FORMAT = "cascade-veracity-model"
MODEL_FORMAT_VERSION = 1
PENALTIES = ("l2", "l1")
NOINFO_GRID = np.round(np.arange(0, 101) / 100.0, 2)

ClassWeights = Union[None, str, Dict[int, float]]


def class_weight_vector(y: np.ndarray, class_weights: ClassWeights = None) -> np.ndarray:
    """
    Per-sample weights from a class-weight setting

    Parameters:
    -----------
    y : array of {0, 1}
    class_weights : None, "balanced" or {label: weight}
        "balanced" weights each class by N / (2 * class count)
    """
    y = np.asarray(y, dtype=np.int64)
    if class_weights is None or class_weights == "none":
        return np.ones(y.size)
    if class_weights == "balanced":
        counts = np.bincount(y, minlength=2).astype(np.float64)
        per_class = np.where(counts > 0, y.size / (2.0 * np.maximum(counts, 1)), 0.0)
        return per_class[y]
    if isinstance(class_weights, dict):
        return np.asarray([float(class_weights.get(int(label), 1.0)) for label in y])
    raise ConfigError(f"unknown class_weights setting {class_weights!r}")


def align_columns(X, n_features: int) -> sparse.csr_matrix:
    """Pad with zero columns or drop columns beyond the model's dimension"""
    X = sparse.csr_matrix(X, dtype=np.float64)
    if X.shape[1] == n_features:
        return X
    if X.shape[1] > n_features:
        return X[:, :n_features]
    return sparse.hstack([X, sparse.csr_matrix((X.shape[0], n_features - X.shape[1]))], format="csr")


# Linear model


@dataclass
class LinearModel:
    """Logistic regression over (possibly sparse) features"""

    weights: np.ndarray
    bias: float
    l2_lambda: float
    penalty: str = "l2"
    class_weights: ClassWeights = None
    train_loss: float = float("nan")
    n_iter: int = 0
    converged: bool = False

    @property
    def n_features(self) -> int:
        return int(self.weights.size)

    def decision_function(self, X) -> np.ndarray:
        X = align_columns(X, self.n_features)
        return np.asarray(X @ self.weights).ravel() + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def __repr__(self) -> str:
        nonzero = int(np.count_nonzero(self.weights))
        return (
            f"LinearModel(n_features={self.n_features}, nonzero={nonzero}, "
            f"penalty={self.penalty}, lambda={self.l2_lambda})"
        )


def logistic_loss_and_grad(
    w: np.ndarray,
    b: float,
    X,
    y: np.ndarray,
    sample_weight: Optional[np.ndarray] = None,
    l2_lambda: float = 0.0,
) -> Tuple[float, np.ndarray, float]:
    """
    Class-weighted mean logistic loss plus l2_lambda * ||w||^2, and its gradient

    Returns:
    --------
    (loss, gradient wrt w, gradient wrt b)
    """
    y = np.asarray(y, dtype=np.float64)
    c = np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    total = c.sum()
    z = np.asarray(X @ w).ravel() + b
    loss = float(np.sum(c * (np.logaddexp(0.0, z) - y * z)) / total + l2_lambda * np.dot(w, w))
    r = c * (expit(z) - y) / total
    grad_w = np.asarray(X.T @ r).ravel() + 2.0 * l2_lambda * w
    return loss, grad_w, float(r.sum())


def _smooth_objective(theta, X, y, c, scale, lam, penalty):
    """Objective in the column-scaled parameterization; w = v / scale"""
    v, b = theta[:-1], theta[-1]
    z = np.asarray(X @ v).ravel() + b
    total = c.sum()
    loss = float(np.sum(c * (np.logaddexp(0.0, z) - y * z)) / total)
    r = c * (expit(z) - y) / total
    grad = np.empty_like(theta)
    grad[:-1] = np.asarray(X.T @ r).ravel()
    grad[-1] = r.sum()
    if penalty == "l2":
        loss += lam * float(np.sum((v / scale) ** 2))
        grad[:-1] += 2.0 * lam * v / scale**2
    return loss, grad


def _l1_value(theta, scale, lam) -> float:
    return lam * float(np.sum(np.abs(theta[:-1]) / scale))


def _soft_threshold(theta, step, scale, lam):
    out = theta.copy()
    cut = step * lam / scale
    out[:-1] = np.sign(theta[:-1]) * np.maximum(np.abs(theta[:-1]) - cut, 0.0)
    return out


def _proximal_l1(theta, Xs, y, c, scale, lam, max_iter, tol):
    """Proximal gradient with Barzilai-Borwein steps and backtracking"""
    f, g = _smooth_objective(theta, Xs, y, c, scale, lam, "l1")
    step = 1.0
    iteration = 0
    for iteration in range(1, max_iter + 1):
        while True:
            candidate = _soft_threshold(theta - step * g, step, scale, lam)
            f_new, g_new = _smooth_objective(candidate, Xs, y, c, scale, lam, "l1")
            diff = candidate - theta
            if f_new <= f + g @ diff + (diff @ diff) / (2 * step) or step < 1e-20:
                break
            step *= 0.5
        if np.linalg.norm(diff) / step < tol:
            return candidate, f_new, iteration, True
        s, t = candidate - theta, g_new - g
        theta, f, g = candidate, f_new, g_new
        curvature = float(s @ t)
        step = float(s @ s) / curvature if curvature > 1e-30 else step * 2.0
    return theta, f, iteration, False


def logreg_train(
    X,
    y,
    l2_lambda: float = 1e-3,
    class_weights: ClassWeights = None,
    penalty: str = "l2",
    max_iter: int = 5000,
    tol: float = 1e-6,
    init: str = "zeros",
    seed: int = 0,
) -> LinearModel:
    """
    Fit penalized logistic regression

    Columns are rescaled by their max-abs value for conditioning; the penalty
    is applied to the weights of the original columns, so the objective is
    unchanged. ``penalty="l2"`` is solved with L-BFGS-B, ``penalty="l1"`` with
    proximal gradient steps so that dropped weights are exactly zero.

    Parameters:
    -----------
    X : sparse or dense matrix (N, d)
    y : array of {0, 1}
    l2_lambda : float
        Penalty strength (applies to the L1 norm when penalty="l1")
    class_weights : None, "balanced" or dict
    penalty : "l2" or "l1"
    max_iter : int
        Maximum number of optimizer iterations
    tol : float
        Stopping tolerance on the gradient (l2: largest component; l1: norm of
        the proximal gradient mapping), measured in the column-scaled
        parameterization
    init : "zeros" or "random"
    seed : int
        Seed for random initialization

    Returns:
    --------
    LinearModel
    """
    if penalty not in PENALTIES:
        raise ConfigError(f"penalty must be one of {PENALTIES}, got {penalty!r}")
    if l2_lambda < 0:
        raise ConfigError("l2_lambda must be >= 0")
    X, y = check_training_data(X, y)
    X = sparse.csr_matrix(X)
    y = y.astype(np.float64)
    c = class_weight_vector(y.astype(np.int64), class_weights)

    scale = np.asarray(abs(X).max(axis=0).todense()).ravel() if X.nnz else np.ones(X.shape[1])
    scale[scale == 0] = 1.0
    Xs = X @ sparse.diags(1.0 / scale)

    theta = np.zeros(X.shape[1] + 1)
    if init == "random":
        theta = np.random.default_rng(seed).normal(0.0, 1.0, size=theta.size)
    elif init != "zeros":
        raise ConfigError(f"init must be 'zeros' or 'random', got {init!r}")

    lam = float(l2_lambda)
    if penalty == "l2":
        result = minimize(
            _smooth_objective,
            theta,
            args=(Xs, y, c, scale, lam, penalty),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-14},
        )
        theta, train_loss, iteration = result.x, float(result.fun), int(result.nit)
        converged = bool(result.success)
    else:
        theta, f, iteration, converged = _proximal_l1(theta, Xs, y, c, scale, lam, max_iter, tol)
        train_loss = f + _l1_value(theta, scale, lam)

    weights = theta[:-1] / scale
    if not converged:
        logger.warning(f"logistic regression stopped after {iteration} iterations without converging")
    logger.debug(f"logistic regression: loss {train_loss:.6f} after {iteration} iterations")
    return LinearModel(
        weights=weights,
        bias=float(theta[-1]),
        l2_lambda=lam,
        penalty=penalty,
        class_weights=class_weights,
        train_loss=train_loss,
        n_iter=iteration,
        converged=converged,
    )


def top_weighted_features(model: LinearModel, feature_labels: Sequence[str], k: int = 10) -> List[Tuple[str, float]]:
    """The k features with the largest absolute weight, ties by column order"""
    order = np.argsort(-np.abs(model.weights), kind="stable")[:k]
    labels = list(feature_labels)
    return [
        (labels[j] if j < len(labels) else f"f{j}", float(model.weights[j]))
        for j in order.tolist()
        if model.weights[j] != 0
    ]


def _top_set(model: LinearModel, k: int) -> set:
    order = np.argsort(-np.abs(model.weights), kind="stable")[:k]
    return {int(j) for j in order if model.weights[j] != 0}


def mean_pairwise_jaccard(sets: Sequence[set]) -> float:
    """Mean Jaccard overlap over all pairs; 1.0 with fewer than two sets"""
    pairs = list(combinations(sets, 2))
    if not pairs:
        return 1.0
    scores = [len(a & b) / len(a | b) if (a | b) else 1.0 for a, b in pairs]
    return float(np.mean(scores))


def selection_stability(models: Sequence[LinearModel], k: int = 10) -> float:
    """Mean pairwise Jaccard overlap of the top-k feature sets across models"""
    return mean_pairwise_jaccard([_top_set(m, k) for m in models])


# Single-attribute threshold


@dataclass
class ThresholdModel:
    """Predicts positive iff the attribute value is >= threshold"""

    attribute: str
    threshold: float
    column: int = 0
    train_f1: float = 0.0


def _as_values(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(values)):
        raise NonFiniteFeatureError("threshold values must be finite")
    return values


def threshold_candidates(values: np.ndarray) -> np.ndarray:
    distinct = np.unique(values)
    midpoints = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate(([-np.inf], midpoints, [np.inf]))


def threshold_train(values, y, attribute: str = "value", column: int = 0) -> ThresholdModel:
    """
    Pick the threshold maximizing training F1

    Candidates are -inf, the midpoints of sorted distinct values and +inf;
    ties go to the smallest threshold, and a best F1 of 0 yields +inf.
    """
    values = _as_values(values)
    y = np.asarray(y, dtype=np.int64).ravel()
    if values.size != y.size:
        raise TrainingDataError("values and labels differ in length")
    if not np.all(np.isin(y, (0, 1))):
        raise TrainingDataError("labels must be 0 or 1")
    candidates = threshold_candidates(values)
    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    positives_from = np.concatenate((np.cumsum(y[order][::-1])[::-1], [0]))
    start = np.searchsorted(sorted_values, candidates, side="left")
    predicted = values.size - start
    tp = positives_from[start]
    fp = predicted - tp
    fn = y.sum() - tp
    denominator = 2 * tp + fp + fn
    scores = np.where(denominator > 0, 2 * tp / np.maximum(denominator, 1), 0.0)
    best = int(np.argmax(scores))
    threshold = float(candidates[best]) if scores[best] > 0 else float("inf")
    return ThresholdModel(attribute=attribute, threshold=threshold, column=column, train_f1=float(scores[best]))


# No-information Bernoulli baseline


@dataclass
class NoInfoModel:
    """Bernoulli predictor with positive rate q"""

    q: float
    prevalence: float = 0.0
    expected_f1: float = 0.0
    seed: int = 0


def noinfo_closed_form_f1(q: float, prevalence: float) -> float:
    """Expected F1 in the large-sample limit: 2pq / (p + q)"""
    if prevalence + q == 0:
        return 0.0
    return 2.0 * prevalence * q / (prevalence + q)


def _simulated_f1(q: float, n: int, positives: int, n_draws: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    tp = rng.binomial(positives, q, size=n_draws)
    fp = rng.binomial(n - positives, q, size=n_draws)
    fn = positives - tp
    denominator = 2 * tp + fp + fn
    scores = np.where(denominator > 0, 2 * tp / np.maximum(denominator, 1), 0.0)
    return float(scores.mean())


def noinfo_expected_f1(
    q: float, prevalence: float, n: int = 1000, n_draws: int = 10000, seed: int = 0
) -> float:
    """Expected F1 of a Bernoulli(q) predictor, by seeded simulation over n samples"""
    if not 0 <= q <= 1 or not 0 <= prevalence <= 1:
        raise ValueError("q and prevalence must lie in [0, 1]")
    positives = int(round(prevalence * n))
    return _simulated_f1(q, n, positives, n_draws, seed)


def noinfo_train(y, n_draws: int = 10000, seed: int = 0) -> NoInfoModel:
    """Grid-search q in {0, 0.01, ..., 1} for the best simulated expected F1"""
    y = np.asarray(y, dtype=np.int64).ravel()
    if y.size == 0:
        raise TrainingDataError("noinfo_train needs at least one label")
    positives = int(y.sum())
    scores = [_simulated_f1(float(q), y.size, positives, n_draws, seed) for q in NOINFO_GRID]
    best = int(np.argmax(scores))
    return NoInfoModel(
        q=float(NOINFO_GRID[best]),
        prevalence=positives / y.size,
        expected_f1=float(scores[best]),
        seed=seed,
    )


# Prediction


@singledispatch
def predict(model, X) -> Tuple[np.ndarray, np.ndarray]:
    """
    Labels and scores of a trained model

    Returns:
    --------
    (labels, scores): label 1 iff score >= 0.5 for probabilistic models
    """
    raise TypeError(f"cannot predict with {type(model).__name__}")


@predict.register
def _(model: LinearModel, X):
    scores = model.predict_proba(X)
    return (scores >= 0.5).astype(np.int64), scores


@predict.register
def _(model: GBTModel, X):
    scores = model.predict_proba(align_columns(X, model.n_features))
    return (scores >= 0.5).astype(np.int64), scores


@predict.register
def _(model: ThresholdModel, X):
    if sparse.issparse(X):
        values = X[:, model.column].toarray().ravel()
    else:
        X = np.asarray(X, dtype=np.float64)
        values = X if X.ndim == 1 else X[:, model.column]
    labels = (values >= model.threshold).astype(np.int64)
    return labels, labels.astype(np.float64)


@predict.register
def _(model: NoInfoModel, X):
    n_rows = X.shape[0] if hasattr(X, "shape") else len(X)
    rng = np.random.default_rng(model.seed)
    labels = (rng.random(n_rows) < model.q).astype(np.int64)
    return labels, np.full(n_rows, model.q)


# Serialization


Model = Union[LinearModel, GBTModel, ThresholdModel, NoInfoModel]


def model_kind(model: Model) -> str:
    for kind, cls in (("linear", LinearModel), ("gbt", GBTModel), ("threshold", ThresholdModel), ("noinfo", NoInfoModel)):
        if isinstance(model, cls):
            return kind
    raise TypeError(f"unknown model type {type(model).__name__}")


def _model_payload(model: Model) -> Dict[str, Any]:
    if isinstance(model, LinearModel):
        return {
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "l2_lambda": model.l2_lambda,
            "penalty": model.penalty,
            "class_weights": model.class_weights,
            "train_loss": model.train_loss,
            "n_iter": model.n_iter,
            "converged": model.converged,
        }
    if isinstance(model, GBTModel):
        return {
            "base_score": model.base_score,
            "params": model.params.to_dict(),
            "n_features": model.n_features,
            "train_loss": model.train_loss,
            "trees": [tree.to_dict() for tree in model.trees],
        }
    if isinstance(model, ThresholdModel):
        return {
            "attribute": model.attribute,
            "threshold": model.threshold,
            "column": model.column,
            "train_f1": model.train_f1,
        }
    return {"q": model.q, "prevalence": model.prevalence, "expected_f1": model.expected_f1, "seed": model.seed}


def _model_from_payload(kind: str, payload: Dict[str, Any]) -> Model:
    if kind == "linear":
        return LinearModel(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=float(payload["bias"]),
            l2_lambda=float(payload["l2_lambda"]),
            penalty=payload.get("penalty", "l2"),
            class_weights=payload.get("class_weights"),
            train_loss=float(payload.get("train_loss", float("nan"))),
            n_iter=int(payload.get("n_iter", 0)),
            converged=bool(payload.get("converged", False)),
        )
    if kind == "gbt":
        return GBTModel(
            trees=[Tree.from_dict(tree) for tree in payload["trees"]],
            base_score=float(payload["base_score"]),
            params=GBTParams(**payload["params"]),
            n_features=int(payload["n_features"]),
            train_loss=list(payload.get("train_loss", [])),
        )
    if kind == "threshold":
        return ThresholdModel(**payload)
    if kind == "noinfo":
        return NoInfoModel(**payload)
    raise DatasetParseError(f"unknown model kind {kind!r}")


def save_model(model: Model, path: str, meta: Optional[Dict[str, Any]] = None):
    """Write a versioned, self-describing JSON model file"""
    document = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "tool_version": TOOL_VERSION,
        "kind": model_kind(model),
        "meta": meta or {},
        "model": _model_payload(model),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    logger.info(f"Saved {document['kind']} model to {path}")


def load_model(path: str) -> Tuple[Model, Dict[str, Any]]:
    """Read a model file; returns (model, meta)"""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as e:
            raise DatasetParseError(f"{path}: invalid JSON at line {e.lineno} ({e.msg})")
        except UnicodeDecodeError as e:
            raise DatasetParseError(f"{path}: not valid UTF-8 (byte {e.start})")
    if document.get("format") != MODEL_FORMAT:
        raise DatasetParseError(f"{path}: not a {MODEL_FORMAT} file")
    if document.get("version") != MODEL_FORMAT_VERSION:
        raise DatasetParseError(f"{path}: unsupported model format version {document.get('version')}")
    return _model_from_payload(document["kind"], document["model"]), document.get("meta", {})


# Training dispatch used by the harness and the CLI

MODEL_KINDS = ("linear", "gbt", "threshold", "noinfo")


@dataclass(frozen=True)
class TrainSpec:
    """A model kind plus one hyperparameter point"""

    kind: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")


def fit(spec: TrainSpec, X, y, class_weights: ClassWeights = None, seed: int = 0, column: int = 0, attribute: str = "value") -> Model:
    """Train the model a TrainSpec describes"""
    if spec.kind == "linear":
        return logreg_train(X, y, class_weights=class_weights, seed=seed, **spec.params)
    if spec.kind == "gbt":
        params = GBTParams(**{**spec.params, "seed": seed})
        X, y_checked = check_training_data(X, y)
        return gbt_train(X, y_checked, params, sample_weight=class_weight_vector(y_checked, class_weights))
    if spec.kind == "threshold":
        values = as_csc(X)[:, column].toarray().ravel() if sparse.issparse(X) else np.asarray(X)[:, column]
        return threshold_train(values, y, attribute=attribute, column=column)
    return noinfo_train(y, seed=seed, **spec.params)

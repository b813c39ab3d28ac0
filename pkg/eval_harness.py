"""
Evaluation Harness
Rumor-stratified splits, grid-search cross-validation, repeated trials and
the minimum-size, WL-iteration, truncation and attribute sweeps
"""

import math
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import GroupKFold, GroupShuffleSplit

from baseline_features import ATTRIBUTE_NAMES, DEFAULT_THRESHOLD_BASELINES, attribute_matrix
from cascade_model import (
    Cascade,
    LabeledDataset,
    truncate_by_depth,
    truncate_by_time,
    truncate_raw_by_depth,
)
from classifiers import TrainSpec, fit, mean_pairwise_jaccard, predict, top_weighted_features
from errors import ConfigError, EmptyDatasetError, MissingAttributeError, SingleClassError, SplitError
from logger_config import LoggerSetup
from settings import TOOL_VERSION, config_hash, read_key_value_file
from tagging import TagScheme, tag_dataset
from wl_kernel import Neighborhood, WLConfig, embed_dataset, training_support

logger = LoggerSetup.get_logger(__name__)

FAMILIES = ("wl-lin", "wl-nonlin", "features-lin", "features-nonlin", "noinfo")
DEFAULT_LINEAR_GRID = ({"l2_lambda": 1e-3}, {"l2_lambda": 1e-2}, {"l2_lambda": 1e-1})
DEFAULT_GBT_GRID = ({"n_trees": 50, "learning_rate": 0.1, "max_leaves": 8, "min_samples_leaf": 5},)
MIN_SIZE_THRESHOLDS = tuple(range(200, 900, 100))
TRUNCATION_HOURS = (1.0, 24.0, 72.0)
TRUNCATION_DEPTHS = (1, 2, 3, 4, 5)
MAX_SPLIT_REDRAWS = 10
EXPERIMENT_KEYS = (
    "MIN_SIZE", "TAGS", "TAG_MAX_BIN", "MODEL", "WL_H", "WL_H_GRID", "NEIGHBORHOOD", "TRIALS", "SEED",
    "TEST_FRACTION", "FOLDS", "CLASS_WEIGHTS", "LINEAR_LAMBDAS", "LINEAR_PENALTIES", "GBT_TREES",
    "GBT_LEAVES", "GBT_LEARNING_RATE", "GBT_MIN_SAMPLES_LEAF", "TRUNCATE_HOURS", "TRUNCATE_DEPTH",
    "THREADS", "TOP_K",
)


# Metrics


def confusion(predictions: Sequence[int], labels: Sequence[int]) -> Dict[str, int]:
    """TP / FP / FN / TN with y = 1 as the positive class"""
    predictions = np.asarray(predictions, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if predictions.size != labels.size:
        raise ValueError(f"{predictions.size} predictions for {labels.size} labels")
    return {
        "tp": int(np.sum((predictions == 1) & (labels == 1))),
        "fp": int(np.sum((predictions == 1) & (labels == 0))),
        "fn": int(np.sum((predictions == 0) & (labels == 1))),
        "tn": int(np.sum((predictions == 0) & (labels == 0))),
    }


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator > 0 else 0.0


def f1(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """2TP / (2TP + FP + FN), 0 when the denominator is 0"""
    counts = confusion(predictions, labels)
    return f1_from_counts(counts["tp"], counts["fp"], counts["fn"])


def precision_recall(counts: Mapping[str, int]) -> Tuple[float, float]:
    predicted = counts["tp"] + counts["fp"]
    actual = counts["tp"] + counts["fn"]
    return (
        counts["tp"] / predicted if predicted else 0.0,
        counts["tp"] / actual if actual else 0.0,
    )


# Splitting


@dataclass(frozen=True)
class SplitPlan:
    """Grouped split settings; rumor_id is the grouping key"""

    seed: int = 0
    test_fraction: float = 0.2
    folds: int = 5

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")


def split_indices(groups: Sequence[str], plan: SplitPlan) -> Tuple[np.ndarray, np.ndarray]:
    """Rumor-disjoint (train, test) row indices"""
    groups = np.asarray(groups)
    if np.unique(groups).size < 2:
        raise SplitError("a rumor-stratified split needs at least 2 rumors")
    splitter = GroupShuffleSplit(n_splits=1, test_size=plan.test_fraction, random_state=plan.seed)
    train, test = next(splitter.split(np.zeros(groups.size), groups=groups))
    return np.sort(train), np.sort(test)


def stratified_split(ds: LabeledDataset, plan: SplitPlan) -> Tuple[LabeledDataset, LabeledDataset]:
    """Split a dataset so every rumor's cascades land on one side"""
    train, test = split_indices(ds.rumor_ids, plan)
    return ds.subset(train), ds.subset(test)


def group_folds(groups: Sequence[str], plan: SplitPlan) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Rumor-disjoint cross-validation folds; rumors are shuffled by plan.seed"""
    groups = np.asarray(groups)
    names, codes = np.unique(groups, return_inverse=True)
    if names.size < 2:
        raise SplitError("cross-validation needs at least 2 rumors")
    shuffled = np.random.default_rng(plan.seed).permutation(names.size)[codes.ravel()]
    folds = GroupKFold(n_splits=min(plan.folds, names.size))
    return list(folds.split(np.zeros(groups.size), groups=shuffled))


# Features


@dataclass
class Features:
    """Design matrix of one featurization"""

    X: Any
    names: List[str]
    kind: str  # wl | attributes | none

    @property
    def restrict_to_training(self) -> bool:
        return self.kind == "wl"


def _slice(X, rows, columns=None):
    part = X[rows]
    if columns is not None:
        part = part[:, columns]
    return part


# Cross-validation


@dataclass
class CVResult:
    best: TrainSpec
    mean_scores: List[float]
    folds_used: int


def cross_validate(
    features: Features,
    y: np.ndarray,
    groups: Sequence[str],
    plan: SplitPlan,
    grid: Sequence[TrainSpec],
    class_weights=None,
    seed: int = 0,
    column: int = 0,
) -> CVResult:
    """
    Pick the grid point with the highest mean validation F1

    Parameters:
    -----------
    features : Features
        Training rows only
    y, groups : arrays
        Labels and rumor ids of those rows
    plan : SplitPlan
    grid : sequence of TrainSpec
        Non-empty; ties go to the earliest point

    Returns:
    --------
    CVResult
    """
    if not grid:
        raise ConfigError("hyperparameter grid is empty")
    if len(grid) == 1:
        return CVResult(best=grid[0], mean_scores=[], folds_used=0)

    totals = np.zeros(len(grid))
    used = 0
    for fold, (train, valid) in enumerate(group_folds(groups, plan)):
        if np.unique(y[train]).size < 2:
            logger.warning(f"fold {fold}: training part holds a single class, skipped")
            continue
        mask = training_support(features.X[train]) if features.restrict_to_training else None
        X_train = _slice(features.X, train, mask)
        X_valid = _slice(features.X, valid, mask)
        for g, spec in enumerate(grid):
            model = fit(spec, X_train, y[train], class_weights=class_weights, seed=seed, column=column)
            labels, _ = predict(model, X_valid)
            totals[g] += f1(labels, y[valid])
        used += 1
    if used == 0:
        logger.warning("no usable fold; falling back to the first grid point")
        return CVResult(best=grid[0], mean_scores=[0.0] * len(grid), folds_used=0)
    means = totals / used
    best = int(np.argmax(means))
    logger.debug(f"cross-validation means {np.round(means, 4).tolist()} -> {grid[best].params}")
    return CVResult(best=grid[best], mean_scores=means.tolist(), folds_used=used)


# Configuration


@dataclass(frozen=True)
class TruncationSpec:
    """Early-observation transform: none, time window (hours) or depth"""

    kind: str = "none"
    value: float = math.inf

    def __post_init__(self):
        if self.kind not in ("none", "time", "depth"):
            raise ConfigError(f"unknown truncation kind {self.kind!r}")
        if self.kind == "time" and not self.value > 0:
            raise ConfigError("truncation hours must be positive")
        if self.kind == "depth" and (self.value < 0 or (math.isfinite(self.value) and int(self.value) != self.value)):
            raise ConfigError("truncation depth must be a non-negative integer")

    def apply(self, ds: LabeledDataset) -> LabeledDataset:
        if self.kind == "none":
            return ds
        if self.kind == "time":
            for item in ds:
                if isinstance(item.cascade, Cascade):
                    raise MissingAttributeError(
                        f"cascade of rumor {item.rumor_id!r} is sanitized; time truncation needs timestamps"
                    )
            return ds.map_cascades(lambda raw: truncate_by_time(raw, self.value))
        if math.isinf(self.value):
            return ds
        depth = int(self.value)
        return ds.map_cascades(
            lambda c: truncate_by_depth(c, depth) if isinstance(c, Cascade) else truncate_raw_by_depth(c, depth)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "value": None if math.isinf(self.value) else self.value}


def parse_family(model: str) -> Tuple[str, Optional[str]]:
    """'attribute:<name>' -> ('attribute', name); other families pass through"""
    if model.startswith("attribute:"):
        name = model.split(":", 1)[1]
        if name not in ATTRIBUTE_NAMES:
            raise ConfigError(f"unknown attribute {name!r}")
        return "attribute", name
    if model not in FAMILIES:
        raise ConfigError(f"unknown model family {model!r} (choose from {', '.join(FAMILIES)} or attribute:<name>)")
    return model, None


@dataclass(frozen=True)
class ExperimentConfig:
    """One evaluation protocol run"""

    min_cascade_size: int = 600
    tags: TagScheme = field(default_factory=TagScheme)
    model: str = "wl-nonlin"
    wl_h: int = 2
    neighborhood: str = "undirected"
    wl_h_grid: Tuple[int, ...] = (0, 1, 2, 3, 4)
    n_trials: int = 100
    linear_grid: Tuple[Dict[str, Any], ...] = DEFAULT_LINEAR_GRID
    gbt_grid: Tuple[Dict[str, Any], ...] = DEFAULT_GBT_GRID
    truncation: TruncationSpec = field(default_factory=TruncationSpec)
    seed: int = 0
    test_fraction: float = 0.2
    folds: int = 5
    class_weights: Optional[str] = "balanced"
    n_jobs: int = 1
    top_k: int = 10

    def __post_init__(self):
        parse_family(self.model)
        WLConfig(self.wl_h, self.neighborhood)
        SplitPlan(0, self.test_fraction, self.folds)
        if self.min_cascade_size < 1:
            raise ConfigError("min_cascade_size must be >= 1")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if not self.linear_grid or not self.gbt_grid or not self.wl_h_grid:
            raise ConfigError("hyperparameter grids must be non-empty")
        if self.class_weights not in (None, "none", "balanced"):
            raise ConfigError("class_weights must be 'balanced' or 'none'")

    @property
    def family(self) -> str:
        return parse_family(self.model)[0]

    @property
    def attribute(self) -> Optional[str]:
        return parse_family(self.model)[1]

    @property
    def wl(self) -> WLConfig:
        return WLConfig(self.wl_h, Neighborhood(self.neighborhood))

    def grid(self) -> List[TrainSpec]:
        family = self.family
        if family in ("wl-lin", "features-lin"):
            return [TrainSpec("linear", dict(point)) for point in self.linear_grid]
        if family in ("wl-nonlin", "features-nonlin"):
            return [TrainSpec("gbt", dict(point)) for point in self.gbt_grid]
        if family == "attribute":
            return [TrainSpec("threshold")]
        return [TrainSpec("noinfo")]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "min_cascade_size": self.min_cascade_size,
            "tags": self.tags.to_dict(),
            "model": self.model,
            "wl_h": self.wl_h,
            "neighborhood": self.neighborhood,
            "wl_h_grid": list(self.wl_h_grid),
            "n_trials": self.n_trials,
            "linear_grid": [dict(point) for point in self.linear_grid],
            "gbt_grid": [dict(point) for point in self.gbt_grid],
            "truncation": self.truncation.to_dict(),
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "folds": self.folds,
            "class_weights": self.class_weights,
            "top_k": self.top_k,
        }

    @classmethod
    def from_mapping(cls, values: Mapping[str, str], base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
        """
        Overlay ``KEY=value`` settings on ``base``

        Keys: MIN_SIZE, TAGS, TAG_MAX_BIN, MODEL, WL_H, WL_H_GRID, NEIGHBORHOOD,
        TRIALS, SEED, TEST_FRACTION, FOLDS, CLASS_WEIGHTS, LINEAR_LAMBDAS,
        LINEAR_PENALTIES, GBT_TREES, GBT_LEAVES, GBT_LEARNING_RATE,
        GBT_MIN_SAMPLES_LEAF, TRUNCATE_HOURS, TRUNCATE_DEPTH, THREADS, TOP_K.
        """
        base = base or cls()
        v = {key.upper(): value for key, value in values.items()}
        try:
            changes: Dict[str, Any] = {}
            if "MIN_SIZE" in v:
                changes["min_cascade_size"] = int(v["MIN_SIZE"])
            if "TAGS" in v or "TAG_MAX_BIN" in v:
                changes["tags"] = TagScheme(
                    source=v.get("TAGS", base.tags.source),
                    log_base=base.tags.log_base,
                    max_bin=int(v.get("TAG_MAX_BIN", base.tags.max_bin)),
                )
            if "MODEL" in v:
                changes["model"] = v["MODEL"]
            if "WL_H" in v:
                changes["wl_h"] = int(v["WL_H"])
            if "WL_H_GRID" in v:
                changes["wl_h_grid"] = tuple(int(h) for h in _split_list(v["WL_H_GRID"]))
            if "NEIGHBORHOOD" in v:
                changes["neighborhood"] = v["NEIGHBORHOOD"]
            if "TRIALS" in v:
                changes["n_trials"] = int(v["TRIALS"])
            if "SEED" in v:
                changes["seed"] = int(v["SEED"])
            if "TEST_FRACTION" in v:
                changes["test_fraction"] = float(v["TEST_FRACTION"])
            if "FOLDS" in v:
                changes["folds"] = int(v["FOLDS"])
            if "CLASS_WEIGHTS" in v:
                changes["class_weights"] = v["CLASS_WEIGHTS"].lower()
            if "THREADS" in v:
                changes["n_jobs"] = int(v["THREADS"])
            if "TOP_K" in v:
                changes["top_k"] = int(v["TOP_K"])
            if "LINEAR_LAMBDAS" in v or "LINEAR_PENALTIES" in v:
                lambdas = [float(x) for x in _split_list(v.get("LINEAR_LAMBDAS", ""))] or sorted(
                    {point["l2_lambda"] for point in base.linear_grid}
                )
                penalties = _split_list(v.get("LINEAR_PENALTIES", "")) or ["l2"]
                changes["linear_grid"] = tuple(
                    {"l2_lambda": lam, "penalty": pen} for pen, lam in product(penalties, lambdas)
                )
            gbt_keys = ("GBT_TREES", "GBT_LEAVES", "GBT_LEARNING_RATE", "GBT_MIN_SAMPLES_LEAF")
            if any(key in v for key in gbt_keys):
                first = base.gbt_grid[0]
                trees = [int(x) for x in _split_list(v.get("GBT_TREES", ""))] or [first["n_trees"]]
                leaves = [int(x) for x in _split_list(v.get("GBT_LEAVES", ""))] or [first["max_leaves"]]
                rate = float(v.get("GBT_LEARNING_RATE", first["learning_rate"]))
                min_leaf = int(v.get("GBT_MIN_SAMPLES_LEAF", first["min_samples_leaf"]))
                changes["gbt_grid"] = tuple(
                    {"n_trees": t, "learning_rate": rate, "max_leaves": leaf, "min_samples_leaf": min_leaf}
                    for t, leaf in product(trees, leaves)
                )
            if "TRUNCATE_HOURS" in v and "TRUNCATE_DEPTH" in v:
                raise ConfigError("choose either TRUNCATE_HOURS or TRUNCATE_DEPTH")
            if "TRUNCATE_HOURS" in v:
                changes["truncation"] = TruncationSpec("time", float(v["TRUNCATE_HOURS"]))
            if "TRUNCATE_DEPTH" in v:
                changes["truncation"] = TruncationSpec("depth", int(v["TRUNCATE_DEPTH"]))
            return replace(base, **changes)
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid experiment setting: {e}")

    @classmethod
    def from_file(cls, path: str, base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
        return cls.from_mapping(read_key_value_file(path), base)


def _split_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


# Reports


@dataclass
class TrialResult:
    trial: int
    seed: int
    n_train: int
    n_test: int
    params: Dict[str, Any]
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    tn: int
    test_rumors: List[str] = field(default_factory=list)
    top_features: List[Tuple[str, float]] = field(default_factory=list)


@dataclass
class MetricsReport:
    """Per-trial scores plus aggregates and the echoed configuration"""

    config: Dict[str, Any]
    config_hash: str
    n_cascades: int
    n_rumors: int
    prevalence: float
    retained_fraction: float
    n_features: int
    trials: List[TrialResult]
    mean_f1: float
    std_f1: float
    selection_stability: Optional[float] = None
    tool_version: str = TOOL_VERSION

    @property
    def f1_scores(self) -> List[float]:
        return [trial.f1 for trial in self.trials]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def __repr__(self) -> str:
        return f"MetricsReport(model={self.config.get('model')}, trials={len(self.trials)}, mean_f1={self.mean_f1:.4f})"


@dataclass
class SweepPoint:
    value: Any
    n_cascades: int
    retained_fraction: float
    mean_f1: float
    std_f1: float
    relative_f1: Optional[float] = None
    report: Optional[MetricsReport] = None


@dataclass
class SweepReport:
    kind: str
    config: Dict[str, Any]
    config_hash: str
    points: List[SweepPoint]
    reference_f1: Optional[float] = None
    tool_version: str = TOOL_VERSION

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def __repr__(self) -> str:
        return f"SweepReport(kind={self.kind}, points={len(self.points)})"


# Experiment


def filter_dataset(ds: LabeledDataset, min_size: int) -> LabeledDataset:
    kept = ds.filter_min_size(min_size)
    if kept.N == 0:
        raise EmptyDatasetError(f"no cascade has at least {min_size} nodes")
    if np.unique(kept.labels).size < 2:
        raise EmptyDatasetError(f"only one class remains among cascades with at least {min_size} nodes")
    logger.info(f"Kept {kept.N} of {ds.N} cascades with >= {min_size} nodes")
    return kept


def featurize(ds: LabeledDataset, cfg: ExperimentConfig) -> Features:
    """Build the design matrix the model family needs"""
    family = cfg.family
    if family in ("wl-lin", "wl-nonlin"):
        tagged = tag_dataset(ds, cfg.tags, n_jobs=cfg.n_jobs)
        X, index, _ = embed_dataset(tagged.cascades, cfg.wl, n_jobs=cfg.n_jobs)
        return Features(X=X, names=index.names, kind="wl")
    if family in ("features-lin", "features-nonlin"):
        return Features(X=attribute_matrix(ds, n_jobs=cfg.n_jobs), names=list(ATTRIBUTE_NAMES), kind="attributes")
    if family == "attribute":
        return Features(X=attribute_matrix(ds, [cfg.attribute]), names=[cfg.attribute], kind="attributes")
    return Features(X=np.zeros((ds.N, 1)), names=["none"], kind="none")


def trial_seed(master_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1)[0])


def _split_with_both_classes(groups, y, plan: SplitPlan) -> Tuple[np.ndarray, np.ndarray, SplitPlan]:
    for attempt in range(MAX_SPLIT_REDRAWS):
        candidate = replace(plan, seed=plan.seed + attempt)
        train, test = split_indices(groups, candidate)
        if np.unique(y[train]).size == 2:
            if attempt:
                logger.debug(f"split redrawn {attempt} time(s) to keep both classes in training")
            return train, test, candidate
    raise SingleClassError(f"no rumor-stratified split with both classes after {MAX_SPLIT_REDRAWS} draws")


def run_trial(
    trial: int,
    features: Features,
    y: np.ndarray,
    groups: np.ndarray,
    cfg: ExperimentConfig,
) -> TrialResult:
    """Split, tune on training folds, fit, and score the held-out rumors once"""
    seed = trial_seed(cfg.seed, trial)
    plan = SplitPlan(seed=seed, test_fraction=cfg.test_fraction, folds=cfg.folds)
    train, test, plan = _split_with_both_classes(groups, y, plan)

    train_features = Features(X=_slice(features.X, train), names=features.names, kind=features.kind)
    cv = cross_validate(
        train_features, y[train], groups[train], plan, cfg.grid(), class_weights=cfg.class_weights, seed=seed
    )

    columns = training_support(features.X[train]) if features.restrict_to_training else None
    X_train = _slice(features.X, train, columns)
    X_test = _slice(features.X, test, columns)
    model = fit(cv.best, X_train, y[train], class_weights=cfg.class_weights, seed=seed, attribute=features.names[0])
    labels, _ = predict(model, X_test)

    counts = confusion(labels, y[test])
    precision, recall = precision_recall(counts)
    top = []
    if cv.best.kind == "linear":
        names = np.asarray(features.names)[columns] if columns is not None else features.names
        top = top_weighted_features(model, list(names), cfg.top_k)
    result = TrialResult(
        trial=trial,
        seed=seed,
        n_train=int(train.size),
        n_test=int(test.size),
        params=dict(cv.best.params),
        f1=f1_from_counts(counts["tp"], counts["fp"], counts["fn"]),
        precision=precision,
        recall=recall,
        test_rumors=sorted(set(groups[test].tolist())),
        top_features=[(name, weight) for name, weight in top],
        **counts,
    )
    logger.debug(f"trial {trial}: F1 {result.f1:.4f} with {result.params}")
    return result


def _selection_stability(trials: List[TrialResult], k: int) -> Optional[float]:
    sets = [{name for name, _ in trial.top_features[:k]} for trial in trials if trial.top_features]
    if len(sets) < 2:
        return None
    return mean_pairwise_jaccard(sets)


@LoggerSetup.log_function_call(logger)
def run_experiment(ds: LabeledDataset, cfg: ExperimentConfig) -> MetricsReport:
    """
    Filter, truncate, featurize once, then run cfg.n_trials seeded trials

    Parameters:
    -----------
    ds : LabeledDataset
    cfg : ExperimentConfig

    Returns:
    --------
    MetricsReport (deterministic given cfg.seed; holds no timestamps)
    """
    kept = filter_dataset(ds, cfg.min_cascade_size)
    size_before = int(kept.sizes.sum())
    truncated = cfg.truncation.apply(kept)
    retained = int(truncated.sizes.sum()) / size_before

    features = featurize(truncated, cfg)
    y = truncated.labels
    groups = np.asarray(truncated.rumor_ids)
    if cfg.n_jobs > 1 and cfg.n_trials > 1:
        trials = Parallel(n_jobs=cfg.n_jobs)(
            delayed(run_trial)(t, features, y, groups, cfg) for t in range(cfg.n_trials)
        )
    else:
        trials = [run_trial(t, features, y, groups, cfg) for t in range(cfg.n_trials)]

    scores = np.asarray([trial.f1 for trial in trials])
    config = cfg.to_dict()
    report = MetricsReport(
        config=config,
        config_hash=config_hash(config),
        n_cascades=truncated.N,
        n_rumors=int(np.unique(groups).size),
        prevalence=float(y.mean()),
        retained_fraction=retained,
        n_features=int(features.X.shape[1]),
        trials=trials,
        mean_f1=float(scores.mean()),
        std_f1=float(scores.std()),
        selection_stability=_selection_stability(trials, cfg.top_k),
    )
    logger.info(f"{cfg.model}: mean F1 {report.mean_f1:.4f} +/- {report.std_f1:.4f} over {len(trials)} trials")
    return report


def _point(value, report: MetricsReport, reference: Optional[float] = None) -> SweepPoint:
    relative = None
    if reference is not None:
        relative = report.mean_f1 / reference if reference > 0 else 0.0
    return SweepPoint(
        value=value,
        n_cascades=report.n_cascades,
        retained_fraction=report.retained_fraction,
        mean_f1=report.mean_f1,
        std_f1=report.std_f1,
        relative_f1=relative,
        report=report,
    )


def _sweep_report(kind: str, cfg: ExperimentConfig, points, reference=None, extra=None) -> SweepReport:
    config = {**cfg.to_dict(), "sweep": kind, **(extra or {})}
    return SweepReport(kind=kind, config=config, config_hash=config_hash(config), points=points, reference_f1=reference)


@LoggerSetup.log_function_call(logger)
def sweep_min_size(ds: LabeledDataset, cfg: ExperimentConfig, thresholds: Sequence[int] = MIN_SIZE_THRESHOLDS) -> SweepReport:
    """One experiment per minimum cascade size"""
    points = [_point(int(t), run_experiment(ds, replace(cfg, min_cascade_size=int(t)))) for t in thresholds]
    return _sweep_report("min_size", cfg, points, extra={"values": list(thresholds)})


@LoggerSetup.log_function_call(logger)
def sweep_wl_iterations(ds: LabeledDataset, cfg: ExperimentConfig, hs: Optional[Sequence[int]] = None) -> SweepReport:
    """One experiment per WL iteration count; the vocabulary is rebuilt for each h"""
    hs = list(hs if hs is not None else cfg.wl_h_grid)
    points = [_point(int(h), run_experiment(ds, replace(cfg, wl_h=int(h)))) for h in hs]
    return _sweep_report("wl_h", cfg, points, extra={"values": hs})


@LoggerSetup.log_function_call(logger)
def sweep_truncation(
    ds: LabeledDataset,
    cfg: ExperimentConfig,
    hours: Optional[Sequence[float]] = None,
    depths: Optional[Sequence[int]] = None,
) -> SweepReport:
    """
    Truncate at each time window or depth and re-run the experiment

    Each point carries its retained-node fraction and its F1 relative to the
    untruncated run with the same seeds.
    """
    if hours is not None and depths is not None:
        raise ConfigError("sweep either hours or depths, not both")
    if hours is None and depths is None:
        hours = TRUNCATION_HOURS
    reference = run_experiment(ds, replace(cfg, truncation=TruncationSpec())).mean_f1
    if hours is not None:
        kind, values = "truncation_time", [float(t) for t in hours]
        specs = [TruncationSpec("time", t) for t in values]
    else:
        kind, values = "truncation_depth", [int(d) for d in depths]
        specs = [TruncationSpec("depth", d) for d in values]
    points = [
        _point(value, run_experiment(ds, replace(cfg, truncation=spec)), reference)
        for value, spec in zip(values, specs)
    ]
    return _sweep_report(kind, cfg, points, reference=reference, extra={"values": values})


@LoggerSetup.log_function_call(logger)
def sweep_attribute_baselines(
    ds: LabeledDataset, cfg: ExperimentConfig, names: Sequence[str] = DEFAULT_THRESHOLD_BASELINES
) -> SweepReport:
    """One single-attribute threshold experiment per attribute"""
    points = [_point(name, run_experiment(ds, replace(cfg, model=f"attribute:{name}"))) for name in names]
    return _sweep_report("attribute", cfg, points, extra={"values": list(names)})

"""
Synthetic Cascade Generator
Depth-dependent branching processes with planted tag signals, including
statistic-matched class pairs that differ only in where high-followee nodes sit
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from cascade_model import LabeledDataset, RawCascade, RawNode
from errors import ConfigError
from logger_config import LoggerSetup
from settings import parse_bool, read_key_value_file

logger = LoggerSetup.get_logger(__name__)

PLACEMENTS = ("uniform", "deep")
MAX_ATTEMPTS = 10000
WEIGHT_TOLERANCE = 1e-6
BRANCHING_KEYS = ("OFFSPRING", "FOLLOWEE_BINS", "TAG_PLACEMENT", "TIME_SCALE_S", "FOLLOWER_LOG_MEAN")
GENERATOR_KEYS = ("SEED", "N_CASCADES", "SIZE_MIN", "SIZE_MAX", "STAT_MATCHED", "CASCADES_PER_RUMOR") + tuple(
    f"CLASS{label}_{key}" for label in (0, 1) for key in BRANCHING_KEYS
)


def _check_weights(weights: Sequence[float], what: str):
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0 or np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
        raise ConfigError(f"{what} must be non-negative weights summing to 1, got {weights.tolist()}")


@dataclass(frozen=True)
class BranchingParams:
    """
    Per-class branching process

    offspring_weights[k][j] is the probability that a node at depth k has j
    children; the last row applies to every deeper level. Followee counts are
    drawn uniformly inside log2 bins chosen by followee_bin_weights.
    """

    offspring_weights: Tuple[Tuple[float, ...], ...] = (
        (0.0,) * 8 + (0.3,) + (0.0,) * 3 + (0.4,) + (0.0,) * 3 + (0.3,),
        (0.55, 0.2, 0.15, 0.1),
        (0.7, 0.2, 0.1),
    )
    followee_bin_weights: Tuple[Tuple[int, float], ...] = ((5, 0.6), (10, 0.4))
    tag_placement: str = "uniform"
    time_scale_s: float = 3600.0
    follower_log_mean: float = 5.0

    def __post_init__(self):
        rows = tuple(tuple(float(w) for w in row) for row in self.offspring_weights)
        if not rows:
            raise ConfigError("offspring_weights needs at least one row")
        for depth, row in enumerate(rows):
            _check_weights(row, f"offspring weights at depth {depth}")
        object.__setattr__(self, "offspring_weights", rows)

        bins = tuple((int(b), float(w)) for b, w in self.followee_bin_weights)
        if any(b < 0 or b > 30 for b, _ in bins):
            raise ConfigError("followee bins must lie in 0..30")
        _check_weights([w for _, w in bins], "followee bin weights")
        object.__setattr__(self, "followee_bin_weights", bins)

        if self.tag_placement not in PLACEMENTS:
            raise ConfigError(f"tag_placement must be one of {PLACEMENTS}, got {self.tag_placement!r}")
        if self.time_scale_s <= 0:
            raise ConfigError("time_scale_s must be positive")

    def offspring_row(self, depth: int) -> np.ndarray:
        return np.asarray(self.offspring_weights[min(depth, len(self.offspring_weights) - 1)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "offspring_weights": [list(row) for row in self.offspring_weights],
            "followee_bin_weights": [list(pair) for pair in self.followee_bin_weights],
            "tag_placement": self.tag_placement,
            "time_scale_s": self.time_scale_s,
            "follower_log_mean": self.follower_log_mean,
        }


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything a synthetic dataset depends on"""

    seed: int = 7
    n_cascades: int = 400
    size_range: Tuple[int, int] = (25, 200)
    class0_params: BranchingParams = field(default_factory=BranchingParams)
    class1_params: BranchingParams = field(
        default_factory=lambda: BranchingParams(tag_placement="deep")
    )
    stat_matched: bool = True
    cascades_per_rumor: int = 3

    def __post_init__(self):
        low, high = (int(v) for v in self.size_range)
        if low < 1 or high < low:
            raise ConfigError(f"size_range must satisfy 1 <= min <= max, got {self.size_range}")
        object.__setattr__(self, "size_range", (low, high))
        if self.n_cascades < 0:
            raise ConfigError("n_cascades must be >= 0")
        if self.cascades_per_rumor < 1:
            raise ConfigError("cascades_per_rumor must be >= 1")

    def params_for(self, label: int) -> BranchingParams:
        return self.class1_params if label == 1 else self.class0_params

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "n_cascades": self.n_cascades,
            "size_range": list(self.size_range),
            "class0_params": self.class0_params.to_dict(),
            "class1_params": self.class1_params.to_dict(),
            "stat_matched": self.stat_matched,
            "cascades_per_rumor": self.cascades_per_rumor,
        }

    @classmethod
    def from_mapping(cls, values: Mapping[str, str], base: Optional["GeneratorConfig"] = None) -> "GeneratorConfig":
        """
        Build a config from ``KEY=value`` settings on top of ``base``

        Keys: SEED, N_CASCADES, SIZE_MIN, SIZE_MAX, STAT_MATCHED,
        CASCADES_PER_RUMOR and, per class (CLASS0_ / CLASS1_ prefix),
        OFFSPRING, FOLLOWEE_BINS, TAG_PLACEMENT, TIME_SCALE_S,
        FOLLOWER_LOG_MEAN.
        """
        base = base or cls()
        values = {key.upper(): value for key, value in values.items()}
        try:
            size_range = (
                int(values.get("SIZE_MIN", base.size_range[0])),
                int(values.get("SIZE_MAX", base.size_range[1])),
            )
            return cls(
                seed=int(values.get("SEED", base.seed)),
                n_cascades=int(values.get("N_CASCADES", base.n_cascades)),
                size_range=size_range,
                class0_params=_branching_from_mapping(values, "CLASS0_", base.class0_params),
                class1_params=_branching_from_mapping(values, "CLASS1_", base.class1_params),
                stat_matched=parse_bool(values.get("STAT_MATCHED", base.stat_matched), "STAT_MATCHED"),
                cascades_per_rumor=int(values.get("CASCADES_PER_RUMOR", base.cascades_per_rumor)),
            )
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid generator setting: {e}")

    @classmethod
    def from_file(cls, path: str) -> "GeneratorConfig":
        return cls.from_mapping(read_key_value_file(path))


def parse_pairs(text: str) -> List[Tuple[int, float]]:
    """Parse ``"key:weight,key:weight"`` into (int, float) pairs"""
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, _, weight = chunk.partition(":")
        if not weight:
            raise ConfigError(f"expected 'key:weight', got {chunk!r}")
        pairs.append((int(key), float(weight)))
    return pairs


def parse_offspring(text: str) -> Tuple[Tuple[float, ...], ...]:
    """``"8:0.3,12:0.7; 0:0.5,1:0.5"`` -> dense per-depth child-count weights"""
    rows = []
    for row_text in text.split(";"):
        pairs = parse_pairs(row_text)
        if not pairs:
            continue
        width = max(count for count, _ in pairs) + 1
        row = [0.0] * width
        for count, weight in pairs:
            if count < 0:
                raise ConfigError("child counts must be non-negative")
            row[count] += weight
        rows.append(tuple(row))
    return tuple(rows)


def _branching_from_mapping(values: Mapping[str, str], prefix: str, base: BranchingParams) -> BranchingParams:
    def get(key):
        return values.get(prefix + key)

    offspring = parse_offspring(get("OFFSPRING")) if get("OFFSPRING") else base.offspring_weights
    bins = tuple(parse_pairs(get("FOLLOWEE_BINS"))) if get("FOLLOWEE_BINS") else base.followee_bin_weights
    return BranchingParams(
        offspring_weights=offspring,
        followee_bin_weights=bins,
        tag_placement=(get("TAG_PLACEMENT") or base.tag_placement).lower(),
        time_scale_s=float(get("TIME_SCALE_S") or base.time_scale_s),
        follower_log_mean=float(get("FOLLOWER_LOG_MEAN") or base.follower_log_mean),
    )


def _grow(rng: np.random.Generator, params: BranchingParams, size_max: int) -> Optional[List[int]]:
    """Breadth-first Galton-Watson draw; None once it exceeds size_max"""
    parent = [-1]
    frontier = [0]
    depth = 0
    while frontier:
        weights = params.offspring_row(depth)
        counts = rng.choice(weights.size, size=len(frontier), p=weights)
        if len(parent) + int(counts.sum()) > size_max:
            return None
        next_frontier = []
        for node, count in zip(frontier, counts.tolist()):
            for _ in range(count):
                next_frontier.append(len(parent))
                parent.append(node)
        frontier = next_frontier
        depth += 1
    return parent


def _draw_topology(rng: np.random.Generator, params: BranchingParams, size_range: Tuple[int, int]) -> List[int]:
    low, high = size_range
    for _ in range(MAX_ATTEMPTS):
        parent = _grow(rng, params, high)
        if parent is not None and len(parent) >= low:
            return parent
    raise ConfigError(
        f"branching process produced no cascade within size_range {list(size_range)} "
        f"after {MAX_ATTEMPTS} attempts"
    )


def _draw_followees(rng: np.random.Generator, params: BranchingParams, n: int) -> np.ndarray:
    bins = np.asarray([b for b, _ in params.followee_bin_weights], dtype=np.int64)
    weights = np.asarray([w for _, w in params.followee_bin_weights])
    chosen = bins[rng.choice(bins.size, size=n, p=weights)]
    # bin b holds followee counts 2^b - 1 .. 2^(b+1) - 2
    return rng.integers(2**chosen - 1, 2 ** (chosen + 1) - 1)


def _place(rng: np.random.Generator, values: np.ndarray, depths: np.ndarray, placement: str) -> np.ndarray:
    """Assign followee values to nodes: uniformly, or largest values on the deepest nodes"""
    if placement == "uniform":
        return values[rng.permutation(values.size)]
    order = np.lexsort((rng.random(values.size), -depths))
    placed = np.empty_like(values)
    placed[order] = np.sort(values)[::-1]
    return placed


def generate_cascade(config: GeneratorConfig, label: int, index: int) -> RawCascade:
    """
    One synthetic cascade from its own random streams

    In statistic-matched mode the topology stream ignores the label, so both
    classes share topology, timestamps, follower counts and the multiset of
    followee counts; only their placement on nodes differs. Such twins share a
    rumor id so grouped splits never separate them.
    """
    own = config.params_for(label)
    if config.stat_matched:
        shape = config.class0_params
        topology_rng = np.random.default_rng([config.seed, 0, index])
    else:
        shape = own
        topology_rng = np.random.default_rng([config.seed, 0, index, 1 + label])
    placement_rng = np.random.default_rng([config.seed, 1 + label, index])

    parent = _draw_topology(topology_rng, shape, config.size_range)
    n = len(parent)
    depths = np.zeros(n, dtype=np.int64)
    offsets = np.zeros(n)
    delays = topology_rng.exponential(shape.time_scale_s, size=n)
    for v in range(1, n):
        depths[v] = depths[parent[v]] + 1
        offsets[v] = offsets[parent[v]] + delays[v]
    followers = np.floor(topology_rng.lognormal(shape.follower_log_mean, 1.5, size=n)).astype(np.int64)
    followees = _place(placement_rng, _draw_followees(topology_rng, shape, n), depths, own.tag_placement)

    nodes = tuple(
        RawNode(
            id=v,
            parent=None if v == 0 else parent[v],
            t_offset=0.0 if v == 0 else round(float(offsets[v]), 3),
            followers=int(followers[v]),
            followees=int(followees[v]),
        )
        for v in range(n)
    )
    rumor = index // config.cascades_per_rumor
    rumor_id = f"m-{rumor:05d}" if config.stat_matched else f"r{label}-{rumor:05d}"
    return RawCascade(rumor_id=rumor_id, label=label, nodes=nodes)


@LoggerSetup.log_function_call(logger)
def generate(config: GeneratorConfig, n_jobs: int = 1) -> LabeledDataset:
    """
    Generate a labeled dataset: n_cascades of class 0, then n_cascades of class 1

    Parameters:
    -----------
    config : GeneratorConfig
    n_jobs : int
        joblib workers; the output does not depend on it

    Returns:
    --------
    LabeledDataset of RawCascades
    """
    jobs = [(label, index) for label in (0, 1) for index in range(config.n_cascades)]
    if n_jobs > 1 and len(jobs) > 1:
        raws = Parallel(n_jobs=n_jobs)(
            delayed(generate_cascade)(config, label, index) for label, index in jobs
        )
    else:
        raws = [generate_cascade(config, label, index) for label, index in jobs]
    ds = LabeledDataset.from_raw(raws)
    logger.info(
        f"Generated {ds.N} cascades (seed={config.seed}, stat_matched={config.stat_matched}, "
        f"sizes {config.size_range[0]}-{config.size_range[1]})"
    )
    return ds


def generate_stat_matched_pair(config: GeneratorConfig, n_jobs: int = 1) -> LabeledDataset:
    """Generate a class pair sharing one topology stream"""
    if not config.stat_matched:
        raise ConfigError("generate_stat_matched_pair requires stat_matched = true")
    return generate(config, n_jobs=n_jobs)

"""
Baseline Attributes
The 32 handcrafted per-cascade attributes behind the attribute-threshold and
feature-vector baselines
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from cascade_model import AnyCascade, Cascade, LabeledDataset, RawCascade, sanitize
from errors import MissingAttributeError
from logger_config import LoggerSetup

logger = LoggerSetup.get_logger(__name__)

SECONDS_PER_DAY = 86400.0
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY

TOPOLOGY = "topology"
TIME = "time"
FOLLOWERS = "followers"

# (name, required input), in the canonical frozen order
ATTRIBUTE_SPECS: Tuple[Tuple[str, str], ...] = (
    ("size", TOPOLOGY),
    ("edge_count", TOPOLOGY),
    ("density", TOPOLOGY),
    ("max_depth", TOPOLOGY),
    ("max_width", TOPOLOGY),
    ("leaf_count", TOPOLOGY),
    ("leaf_fraction", TOPOLOGY),
    ("root_out_degree", TOPOLOGY),
    ("internal_mean_out_degree", TOPOLOGY),
    ("out_degree_mean", TOPOLOGY),
    ("out_degree_median", TOPOLOGY),
    ("out_degree_max", TOPOLOGY),
    ("out_degree_std", TOPOLOGY),
    ("depth_mean", TOPOLOGY),
    ("depth_median", TOPOLOGY),
    ("depth_max", TOPOLOGY),
    ("depth_std", TOPOLOGY),
    ("degree_assortativity", TOPOLOGY),
    ("structural_virality", TOPOLOGY),
    ("nodes_within_1d", TIME),
    ("nodes_within_1w", TIME),
    ("fraction_within_1d", TIME),
    ("fraction_within_1w", TIME),
    ("median_followers", FOLLOWERS),
    ("median_followees", FOLLOWERS),
    ("mean_followers", FOLLOWERS),
    ("mean_followees", FOLLOWERS),
    ("fraction_depth_1", TOPOLOGY),
    ("depth_size_ratio", TOPOLOGY),
    ("width_depth_ratio", TOPOLOGY),
    ("depth1_subtree_max", TOPOLOGY),
    ("depth1_subtree_std", TOPOLOGY),
)

ATTRIBUTE_NAMES: Tuple[str, ...] = tuple(name for name, _ in ATTRIBUTE_SPECS)
ATTRIBUTE_REQUIREMENTS: Dict[str, str] = dict(ATTRIBUTE_SPECS)
TOPOLOGY_ATTRIBUTES: Tuple[str, ...] = tuple(
    name for name, needs in ATTRIBUTE_SPECS if needs == TOPOLOGY
)

# single-attribute threshold baselines swept by default
DEFAULT_THRESHOLD_BASELINES: Tuple[str, ...] = (
    "size",
    "max_depth",
    "max_width",
    "root_out_degree",
    "leaf_count",
    "nodes_within_1d",
    "nodes_within_1w",
    "median_followers",
    "median_followees",
)


@dataclass(frozen=True)
class AttributeVector:
    """Named attribute values in canonical order"""

    names: Tuple[str, ...]
    values: np.ndarray

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> Dict[str, float]:
        return {name: float(value) for name, value in zip(self.names, self.values)}

    def __repr__(self) -> str:
        return f"AttributeVector({len(self.names)} attributes)"


def resolve_names(names: Optional[Sequence[str]]) -> Tuple[str, ...]:
    if names is None:
        return ATTRIBUTE_NAMES
    unknown = [name for name in names if name not in ATTRIBUTE_REQUIREMENTS]
    if unknown:
        raise KeyError(f"unknown attribute(s): {', '.join(unknown)}")
    return tuple(names)


def structural_virality(c: Cascade) -> float:
    """
    Mean undirected distance over all node pairs (0 for a single node)

    Each edge above a subtree of size s lies on s * (n - s) shortest paths.
    """
    n = c.n
    if n < 2:
        return 0.0
    below = c.subtree_sizes[1:].astype(np.float64)
    return float(np.sum(below * (n - below)) / (n * (n - 1) / 2.0))


def total_degrees(c: Cascade) -> np.ndarray:
    degrees = c.out_degree.copy()
    degrees[1:] += 1
    return degrees


def assortativity(c: Cascade) -> float:
    """Pearson correlation of endpoint total degrees over undirected edges"""
    if c.n < 3:
        return 0.0
    degrees = total_degrees(c).astype(np.float64)
    child_deg = degrees[1:]
    parent_deg = degrees[c.parent[1:]]
    x = np.concatenate((child_deg, parent_deg))
    y = np.concatenate((parent_deg, child_deg))
    if np.var(x) == 0 or np.var(y) == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


class AttributeCalculator:
    """Computes the baseline attributes of one cascade"""

    def __init__(self, cascade: AnyCascade, rumor_id: Optional[str] = None):
        """
        Parameters:
        -----------
        cascade : RawCascade or Cascade
            Sanitized cascades only support the topology attributes
        rumor_id : str, optional
            Used in error messages
        """
        self.raw = cascade if isinstance(cascade, RawCascade) else None
        self.c = sanitize(cascade)
        self.rumor_id = rumor_id or (self.raw.rumor_id if self.raw is not None else "?")

    def compute(self, names: Optional[Sequence[str]] = None) -> AttributeVector:
        names = resolve_names(names)
        needs = {ATTRIBUTE_REQUIREMENTS[name] for name in names}
        values: Dict[str, float] = {}
        if TOPOLOGY in needs:
            values.update(self.topology_attributes())
        if TIME in needs:
            values.update(self.time_attributes())
        if FOLLOWERS in needs:
            values.update(self.follower_attributes())
        return AttributeVector(names, np.asarray([values[name] for name in names], dtype=np.float64))

    def topology_attributes(self) -> Dict[str, float]:
        c = self.c
        n, m = c.n, c.m
        out_degree = c.out_degree.astype(np.float64)
        depths = c.depths.astype(np.float64)
        max_depth = c.max_depth
        max_width = int(c.level_sizes.max())
        leaves = int(np.sum(c.out_degree == 0))
        internal = out_degree[out_degree > 0]
        branches = c.subtree_sizes[c.children(0)].astype(np.float64)
        return {
            "size": float(n),
            "edge_count": float(m),
            "density": m / (n * (n - 1)) if n > 1 else 0.0,
            "max_depth": float(max_depth),
            "max_width": float(max_width),
            "leaf_count": float(leaves),
            "leaf_fraction": leaves / n,
            "root_out_degree": float(c.out_degree[0]),
            "internal_mean_out_degree": float(internal.mean()) if internal.size else 0.0,
            "out_degree_mean": float(out_degree.mean()),
            "out_degree_median": float(np.median(out_degree)),
            "out_degree_max": float(out_degree.max()),
            "out_degree_std": float(out_degree.std()),
            "depth_mean": float(depths.mean()),
            "depth_median": float(np.median(depths)),
            "depth_max": float(depths.max()),
            "depth_std": float(depths.std()),
            "degree_assortativity": assortativity(c),
            "structural_virality": structural_virality(c),
            "fraction_depth_1": float(c.out_degree[0]) / n,
            "depth_size_ratio": max_depth / n,
            "width_depth_ratio": max_width / max_depth if max_depth > 0 else 0.0,
            "depth1_subtree_max": float(branches.max()) if branches.size else 0.0,
            "depth1_subtree_std": float(branches.std()) if branches.size else 0.0,
        }

    def _require_raw(self, what: str) -> RawCascade:
        if self.raw is None:
            raise MissingAttributeError(
                f"cascade of rumor {self.rumor_id!r} is sanitized; {what} attributes need raw data"
            )
        return self.raw

    def time_attributes(self) -> Dict[str, float]:
        raw = self._require_raw("time")
        offsets = np.asarray([node.t_offset for node in raw.nodes], dtype=np.float64)
        within_day = float(np.sum(offsets <= SECONDS_PER_DAY))
        within_week = float(np.sum(offsets <= SECONDS_PER_WEEK))
        return {
            "nodes_within_1d": within_day,
            "nodes_within_1w": within_week,
            "fraction_within_1d": within_day / raw.n,
            "fraction_within_1w": within_week / raw.n,
        }

    def _node_counts(self, field_name: str) -> np.ndarray:
        raw = self._require_raw("follower")
        values = []
        for node in raw.nodes:
            value = getattr(node, field_name)
            if value is None:
                raise MissingAttributeError(
                    f"cascade of rumor {raw.rumor_id!r}: node {node.id} has no {field_name} count"
                )
            values.append(value)
        return np.asarray(values, dtype=np.float64)

    def follower_attributes(self) -> Dict[str, float]:
        followers = self._node_counts("followers")
        followees = self._node_counts("followees")
        return {
            "median_followers": float(np.median(followers)),
            "median_followees": float(np.median(followees)),
            "mean_followers": float(followers.mean()),
            "mean_followees": float(followees.mean()),
        }


def attributes(raw: AnyCascade, names: Optional[Sequence[str]] = None) -> AttributeVector:
    """
    Baseline attributes of one cascade

    Parameters:
    -----------
    raw : RawCascade or Cascade
    names : sequence of str, optional
        Subset to compute (defaults to all 32, which needs timestamps and
        follower counts)

    Returns:
    --------
    AttributeVector in the requested order
    """
    return AttributeCalculator(raw).compute(names)


def _row(cascade: AnyCascade, rumor_id: str, names: Tuple[str, ...]) -> np.ndarray:
    return AttributeCalculator(cascade, rumor_id).compute(names).values


def attribute_matrix(
    ds: LabeledDataset, names: Optional[Sequence[str]] = None, n_jobs: int = 1
) -> np.ndarray:
    """Dense (N, k) attribute matrix, rows in dataset order"""
    names = resolve_names(names)
    if ds.N == 0:
        return np.zeros((0, len(names)))
    if n_jobs > 1 and ds.N > 1:
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_row)(item.cascade, item.rumor_id, names) for item in ds
        )
    else:
        rows = [_row(item.cascade, item.rumor_id, names) for item in ds]
    matrix = np.vstack(rows)
    logger.debug(f"Computed {len(names)} attributes for {ds.N} cascades")
    return matrix


def attribute_frame(
    ds: LabeledDataset, names: Optional[Sequence[str]] = None, n_jobs: int = 1
) -> pd.DataFrame:
    """Attribute table with label and rumor_id columns"""
    names = resolve_names(names)
    df = pd.DataFrame(attribute_matrix(ds, names, n_jobs), columns=list(names))
    df["label"] = ds.labels
    df["rumor_id"] = ds.rumor_ids
    return df


def write_attribute_csv(ds: LabeledDataset, path: str, names: Optional[Sequence[str]] = None):
    attribute_frame(ds, names).to_csv(path, index=False)
    logger.info(f"Wrote attributes of {ds.N} cascades to {path}")

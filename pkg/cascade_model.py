"""
Cascade Model
Raw and sanitized retweet cascades, arborescence validation, JSONL dataset
ingestion and the time / depth truncation transforms
"""

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ConfigError, DatasetParseError, InvalidCascadeError
from logger_config import LoggerSetup

logger = LoggerSetup.get_logger(__name__)

SECONDS_PER_HOUR = 3600.0

CASCADE_FIELDS = ("rumor_id", "label", "nodes")
NODE_FIELDS = ("id", "parent", "t_offset_s", "followers", "followees")
REQUIRED_NODE_FIELDS = ("id", "parent", "t_offset_s")


@dataclass(frozen=True)
class RawNode:
    """One retweet event; ``parent`` is None only for the root tweet"""

    id: int
    parent: Optional[int]
    t_offset: float = 0.0
    followers: Optional[int] = None
    followees: Optional[int] = None


@dataclass(frozen=True, repr=False)
class RawCascade:
    """A cascade as collected: topology plus timestamps and degree counts"""

    rumor_id: str
    label: int
    nodes: Tuple[RawNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> Optional[RawNode]:
        for node in self.nodes:
            if node.parent is None:
                return node
        return None

    def __repr__(self) -> str:
        return f"RawCascade(rumor_id={self.rumor_id!r}, label={self.label}, n={self.n})"


@dataclass(frozen=True, eq=False, repr=False)
class Cascade:
    """
    Sanitized cascade: topology and optional coarse tags only

    Nodes are stored in breadth-first order. Index 0 is the root, ``parent[0]``
    is -1, every other parent index is smaller than the node's own index and the
    parent array is non-decreasing, so each node's children occupy one
    contiguous block and depths never decrease along the array.
    """

    parent: np.ndarray
    tags: Optional[np.ndarray] = None

    def __post_init__(self):
        parent = np.array(self.parent, dtype=np.int64)
        if parent.ndim != 1 or parent.size == 0:
            raise InvalidCascadeError("a cascade needs at least one node")
        n = parent.size
        rest = parent[1:]
        if (
            parent[0] != -1
            or np.any(rest < 0)
            or np.any(rest >= np.arange(1, n))
            or np.any(np.diff(rest) < 0)
        ):
            raise InvalidCascadeError(
                "parent array is not a breadth-first arborescence; "
                "use Cascade.from_parents to reorder"
            )
        parent.setflags(write=False)
        object.__setattr__(self, "parent", parent)

        if self.tags is not None:
            tags = np.array(self.tags, dtype=np.int64)
            if tags.shape != (n,):
                raise InvalidCascadeError(f"expected {n} tags, got {tags.shape}")
            if np.any(tags < 0):
                raise InvalidCascadeError("tags must be non-negative")
            tags.setflags(write=False)
            object.__setattr__(self, "tags", tags)

    @classmethod
    def from_parents(
        cls, parents: Sequence[int], tags: Optional[Sequence[int]] = None
    ) -> Tuple["Cascade", np.ndarray]:
        """
        Build a cascade from a parent list in arbitrary node order

        Parameters:
        -----------
        parents : sequence of int
            parents[v] is the parent of node v, or -1 for the root
        tags : sequence of int, optional
            Per-node tags in the same (input) order

        Returns:
        --------
        (Cascade, order) where order[k] is the input index of breadth-first node k
        """
        parents = [int(p) for p in parents]
        roots = [v for v, p in enumerate(parents) if p < 0]
        if len(roots) != 1:
            raise InvalidCascadeError(f"expected exactly one root, found {len(roots)}")
        children = [[] for _ in parents]
        for v, p in enumerate(parents):
            if p >= 0:
                if p >= len(parents):
                    raise InvalidCascadeError(f"node {v}: unknown parent {p}")
                children[p].append(v)
        order = _breadth_first(roots[0], children)
        if len(order) != len(parents):
            raise InvalidCascadeError("parent list is not connected or contains a cycle")
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        parent = np.array(
            [-1] + [rank[parents[v]] for v in order[1:]], dtype=np.int64
        )
        ordered_tags = None
        if tags is not None:
            ordered_tags = np.asarray(tags, dtype=np.int64)[order]
        return cls(parent, ordered_tags), np.asarray(order, dtype=np.int64)

    @property
    def n(self) -> int:
        return int(self.parent.size)

    @property
    def m(self) -> int:
        return self.n - 1

    @property
    def root(self) -> int:
        return 0

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.bincount(self.parent[1:], minlength=self.n)

    @cached_property
    def child_offsets(self) -> np.ndarray:
        """children of v are the indices child_offsets[v]:child_offsets[v + 1]"""
        return np.concatenate(([1], 1 + np.cumsum(self.out_degree))).astype(np.int64)

    def children(self, v: int) -> np.ndarray:
        return np.arange(self.child_offsets[v], self.child_offsets[v + 1])

    @cached_property
    def depths(self) -> np.ndarray:
        parent = self.parent.tolist()
        depth = [0] * self.n
        for v in range(1, self.n):
            depth[v] = depth[parent[v]] + 1
        return np.asarray(depth, dtype=np.int64)

    @property
    def max_depth(self) -> int:
        return int(self.depths[-1])

    @cached_property
    def level_sizes(self) -> np.ndarray:
        return np.bincount(self.depths)

    @cached_property
    def subtree_sizes(self) -> np.ndarray:
        parent = self.parent.tolist()
        sizes = [1] * self.n
        for v in range(self.n - 1, 0, -1):
            sizes[parent[v]] += sizes[v]
        return np.asarray(sizes, dtype=np.int64)

    def with_tags(self, tags: Optional[Sequence[int]]) -> "Cascade":
        return Cascade(self.parent, tags)

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Cascade):
            return NotImplemented
        if not np.array_equal(self.parent, other.parent):
            return False
        if self.tags is None or other.tags is None:
            return self.tags is None and other.tags is None
        return bool(np.array_equal(self.tags, other.tags))

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"Cascade(n={self.n}, depth={self.max_depth}, "
            f"tagged={self.tags is not None})"
        )


AnyCascade = Union[RawCascade, Cascade]


def _breadth_first(root: int, children: List[List[int]]) -> List[int]:
    order = [root]
    head = 0
    while head < len(order):
        order.extend(children[order[head]])
        head += 1
    return order


def _cycle_members(candidates: Sequence[int], parent_of: Dict[int, Optional[int]]) -> set:
    """Node ids lying on a parent-pointer cycle, among walks started at candidates"""
    on_cycle = set()
    finished = set()
    for start in candidates:
        path: List[int] = []
        position: Dict[int, int] = {}
        current = start
        while current is not None and current in parent_of and current not in finished:
            if current in position:
                on_cycle.update(path[position[current]:])
                break
            position[current] = len(path)
            path.append(current)
            current = parent_of[current]
        finished.update(path)
    return on_cycle


def validate(raw: RawCascade) -> List[str]:
    """
    Check the arborescence rules of a raw cascade

    Parameters:
    -----------
    raw : RawCascade

    Returns:
    --------
    List of violation messages; empty iff the cascade is valid
    """
    violations: List[str] = []
    if raw.label not in (0, 1) or isinstance(raw.label, bool):
        violations.append(f"label must be 0 or 1, got {raw.label!r}")
    nodes = raw.nodes
    if not nodes:
        violations.append("no nodes")
        return violations

    counts = Counter(node.id for node in nodes)
    for node_id, count in counts.items():
        if count > 1:
            violations.append(f"duplicate node id {node_id} ({count} occurrences)")

    parent_of = {node.id: node.parent for node in nodes}
    roots = [node for node in nodes if node.parent is None]
    if not roots:
        violations.append("no root: every node has a parent")
    elif len(roots) > 1:
        violations.append(
            "multiple roots: nodes " + ", ".join(str(node.id) for node in roots)
        )
    elif roots[0].t_offset != 0:
        violations.append(f"node {roots[0].id}: root t_offset must be 0")

    children = defaultdict(list)
    for node in nodes:
        if node.parent is not None:
            if node.parent not in parent_of:
                violations.append(f"node {node.id}: unknown parent {node.parent}")
            else:
                children[node.parent].append(node.id)
        if not math.isfinite(node.t_offset) or node.t_offset < 0:
            violations.append(f"node {node.id}: t_offset must be finite and >= 0")
        if node.followers is not None and node.followers < 0:
            violations.append(f"node {node.id}: followers must be >= 0")
        if node.followees is not None and node.followees < 0:
            violations.append(f"node {node.id}: followees must be >= 0")

    reached = set()
    stack = [node.id for node in roots]
    while stack:
        current = stack.pop()
        if current in reached:
            continue
        reached.add(current)
        stack.extend(children[current])

    unreached = [node_id for node_id in counts if node_id not in reached]
    if unreached:
        on_cycle = _cycle_members(unreached, parent_of)
        for node_id in unreached:
            if node_id in on_cycle:
                violations.append(f"cycle at node {node_id}")
            elif parent_of[node_id] in parent_of:
                violations.append(f"node {node_id}: not connected to the root")

    if not violations:
        late = timestamp_inversions(raw)
        if late:
            logger.warning(
                f"Cascade of rumor {raw.rumor_id!r}: {len(late)} node(s) precede "
                f"their parent in time (kept, validation is lenient)"
            )
    return violations


def timestamp_inversions(raw: RawCascade) -> List[int]:
    """Ids of nodes whose t_offset is smaller than their parent's"""
    offset_of = {node.id: node.t_offset for node in raw.nodes}
    return [
        node.id
        for node in raw.nodes
        if node.parent is not None
        and node.parent in offset_of
        and node.t_offset < offset_of[node.parent]
    ]


def require_valid(raw: RawCascade):
    violations = validate(raw)
    if violations:
        raise InvalidCascadeError(
            f"cascade of rumor {raw.rumor_id!r} is invalid: " + "; ".join(violations),
            violations,
        )


def breadth_first_order(raw: RawCascade) -> Tuple[List[int], np.ndarray]:
    """
    Breadth-first traversal of a valid raw cascade

    Returns:
    --------
    (order, parent) where order[k] is the position in ``raw.nodes`` of
    breadth-first node k and parent is the breadth-first parent array
    """
    position = {node.id: pos for pos, node in enumerate(raw.nodes)}
    children: List[List[int]] = [[] for _ in raw.nodes]
    root_pos = 0
    for pos, node in enumerate(raw.nodes):
        if node.parent is None:
            root_pos = pos
        else:
            children[position[node.parent]].append(pos)
    order = _breadth_first(root_pos, children)
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    parent = np.empty(len(order), dtype=np.int64)
    parent[0] = -1
    for k in range(1, len(order)):
        parent[k] = rank[position[raw.nodes[order[k]].parent]]
    return order, parent


def sanitize(raw: AnyCascade) -> Cascade:
    """
    Strip timestamps, identities and degree counts, keeping topology only

    Raises:
    -------
    InvalidCascadeError if the raw cascade violates the arborescence rules
    """
    if isinstance(raw, Cascade):
        return raw
    require_valid(raw)
    _, parent = breadth_first_order(raw)
    return Cascade(parent)


def truncate_by_time(raw: RawCascade, t_hours: float) -> RawCascade:
    """
    Keep the nodes posted within ``t_hours`` of the root whose ancestors all survive

    Parameters:
    -----------
    raw : RawCascade
    t_hours : float
        Positive observation window in hours (math.inf keeps everything)
    """
    if not t_hours > 0:
        raise ConfigError(f"t_hours must be positive, got {t_hours}")
    require_valid(raw)
    limit = SECONDS_PER_HOUR * t_hours
    if all(node.t_offset <= limit for node in raw.nodes):
        return raw

    root = raw.root
    if root.t_offset > limit:
        raise InvalidCascadeError("time truncation would exclude the root")
    children = defaultdict(list)
    for node in raw.nodes:
        if node.parent is not None:
            children[node.parent].append(node)
    kept = {root.id}
    stack = [root.id]
    while stack:
        current = stack.pop()
        for child in children[current]:
            if child.t_offset <= limit:
                kept.add(child.id)
                stack.append(child.id)
    return replace(raw, nodes=tuple(node for node in raw.nodes if node.id in kept))


def truncate_raw_by_depth(raw: RawCascade, d: int) -> RawCascade:
    """Keep the nodes of a raw cascade at distance <= d from the root"""
    if d < 0:
        raise ConfigError(f"depth must be non-negative, got {d}")
    require_valid(raw)
    order, parent = breadth_first_order(raw)
    depth = np.zeros(len(order), dtype=np.int64)
    for k in range(1, len(order)):
        depth[k] = depth[parent[k]] + 1
    if depth[-1] <= d:
        return raw
    kept = {raw.nodes[order[k]].id for k in range(len(order)) if depth[k] <= d}
    return replace(raw, nodes=tuple(node for node in raw.nodes if node.id in kept))


def truncate_by_depth(c: Cascade, d: int) -> Cascade:
    """Prune a sanitized cascade radially, keeping nodes within d edges of the root"""
    if d < 0:
        raise ConfigError(f"depth must be non-negative, got {d}")
    if d >= c.max_depth:
        return c
    keep = int(np.searchsorted(c.depths, d, side="right"))
    tags = None if c.tags is None else c.tags[:keep]
    return Cascade(c.parent[:keep], tags)


@dataclass(frozen=True)
class DatasetItem:
    """One labeled cascade"""

    cascade: AnyCascade
    label: int
    rumor_id: str

    @property
    def n(self) -> int:
        return self.cascade.n


@dataclass(frozen=True, repr=False)
class LabeledDataset:
    """Labeled cascades with the rumor ids used for stratification"""

    items: Tuple[DatasetItem, ...] = ()

    def __post_init__(self):
        items = tuple(self.items)
        for item in items:
            if item.label not in (0, 1):
                raise InvalidCascadeError(f"label must be 0 or 1, got {item.label!r}")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_raw(cls, raws: Sequence[RawCascade]) -> "LabeledDataset":
        return cls(tuple(DatasetItem(raw, raw.label, raw.rumor_id) for raw in raws))

    @property
    def N(self) -> int:
        return len(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[DatasetItem]:
        return iter(self.items)

    @property
    def labels(self) -> np.ndarray:
        return np.asarray([item.label for item in self.items], dtype=np.int64)

    @property
    def rumor_ids(self) -> List[str]:
        return [item.rumor_id for item in self.items]

    @property
    def cascades(self) -> List[AnyCascade]:
        return [item.cascade for item in self.items]

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray([item.n for item in self.items], dtype=np.int64)

    @property
    def prevalence(self) -> float:
        return float(self.labels.mean()) if self.items else 0.0

    def raw_cascades(self) -> List[RawCascade]:
        raws = self.cascades
        for raw in raws:
            if not isinstance(raw, RawCascade):
                raise TypeError("dataset holds sanitized cascades; raw data required")
        return raws

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        return LabeledDataset(tuple(self.items[int(i)] for i in indices))

    def filter_min_size(self, min_size: int) -> "LabeledDataset":
        return LabeledDataset(tuple(item for item in self.items if item.n >= min_size))

    def map_cascades(self, transform: Callable[[AnyCascade], AnyCascade]) -> "LabeledDataset":
        return LabeledDataset(
            tuple(replace(item, cascade=transform(item.cascade)) for item in self.items)
        )

    def __repr__(self) -> str:
        return (
            f"LabeledDataset(N={self.N}, rumors={len(set(self.rumor_ids))}, "
            f"prevalence={self.prevalence:.3f})"
        )


def describe_dataset(ds: LabeledDataset) -> Dict[str, Any]:
    """Summary statistics of a dataset (counts, prevalence, size and depth spread)"""
    if ds.N == 0:
        return {"cascades": 0, "rumors": 0, "positives": 0, "prevalence": 0.0}
    sizes = ds.sizes
    depths = np.asarray([sanitize(c).max_depth for c in ds.cascades])
    labels = ds.labels
    return {
        "cascades": ds.N,
        "rumors": len(set(ds.rumor_ids)),
        "positives": int(labels.sum()),
        "prevalence": float(labels.mean()),
        "size_min": int(sizes.min()),
        "size_median": float(np.median(sizes)),
        "size_p90": float(np.percentile(sizes, 90)),
        "size_max": int(sizes.max()),
        "size_mean": float(sizes.mean()),
        "depth_median": float(np.median(depths)),
        "depth_max": int(depths.max()),
    }


def _as_int(value: Any, what: str, lineno: int, allow_none: bool = False) -> Optional[int]:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise DatasetParseError(f"line {lineno}: {what} must be an integer, got {value!r}")
    return value


def _check_fields(record: Dict[str, Any], known: Sequence[str], where: str, lineno: int, strict: bool):
    unknown = sorted(set(record) - set(known))
    if not unknown:
        return
    if strict:
        raise DatasetParseError(f"line {lineno}: unknown {where} field(s) {unknown}")
    logger.warning(f"line {lineno}: ignoring unknown {where} field(s) {unknown}")


def _raw_from_record(record: Any, lineno: int, strict: bool) -> RawCascade:
    if not isinstance(record, dict):
        raise DatasetParseError(f"line {lineno}: expected a JSON object")
    missing = [key for key in CASCADE_FIELDS if key not in record]
    if missing:
        raise DatasetParseError(f"line {lineno}: missing field(s) {missing}")
    _check_fields(record, CASCADE_FIELDS, "cascade", lineno, strict)

    rumor_id = record["rumor_id"]
    if not isinstance(rumor_id, str):
        raise DatasetParseError(f"line {lineno}: rumor_id must be a string")
    label = _as_int(record["label"], "label", lineno)
    if not isinstance(record["nodes"], list):
        raise DatasetParseError(f"line {lineno}: nodes must be a list")

    nodes = []
    for entry in record["nodes"]:
        if not isinstance(entry, dict):
            raise DatasetParseError(f"line {lineno}: every node must be a JSON object")
        absent = [key for key in REQUIRED_NODE_FIELDS if key not in entry]
        if absent:
            raise DatasetParseError(f"line {lineno}: node missing field(s) {absent}")
        _check_fields(entry, NODE_FIELDS, "node", lineno, strict)
        t_offset = entry["t_offset_s"]
        if isinstance(t_offset, bool) or not isinstance(t_offset, (int, float)):
            raise DatasetParseError(f"line {lineno}: t_offset_s must be a number")
        nodes.append(
            RawNode(
                id=_as_int(entry["id"], "node id", lineno),
                parent=_as_int(entry["parent"], "parent", lineno, allow_none=True),
                t_offset=float(t_offset),
                followers=_as_int(entry.get("followers"), "followers", lineno, allow_none=True),
                followees=_as_int(entry.get("followees"), "followees", lineno, allow_none=True),
            )
        )
    return RawCascade(rumor_id=rumor_id, label=label, nodes=tuple(nodes))


def read_lines(path: str) -> Iterator[Tuple[int, str]]:
    """(line number, text) for every line of a UTF-8 file; bad bytes raise DatasetParseError"""
    with open(path, "rb") as fh:
        for lineno, data in enumerate(fh, start=1):
            try:
                text = data.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DatasetParseError(f"line {lineno}: not valid UTF-8 ({e.reason} at byte {e.start})")
            yield lineno, text


def _iter_raw(path: str, strict: bool) -> Iterator[Tuple[int, RawCascade]]:
    for lineno, line in read_lines(path):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DatasetParseError(f"line {lineno}: invalid JSON ({e.msg})")
        yield lineno, _raw_from_record(record, lineno, strict)



def load_dataset(path: str, strict: bool = False) -> LabeledDataset:
    """
    Load a JSONL dataset, one cascade per line

    Parameters:
    -----------
    path : str
        Path to the JSONL file
    strict : bool
        Reject unknown fields instead of warning about them

    Returns:
    --------
    LabeledDataset of RawCascades
    """
    raws = []
    for lineno, raw in _iter_raw(path, strict):
        violations = validate(raw)
        if violations:
            raise InvalidCascadeError(
                f"line {lineno}: cascade of rumor {raw.rumor_id!r} is invalid: "
                + "; ".join(violations),
                violations,
            )
        raws.append(raw)
    logger.info(f"Loaded {len(raws)} cascades from {path}")
    return LabeledDataset.from_raw(raws)


def scan_dataset(path: str, strict: bool = False) -> List[Tuple[int, str, List[str]]]:
    """Validate every cascade of a JSONL file; returns (line, rumor_id, violations) per invalid one"""
    problems = []
    checked = 0
    for lineno, raw in _iter_raw(path, strict):
        checked += 1
        violations = validate(raw)
        if violations:
            problems.append((lineno, raw.rumor_id, violations))
    logger.info(f"Checked {checked} cascades in {path}: {len(problems)} invalid")
    return problems


def cascade_to_record(item: DatasetItem) -> Dict[str, Any]:
    raw = item.cascade
    if not isinstance(raw, RawCascade):
        raise TypeError("only raw cascades can be written in the JSONL format")
    return {
        "rumor_id": item.rumor_id,
        "label": int(item.label),
        "nodes": [
            {
                "id": node.id,
                "parent": node.parent,
                "t_offset_s": float(node.t_offset),
                "followers": node.followers,
                "followees": node.followees,
            }
            for node in raw.nodes
        ],
    }


def save_dataset(ds: LabeledDataset, path: str):
    """Write a dataset of raw cascades as JSONL (stable key order)"""
    with open(path, "w", encoding="utf-8") as fh:
        for item in ds:
            fh.write(json.dumps(cascade_to_record(item), separators=(",", ":")))
            fh.write("\n")
    logger.info(f"Saved {ds.N} cascades to {path}")

"""
Weisfeiler-Lehman Subtree Kernel
Label interning, linear-time relabeling, sparse bag-of-motif embeddings,
kernel values and the sparse triplet feature export
"""

import itertools
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import sparse

from cascade_model import Cascade, read_lines
from errors import ConfigError, DatasetParseError, InternerMismatchError, MissingAttributeError
from logger_config import LoggerSetup
from settings import TOOL_VERSION

logger = LoggerSetup.get_logger(__name__)

UNSEEN = -1
FEATURES_FORMAT = "cascade-veracity-features"
FEATURES_FORMAT_VERSION = 1

_interner_tokens = itertools.count(1)


class Neighborhood(str, Enum):
    UNDIRECTED = "undirected"
    CHILDREN = "children"


@dataclass(frozen=True)
class WLConfig:
    """Number of WL iterations and which neighbors feed each relabeling"""

    h: int = 2
    neighborhood: Neighborhood = Neighborhood.UNDIRECTED

    def __post_init__(self):
        if isinstance(self.h, bool) or int(self.h) != self.h or self.h < 0:
            raise ConfigError(f"WL iteration count must be a non-negative integer, got {self.h}")
        object.__setattr__(self, "h", int(self.h))
        try:
            object.__setattr__(self, "neighborhood", Neighborhood(self.neighborhood))
        except ValueError:
            raise ConfigError(f"unknown neighborhood {self.neighborhood!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {"h": self.h, "neighborhood": self.neighborhood.value}


class Interner:
    """
    Injective map (iteration, composite label string) -> compact tag id

    Iteration 0 labels are the decimal node tags and keep the tag value as
    their id. Later iterations number their labels 0, 1, ... in interning
    order. A frozen interner answers UNSEEN for labels it never saw.
    """

    def __init__(self):
        self._ids: Dict[int, Dict[str, int]] = {}
        self._labels: Dict[int, Dict[int, str]] = {}
        self.frozen = False
        self.token = next(_interner_tokens)

    def intern(self, iteration: int, label: str) -> int:
        ids = self._ids.setdefault(iteration, {})
        found = ids.get(label)
        if found is not None:
            return found
        if self.frozen:
            return UNSEEN
        new_id = int(label) if iteration == 0 else len(ids)
        ids[label] = new_id
        self._labels.setdefault(iteration, {})[new_id] = label
        return new_id

    def register_level(self, iteration: int, labels: Iterable[str]):
        for label in labels:
            self.intern(iteration, label)

    def lookup(self, iteration: int, label: str) -> int:
        return self._ids.get(iteration, {}).get(label, UNSEEN)

    def label(self, iteration: int, tag_id: int) -> str:
        return self._labels[iteration][tag_id]

    def size(self, iteration: int) -> int:
        return len(self._ids.get(iteration, {}))

    @property
    def levels(self) -> int:
        return len(self._ids)

    def entries(self) -> List[Tuple[int, int, str]]:
        return [
            (iteration, tag_id, label)
            for iteration in sorted(self._labels)
            for tag_id, label in self._labels[iteration].items()
        ]

    def freeze(self) -> "Interner":
        self.frozen = True
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "levels": [
                [self._labels[iteration][tag_id] for tag_id in sorted(self._labels[iteration])]
                for iteration in sorted(self._labels)
            ]
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any], frozen: bool = True) -> "Interner":
        interner = cls()
        for iteration, labels in enumerate(payload.get("levels", [])):
            interner.register_level(iteration, labels)
        interner.frozen = frozen
        return interner

    def __repr__(self) -> str:
        sizes = [self.size(i) for i in range(self.levels)]
        return f"Interner(levels={sizes}, frozen={self.frozen})"


@dataclass(frozen=True)
class FeatureVector:
    """Sparse WL embedding: (iteration, tag id) -> count"""

    counts: Dict[Tuple[int, int], int]
    n: int
    h: int
    interner_token: int

    def iteration_mass(self, iteration: int) -> int:
        return sum(count for (i, _), count in self.counts.items() if i == iteration)

    def labelled(self, interner: Interner) -> Dict[Tuple[int, str], int]:
        """Counts keyed by (iteration, composite label string)"""
        if interner.token != self.interner_token:
            raise InternerMismatchError("feature vector was produced by another interner")
        return {(i, interner.label(i, tag_id)): count for (i, tag_id), count in self.counts.items()}

    def __repr__(self) -> str:
        return f"FeatureVector(n={self.n}, h={self.h}, features={len(self.counts)})"


def _adjacency(c: Cascade, neighborhood: Neighborhood) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(owners, neighbors, offsets): neighbor index pairs plus per-owner block offsets"""
    children = np.arange(1, c.n, dtype=np.int64)
    parents = c.parent[1:]
    if neighborhood is Neighborhood.CHILDREN:
        owners, neighbors = parents, children
    else:
        owners = np.concatenate((children, parents))
        neighbors = np.concatenate((parents, children))
    offsets = np.zeros(c.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(owners, minlength=c.n), out=offsets[1:])
    return owners, neighbors, offsets


def _stable_order(keys: np.ndarray) -> np.ndarray:
    """Stable argsort of non-negative integers by LSD passes over 16-bit digits"""
    order = np.arange(keys.size)
    top = int(keys.max()) if keys.size else 0
    shift = 0
    while True:
        # numpy sorts 16-bit integers stably with a radix sort
        digit = ((keys[order] >> shift) & 0xFFFF).astype(np.uint16)
        order = order[np.argsort(digit, kind="stable")]
        shift += 16
        if top >> shift == 0:
            return order


def composite_labels(
    c: Cascade,
    current: np.ndarray,
    neighborhood: Neighborhood = Neighborhood.UNDIRECTED,
    adjacency: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
) -> List[str]:
    """
    Composite label of every node: ``old|n1,n2,...`` with neighbor tags ascending

    Neighbor multisets are ordered by stable 16-bit radix passes (by tag,
    then by owning node), so the step is linear in n + m for any tag width.
    """
    owners, neighbors, offsets = adjacency or _adjacency(c, neighborhood)
    current = np.asarray(current, dtype=np.int64)
    keys = current[neighbors]
    floor = int(keys.min()) if keys.size else 0
    order = _stable_order(keys - floor)
    order = order[_stable_order(owners[order])]
    own = [str(tag) for tag in current.tolist()]
    listed = [str(tag) for tag in keys[order].tolist()]
    bounds = offsets.tolist()
    return [
        f"{own[v]}|{','.join(listed[bounds[v]:bounds[v + 1]])}" for v in range(c.n)
    ]


def _unseen_mask(
    c: Cascade, current: np.ndarray, adjacency: Tuple[np.ndarray, np.ndarray, np.ndarray]
) -> np.ndarray:
    owners, neighbors, _ = adjacency
    unseen = current == UNSEEN
    if not unseen.any():
        return unseen
    tainted = np.bincount(owners[unseen[neighbors]], minlength=c.n) > 0
    return unseen | tainted


def _intern_labels(labels: List[str], interner: Interner, iteration: int) -> np.ndarray:
    memo: Dict[str, int] = {}
    ids = []
    for label in labels:
        tag_id = memo.get(label)
        if tag_id is None:
            tag_id = memo[label] = interner.intern(iteration, label)
        ids.append(tag_id)
    return np.asarray(ids, dtype=np.int64)


def wl_relabel_step(
    c: Cascade,
    current_tags: np.ndarray,
    interner: Interner,
    iteration: int = 1,
    neighborhood: Neighborhood = Neighborhood.UNDIRECTED,
    adjacency: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
) -> np.ndarray:
    """
    One WL refinement: new tag = intern(old tag || sorted neighbor tags)

    Parameters:
    -----------
    c : Cascade
    current_tags : np.ndarray
        Tag id of every node at the previous iteration
    interner : Interner
        Shared label table; frozen tables map unknown labels to UNSEEN
    iteration : int
        Index of the iteration being produced (>= 1)

    Returns:
    --------
    np.ndarray of new tag ids
    """
    adjacency = adjacency or _adjacency(c, Neighborhood(neighborhood))
    current_tags = np.asarray(current_tags, dtype=np.int64)
    labels = composite_labels(c, current_tags, neighborhood, adjacency)
    new_tags = _intern_labels(labels, interner, iteration)
    new_tags[_unseen_mask(c, current_tags, adjacency)] = UNSEEN
    return new_tags


def _initial_tags(c: Cascade, interner: Interner) -> np.ndarray:
    if c.tags is None:
        raise MissingAttributeError("cascade is untagged; apply a tag scheme before embedding")
    present = np.unique(c.tags)
    if not interner.frozen:
        interner.register_level(0, (str(tag) for tag in present.tolist()))
        return c.tags.copy()
    seen = np.asarray([interner.lookup(0, str(tag)) != UNSEEN for tag in present.tolist()])
    return np.where(np.isin(c.tags, present[seen]), c.tags, UNSEEN)


def _count_tags(counts: Dict[Tuple[int, int], int], iteration: int, tags: np.ndarray):
    for value, count in Counter(tags[tags != UNSEEN].tolist()).items():
        counts[(iteration, value)] = count


def embed(c: Cascade, cfg: Optional[WLConfig] = None, interner: Optional[Interner] = None) -> FeatureVector:
    """
    WL embedding of one tagged cascade

    Parameters:
    -----------
    c : Cascade
        Tagged cascade
    cfg : WLConfig, optional
        Iteration count and neighborhood (defaults to h=2, undirected)
    interner : Interner, optional
        Shared label table; a fresh one is created when omitted

    Returns:
    --------
    FeatureVector with per-iteration counts summing to n
    """
    cfg = cfg or WLConfig()
    interner = interner if interner is not None else Interner()
    counts: Dict[Tuple[int, int], int] = {}
    current = _initial_tags(c, interner)
    _count_tags(counts, 0, current)
    adjacency = _adjacency(c, cfg.neighborhood)
    for iteration in range(1, cfg.h + 1):
        current = wl_relabel_step(c, current, interner, iteration, cfg.neighborhood, adjacency)
        _count_tags(counts, iteration, current)
    return FeatureVector(counts, c.n, cfg.h, interner.token)


def dot(phi: FeatureVector, psi: FeatureVector) -> float:
    """Inner product of two embeddings produced by the same interner"""
    if phi.interner_token != psi.interner_token:
        raise InternerMismatchError(
            "kernel values need embeddings from a shared interner"
        )
    small, large = (phi, psi) if len(phi.counts) <= len(psi.counts) else (psi, phi)
    return float(sum(count * large.counts.get(key, 0) for key, count in small.counts.items()))


def kernel(c: Cascade, other: Cascade, cfg: Optional[WLConfig] = None, interner: Optional[Interner] = None) -> float:
    """k(c, c') = <phi(c), phi(c')> under a shared interner"""
    interner = interner if interner is not None else Interner()
    return dot(embed(c, cfg, interner), embed(other, cfg, interner))


@dataclass(frozen=True)
class FeatureIndex:
    """Column -> (iteration, composite label), sorted lexicographically"""

    entries: Tuple[Tuple[int, str], ...]
    tag_ids: Tuple[Tuple[int, int], ...]

    @classmethod
    def from_interner(cls, interner: Interner, h: int) -> "FeatureIndex":
        rows = sorted(
            (iteration, label, tag_id)
            for iteration, tag_id, label in interner.entries()
            if iteration <= h
        )
        return cls(
            entries=tuple((iteration, label) for iteration, label, _ in rows),
            tag_ids=tuple((iteration, tag_id) for iteration, _, tag_id in rows),
        )

    @cached_property
    def column_of(self) -> Dict[Tuple[int, int], int]:
        return {key: col for col, key in enumerate(self.tag_ids)}

    @property
    def names(self) -> List[str]:
        return [f"wl{iteration}:{label}" for iteration, label in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __repr__(self) -> str:
        return f"FeatureIndex(features={len(self.entries)})"


def _composite_job(c: Cascade, current: np.ndarray, neighborhood: Neighborhood) -> List[str]:
    return composite_labels(c, current, neighborhood)


def embed_dataset(
    cascades: Sequence[Cascade],
    cfg: Optional[WLConfig] = None,
    interner: Optional[Interner] = None,
    n_jobs: int = 1,
) -> Tuple[sparse.csr_matrix, FeatureIndex, Interner]:
    """
    Embed many cascades against one shared interner

    Labels are interned level by level: every composite label of an iteration
    across the whole dataset is collected and numbered in sorted order, so ids,
    columns and the matrix do not depend on row order or on ``n_jobs``.

    Parameters:
    -----------
    cascades : sequence of Cascade
        Tagged cascades (row order of the output)
    cfg : WLConfig, optional
    interner : Interner, optional
        Pass a frozen training interner to embed held-out data
    n_jobs : int
        joblib workers for composite-label construction

    Returns:
    --------
    (X, index, interner) with X a CSR matrix whose rows are the embeddings
    """
    cfg = cfg or WLConfig()
    cascades = list(cascades)
    interner = interner if interner is not None else Interner()

    current = []
    if interner.frozen:
        current = [_initial_tags(c, interner) for c in cascades]
    else:
        for c in cascades:
            if c.tags is None:
                raise MissingAttributeError("cascade is untagged; apply a tag scheme before embedding")
        present = np.unique(np.concatenate([c.tags for c in cascades])) if cascades else []
        interner.register_level(0, (str(tag) for tag in np.asarray(present).tolist()))
        current = [c.tags.copy() for c in cascades]

    row_counts: List[Dict[Tuple[int, int], int]] = [{} for _ in cascades]
    for counts, tags in zip(row_counts, current):
        _count_tags(counts, 0, tags)

    adjacencies = [_adjacency(c, cfg.neighborhood) for c in cascades]
    for iteration in range(1, cfg.h + 1):
        if n_jobs > 1 and len(cascades) > 1:
            labels = Parallel(n_jobs=n_jobs)(
                delayed(_composite_job)(c, tags, cfg.neighborhood)
                for c, tags in zip(cascades, current)
            )
        else:
            labels = [
                composite_labels(c, tags, cfg.neighborhood, adjacency)
                for c, tags, adjacency in zip(cascades, current, adjacencies)
            ]
        if not interner.frozen:
            interner.register_level(iteration, sorted(set().union(*labels)))
        next_tags = []
        for c, tags, adjacency, level_labels, counts in zip(
            cascades, current, adjacencies, labels, row_counts
        ):
            new_tags = _intern_labels(level_labels, interner, iteration)
            new_tags[_unseen_mask(c, tags, adjacency)] = UNSEEN
            _count_tags(counts, iteration, new_tags)
            next_tags.append(new_tags)
        current = next_tags
        logger.debug(f"WL iteration {iteration}: {interner.size(iteration)} labels")

    index = FeatureIndex.from_interner(interner, cfg.h)
    column_of = index.column_of
    rows, cols, data = [], [], []
    for row, counts in enumerate(row_counts):
        for key, count in counts.items():
            rows.append(row)
            cols.append(column_of[key])
            data.append(count)
    X = sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(cascades), len(index)),
    )
    X.sort_indices()
    logger.info(f"Embedded {len(cascades)} cascades at h={cfg.h}: {len(index)} WL features")
    return X, index, interner


def training_support(X_train: sparse.spmatrix) -> np.ndarray:
    """
    Boolean mask of the columns present in at least one training row

    Restricting train and test matrices to this mask gives the features of
    re-embedding the test rows against the frozen training vocabulary, up to
    the order of columns above iteration 1.
    """
    return np.asarray(sparse.csc_matrix(X_train).getnnz(axis=0) > 0)


def gram_matrix(X: sparse.spmatrix, normalize: bool = False) -> np.ndarray:
    """Kernel matrix G = X X^T, optionally cosine-normalized"""
    X = sparse.csr_matrix(X)
    G = (X @ X.T).toarray()
    if normalize:
        norms = np.sqrt(np.diag(G))
        norms[norms == 0] = 1.0
        G = G / np.outer(norms, norms)
    return G


@dataclass
class FeatureSet:
    """A feature matrix with its column index and row metadata"""

    X: sparse.csr_matrix
    feature_names: List[str]
    labels: np.ndarray
    rumor_ids: List[str]
    meta: Dict[str, Any] = field(default_factory=dict)
    interner: Optional[Interner] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.X.shape

    def __repr__(self) -> str:
        return f"FeatureSet(shape={self.X.shape}, kind={self.meta.get('kind', 'wl')!r})"


def sidecar_path(path: str) -> str:
    return f"{path}.index.json"


def write_triplets(path: str, features: FeatureSet):
    """
    Write ``row col count`` triplets plus a JSON sidecar describing the columns

    Parameters:
    -----------
    path : str
        Triplet file; the sidecar goes to ``<path>.index.json``
    features : FeatureSet
    """
    X = sparse.coo_matrix(features.X)
    order = np.lexsort((X.col, X.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {FEATURES_FORMAT} {TOOL_VERSION}\n")
        fh.write(f"# config_hash {features.meta.get('config_hash', '')}\n")
        fh.write(f"# shape {X.shape[0]} {X.shape[1]}\n")
        for row, col, value in zip(X.row[order].tolist(), X.col[order].tolist(), X.data[order].tolist()):
            text = str(int(value)) if float(value).is_integer() else repr(float(value))
            fh.write(f"{row} {col} {text}\n")

    sidecar = {
        "format": FEATURES_FORMAT,
        "version": FEATURES_FORMAT_VERSION,
        "tool_version": TOOL_VERSION,
        "meta": features.meta,
        "features": features.feature_names,
        "labels": [int(y) for y in features.labels],
        "rumor_ids": list(features.rumor_ids),
        "interner": features.interner.to_dict() if features.interner is not None else None,
    }
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info(f"Wrote {X.shape[0]}x{X.shape[1]} features to {path}")


def read_triplets(path: str) -> FeatureSet:
    """Read a triplet file and its sidecar back into a FeatureSet"""
    index_path = sidecar_path(path)
    if not os.path.exists(index_path):
        raise DatasetParseError(f"feature index sidecar not found: {index_path}")
    with open(index_path, "r", encoding="utf-8") as fh:
        try:
            sidecar = json.load(fh)
        except json.JSONDecodeError as e:
            raise DatasetParseError(f"{index_path}: invalid JSON ({e.msg})")
        except UnicodeDecodeError as e:
            raise DatasetParseError(f"{index_path}: not valid UTF-8 (byte {e.start})")
    if sidecar.get("format") != FEATURES_FORMAT:
        raise DatasetParseError(f"{index_path}: not a {FEATURES_FORMAT} sidecar")

    shape = None
    rows, cols, data = [], [], []
    for lineno, line in read_lines(path):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            parts = text[1:].split()
            if parts and parts[0] == "shape":
                try:
                    shape = (int(parts[1]), int(parts[2]))
                except (IndexError, ValueError):
                    raise DatasetParseError(f"line {lineno}: malformed shape header")
            continue
        parts = text.split()
        if len(parts) != 3:
            raise DatasetParseError(f"line {lineno}: expected 'row col count'")
        try:
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            data.append(float(parts[2]))
        except ValueError:
            raise DatasetParseError(f"line {lineno}: non-numeric triplet")
    if shape is None:
        raise DatasetParseError(f"{path}: missing '# shape' header")
    if rows and (max(rows) >= shape[0] or max(cols) >= shape[1] or min(rows) < 0 or min(cols) < 0):
        raise DatasetParseError(f"{path}: triplet outside the declared shape {shape}")

    X = sparse.csr_matrix((data, (rows, cols)), shape=shape, dtype=np.float64)
    interner = None
    if sidecar.get("interner") is not None:
        interner = Interner.from_dict(sidecar["interner"], frozen=True)
    return FeatureSet(
        X=X,
        feature_names=list(sidecar.get("features", [])),
        labels=np.asarray(sidecar.get("labels", []), dtype=np.int64),
        rumor_ids=list(sidecar.get("rumor_ids", [])),
        meta=dict(sidecar.get("meta", {})),
        interner=interner,
    )

"""
Node Tagging
Coarse log-binned node tags seeding WL iteration 0
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from cascade_model import (
    AnyCascade,
    Cascade,
    LabeledDataset,
    breadth_first_order,
    require_valid,
)
from errors import ConfigError, MissingAttributeError
from logger_config import LoggerSetup

logger = LoggerSetup.get_logger(__name__)


class TagSource(str, Enum):
    """Where a node's tag comes from"""

    CASCADE = "cascade"  # out-degree within the cascade
    GRAPH = "graph"  # followee count in the follower graph
    CONSTANT = "constant"
    DEPTH = "depth"  # distance from the root


@dataclass(frozen=True)
class TagScheme:
    """Tag source plus the logarithmic binning applied to it"""

    source: TagSource = TagSource.CASCADE
    log_base: int = 2
    max_bin: int = 30

    def __post_init__(self):
        try:
            object.__setattr__(self, "source", TagSource(self.source))
        except ValueError:
            choices = ", ".join(s.value for s in TagSource)
            raise ConfigError(f"unknown tag source {self.source!r} (choose from {choices})")
        if isinstance(self.log_base, bool) or int(self.log_base) != self.log_base or self.log_base < 2:
            raise ConfigError(f"log_base must be an integer >= 2, got {self.log_base}")
        if self.max_bin < 0:
            raise ConfigError(f"max_bin must be >= 0, got {self.max_bin}")
        object.__setattr__(self, "log_base", int(self.log_base))
        object.__setattr__(self, "max_bin", int(self.max_bin))

    @property
    def alphabet(self) -> "TagAlphabet":
        if self.source is TagSource.CONSTANT:
            return TagAlphabet(max_bin=0)
        return TagAlphabet(max_bin=self.max_bin)

    def to_dict(self) -> Dict[str, Any]:
        return {"source": self.source.value, "log_base": self.log_base, "max_bin": self.max_bin}


@dataclass(frozen=True)
class TagAlphabet:
    """Contiguous tags 0..max_bin"""

    max_bin: int = 30

    @property
    def tags(self) -> tuple:
        return tuple(range(self.max_bin + 1))

    def __len__(self) -> int:
        return self.max_bin + 1

    def __contains__(self, tag: Any) -> bool:
        return isinstance(tag, (int, np.integer)) and 0 <= tag <= self.max_bin


DEFAULT_SCHEME = TagScheme()


def bin_degree(degree: int, scheme: Optional[TagScheme] = None) -> int:
    """
    Log-bin a degree: min(floor(log_base(degree + 1)), max_bin)

    Computed with integer arithmetic so bin edges are exact at any magnitude.
    """
    scheme = scheme or DEFAULT_SCHEME
    degree = int(degree)
    if degree < 0:
        raise ValueError(f"degree must be non-negative, got {degree}")
    value = degree + 1
    if scheme.log_base == 2:
        tag = value.bit_length() - 1
    else:
        tag = 0
        while value >= scheme.log_base:
            value //= scheme.log_base
            tag += 1
    return min(tag, scheme.max_bin)


def bin_degrees(degrees: Sequence[int], scheme: Optional[TagScheme] = None) -> np.ndarray:
    """Vectorized bin_degree over an array of degrees"""
    scheme = scheme or DEFAULT_SCHEME
    degrees = np.asarray(degrees, dtype=np.int64)
    if degrees.size and degrees.min() < 0:
        raise ValueError("degrees must be non-negative")
    if scheme.log_base == 2 and (degrees.size == 0 or degrees.max() < 2**52):
        # frexp exponent of an exactly representable integer is floor(log2) + 1
        _, exponent = np.frexp((degrees + 1).astype(np.float64))
        tags = exponent.astype(np.int64) - 1
    else:
        tags = np.asarray([bin_degree(d, scheme) for d in degrees.tolist()], dtype=np.int64)
    return np.minimum(tags, scheme.max_bin)


def tag_cascade(c: Cascade, scheme: Optional[TagScheme] = None) -> Cascade:
    """Tag a sanitized cascade from its own topology"""
    scheme = scheme or DEFAULT_SCHEME
    if scheme.source is TagSource.CASCADE:
        tags = bin_degrees(c.out_degree, scheme)
    elif scheme.source is TagSource.DEPTH:
        tags = bin_degrees(c.depths, scheme)
    elif scheme.source is TagSource.CONSTANT:
        tags = np.zeros(c.n, dtype=np.int64)
    else:
        raise MissingAttributeError(
            "graph tags need followee counts, which sanitized cascades do not carry"
        )
    return c.with_tags(tags)


def apply_tags(raw: AnyCascade, scheme: Optional[TagScheme] = None) -> Cascade:
    """
    Sanitize a cascade and attach tags from the chosen source

    Parameters:
    -----------
    raw : RawCascade or Cascade
        Sanitized cascades are accepted for every source except ``graph``
    scheme : TagScheme, optional
        Defaults to cascade out-degree, base 2, max bin 30

    Returns:
    --------
    Tagged Cascade; timestamps are never read
    """
    scheme = scheme or DEFAULT_SCHEME
    if isinstance(raw, Cascade):
        return tag_cascade(raw, scheme)

    require_valid(raw)
    order, parent = breadth_first_order(raw)
    c = Cascade(parent)
    if scheme.source is not TagSource.GRAPH:
        return tag_cascade(c, scheme)

    followees = []
    for pos in order:
        node = raw.nodes[pos]
        if node.followees is None:
            raise MissingAttributeError(
                f"cascade of rumor {raw.rumor_id!r}: node {node.id} has no followees "
                f"count, which graph tags require"
            )
        followees.append(node.followees)
    return c.with_tags(bin_degrees(followees, scheme))


def check_tag_inputs(ds: LabeledDataset, scheme: TagScheme):
    """Fail on the first cascade lacking a field the scheme needs"""
    if scheme.source is not TagSource.GRAPH:
        return
    for item in ds:
        raw = item.cascade
        if isinstance(raw, Cascade):
            raise MissingAttributeError(
                f"cascade of rumor {item.rumor_id!r} is sanitized; graph tags need raw data"
            )
        for node in raw.nodes:
            if node.followees is None:
                raise MissingAttributeError(
                    f"cascade of rumor {item.rumor_id!r}: node {node.id} has no "
                    f"followees count, which graph tags require"
                )


def tag_dataset(ds: LabeledDataset, scheme: Optional[TagScheme] = None, n_jobs: int = 1) -> LabeledDataset:
    """Tag every cascade of a dataset, in parallel when n_jobs > 1"""
    scheme = scheme or DEFAULT_SCHEME
    check_tag_inputs(ds, scheme)
    if n_jobs > 1 and ds.N > 1:
        tagged = Parallel(n_jobs=n_jobs)(delayed(apply_tags)(c, scheme) for c in ds.cascades)
        cascades = iter(tagged)
        result = ds.map_cascades(lambda _: next(cascades))
    else:
        result = ds.map_cascades(lambda c: apply_tags(c, scheme))
    logger.debug(f"Tagged {ds.N} cascades with {scheme.source.value} tags")
    return result

"""
Shared fixtures: random arborescences, raw cascade builders and an
uncompressed-string WL reference implementation
"""

import os
import sys
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from cascade_model import Cascade, LabeledDataset, RawCascade, RawNode


def random_parents(rng: np.random.Generator, n: int) -> List[int]:
    """Random recursive tree on n nodes: node v attaches to a uniform earlier node"""
    return [-1] + [int(rng.integers(0, v)) for v in range(1, n)]


def random_cascade(rng: np.random.Generator, n: int, n_tags: Optional[int] = None) -> Cascade:
    parents = random_parents(rng, n)
    tags = rng.integers(0, n_tags, size=n).tolist() if n_tags else None
    cascade, _ = Cascade.from_parents(parents, tags)
    return cascade


def make_raw(
    parents: Sequence[int],
    rumor_id: str = "r0",
    label: int = 0,
    times: Optional[Sequence[float]] = None,
    followers: Optional[Sequence[int]] = None,
    followees: Optional[Sequence[int]] = None,
    id_offset: int = 100,
) -> RawCascade:
    """Raw cascade whose node ids are ``id_offset + index``; parents use indices"""
    nodes = []
    for v, p in enumerate(parents):
        nodes.append(
            RawNode(
                id=id_offset + v,
                parent=None if p < 0 else id_offset + p,
                t_offset=float(times[v]) if times is not None else (0.0 if p < 0 else float(v)),
                followers=None if followers is None else int(followers[v]),
                followees=None if followees is None else int(followees[v]),
            )
        )
    return RawCascade(rumor_id=rumor_id, label=label, nodes=tuple(nodes))


def random_raw(rng: np.random.Generator, n: int, rumor_id: str = "r0", label: int = 0) -> RawCascade:
    parents = random_parents(rng, n)
    times = [0.0] + sorted(rng.uniform(0, 10 * 86400, size=n - 1).tolist())
    followers = rng.integers(0, 5000, size=n).tolist()
    followees = rng.integers(0, 2000, size=n).tolist()
    # random recursive trees attach to earlier nodes, so sorted times stay monotone
    return make_raw(parents, rumor_id, label, times, followers, followees)


def random_dataset(
    rng: np.random.Generator, n_rumors: int = 12, per_rumor: int = 2, size_range: Tuple[int, int] = (5, 30)
) -> LabeledDataset:
    raws = []
    for r in range(n_rumors):
        label = r % 2
        for _ in range(per_rumor):
            n = int(rng.integers(size_range[0], size_range[1] + 1))
            raws.append(random_raw(rng, n, rumor_id=f"rumor{r:03d}", label=label))
    return LabeledDataset.from_raw(raws)


# Hung below an arm end (-1); the others index earlier motif nodes
MOTIFS: Dict[str, Tuple[int, ...]] = {
    "star": (-1, 0, 0, 0),
    "broom": (-1, 0, 1, 1),
    "path": (-1, 0, 1, 2),
}


def two_arm_parents(arm: int, first: str, second: str) -> List[int]:
    """Root with two paths of ``arm`` edges, each ending in a four-node motif"""
    parents = [-1]
    for motif in (first, second):
        end = 0
        for _ in range(arm):
            parents.append(end)
            end = len(parents) - 1
        base = len(parents)
        parents.extend(end if p < 0 else base + p for p in MOTIFS[motif])
    return parents


def planted_motif_dataset(
    rng: np.random.Generator, n_groups: int, arm_range: Tuple[int, int] = (4, 8)
) -> LabeledDataset:
    """
    Quartets of two-armed cascades labeled by the XOR of two deep motifs

    Arm one ends in a star or a path, arm two in a broom or a path. Motifs sit
    more than four hops apart, so WL counts up to h=2 are additive in the two
    choices. A quartet shares its rumor id and arm length.
    """
    raws = []
    for g in range(n_groups):
        arm = int(rng.integers(arm_range[0], arm_range[1] + 1))
        for star_arm in (0, 1):
            for broom_arm in (0, 1):
                parents = two_arm_parents(
                    arm, "star" if star_arm else "path", "broom" if broom_arm else "path"
                )
                raws.append(make_raw(parents, rumor_id=f"q{g:03d}", label=star_arm ^ broom_arm))
    return LabeledDataset.from_raw(raws)


def star(n_leaves: int) -> List[int]:
    return [-1] + [0] * n_leaves


def path(n: int) -> List[int]:
    return [-1] + list(range(n - 1))


# Uncompressed WL reference


def naive_wl_strings(c: Cascade, h: int, directed: bool = False) -> List[List[str]]:
    """
    Per-iteration node labels without compression

    Label of v at iteration i is ``(label_{i-1}(v), sorted neighbor labels)``
    spelled out in full, so equal strings mean equal unfolding trees.
    """
    neighbors: List[List[int]] = [[] for _ in range(c.n)]
    for v in range(1, c.n):
        p = int(c.parent[v])
        neighbors[p].append(v)
        if not directed:
            neighbors[v].append(p)
    labels = [str(int(t)) for t in c.tags]
    levels = [labels]
    for _ in range(h):
        labels = [
            "(" + labels[v] + ";" + ",".join(sorted(labels[u] for u in neighbors[v])) + ")"
            for v in range(c.n)
        ]
        levels.append(labels)
    return levels


def naive_wl_counts(c: Cascade, h: int, directed: bool = False) -> Dict[Tuple[int, str], int]:
    counts: Dict[Tuple[int, str], int] = {}
    for i, labels in enumerate(naive_wl_strings(c, h, directed)):
        for label, count in Counter(labels).items():
            counts[(i, label)] = count
    return counts


def naive_kernel(c: Cascade, other: Cascade, h: int, directed: bool = False) -> int:
    a = naive_wl_counts(c, h, directed)
    b = naive_wl_counts(other, h, directed)
    return sum(count * b.get(key, 0) for key, count in a.items())


def is_bijection(pairs: Sequence[Tuple[str, int]]) -> bool:
    """True iff the (string, id) pairs define a one-to-one correspondence"""
    forward: Dict[str, int] = {}
    backward: Dict[int, str] = {}
    for label, tag_id in pairs:
        if forward.setdefault(label, tag_id) != tag_id:
            return False
        if backward.setdefault(tag_id, label) != label:
            return False
    return True

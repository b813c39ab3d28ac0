"""
Unit tests for wl_kernel module
"""

import math
import os
import sys
import tempfile
import time
import unittest

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from cascade_model import Cascade
from errors import ConfigError, DatasetParseError, InternerMismatchError, MissingAttributeError
from tagging import tag_cascade
from wl_kernel import (
    UNSEEN,
    FeatureSet,
    Interner,
    Neighborhood,
    WLConfig,
    composite_labels,
    dot,
    embed,
    embed_dataset,
    gram_matrix,
    kernel,
    read_triplets,
    training_support,
    wl_relabel_step,
    write_triplets,
)
from tests.helpers import (
    is_bijection,
    naive_kernel,
    naive_wl_strings,
    path,
    random_cascade,
    star,
    two_arm_parents,
)


def tagged(parents, tags=None):
    c, _ = Cascade.from_parents(parents, tags)
    return c if tags is not None else tag_cascade(c)


class TestWLConfig(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ConfigError):
            WLConfig(h=-1)
        with self.assertRaises(ConfigError):
            WLConfig(neighborhood="siblings")
        self.assertIs(WLConfig(neighborhood="children").neighborhood, Neighborhood.CHILDREN)


class TestRelabeling(unittest.TestCase):
    """Single WL refinement steps"""

    def test_composite_labels_sort_neighbors_numerically(self):
        c = tagged([-1, 0, 0, 0], tags=[10, 2, 9, 2])
        labels = composite_labels(c, c.tags)
        self.assertEqual(labels[0], "10|2,2,9")
        self.assertEqual(labels[1], "2|10")

    def test_wide_tags_sort_numerically(self):
        c = tagged(star(5), tags=[0] * 6)
        current = np.array([70_000, 3, 1 << 33, 65_536, 65_535, UNSEEN])
        labels = composite_labels(c, current)
        self.assertEqual(labels[0], f"70000|-1,3,65535,65536,{1 << 33}")
        self.assertEqual(labels[2], f"{1 << 33}|70000")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=10_000))
    def test_composite_labels_match_sorted_neighbor_lists(self, n, seed):
        rng = np.random.default_rng(seed)
        c = random_cascade(rng, n)
        current = rng.integers(-1, 1 << 40, size=n)
        neighbors = [[] for _ in range(n)]
        for v in range(1, n):
            p = int(c.parent[v])
            neighbors[p].append(int(current[v]))
            neighbors[v].append(int(current[p]))
        expected = [
            f"{int(current[v])}|{','.join(str(t) for t in sorted(neighbors[v]))}" for v in range(n)
        ]
        self.assertEqual(composite_labels(c, current), expected)

    def test_children_neighborhood_ignores_parent(self):
        c = tagged([-1, 0, 1], tags=[1, 2, 3])
        labels = composite_labels(c, c.tags, Neighborhood.CHILDREN)
        self.assertEqual(labels, ["1|2", "2|3", "3|"])

    def test_relabel_step_is_injective(self):
        c = tagged([-1, 0, 0, 1, 1, 2], tags=[0, 1, 1, 0, 0, 0])
        interner = Interner()
        new = wl_relabel_step(c, c.tags, interner)
        labels = composite_labels(c, c.tags)
        self.assertTrue(is_bijection(list(zip(labels, new.tolist()))))

    def test_frozen_interner_marks_unseen(self):
        interner = Interner()
        embed(tagged(star(2)), WLConfig(h=1), interner)
        interner.freeze()
        c = tagged(star(5))
        phi = embed(c, WLConfig(h=2), interner)
        # root tag 2 (log2(6)) was never seen, so nothing above level 0 survives
        self.assertEqual(phi.iteration_mass(0), 5)
        self.assertEqual(phi.iteration_mass(1), 0)
        self.assertEqual(interner.lookup(0, "2"), UNSEEN)


class TestEmbedding(unittest.TestCase):
    """Feature vectors and kernel values"""

    def test_untagged_cascade_rejected(self):
        c, _ = Cascade.from_parents(star(2))
        with self.assertRaises(MissingAttributeError):
            embed(c)

    def test_iteration_mass_equals_size(self):
        c = random_cascade(np.random.default_rng(1), 40, n_tags=4)
        phi = embed(c, WLConfig(h=3))
        for i in range(4):
            self.assertEqual(phi.iteration_mass(i), c.n)

    def test_h_zero_is_tag_histogram(self):
        c = tagged([-1, 0, 0, 1], tags=[3, 1, 1, 0])
        phi = embed(c, WLConfig(h=0))
        self.assertEqual(phi.counts, {(0, 3): 1, (0, 1): 2, (0, 0): 1})

    def test_star_vs_path_kernel(self):
        interner = Interner()
        cfg = WLConfig(h=1)
        s = tagged(star(3), tags=[0, 0, 0, 0])
        p = tagged(path(4), tags=[0, 0, 0, 0])
        # level 0: 4 * 4; level 1: star has 3 leaves "0|0", path has 2 ends "0|0"
        self.assertEqual(kernel(s, p, cfg, interner), 16 + 3 * 2)

    def test_constant_tag_stars_at_h_zero(self):
        a = tagged(star(2), tags=[0] * 3)
        b = tagged(star(3), tags=[0] * 4)
        self.assertEqual(kernel(a, b, WLConfig(h=0), Interner()), 12)

    def test_embeddings_from_different_interners_do_not_mix(self):
        c = tagged(star(2))
        with self.assertRaises(InternerMismatchError):
            dot(embed(c), embed(c))

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(min_value=1, max_value=25),
        st.integers(min_value=1, max_value=25),
        st.integers(min_value=0, max_value=3),
        st.integers(min_value=0, max_value=10_000),
    )
    def test_kernel_matches_uncompressed_reference(self, n1, n2, h, seed):
        rng = np.random.default_rng(seed)
        a = random_cascade(rng, n1, n_tags=3)
        b = random_cascade(rng, n2, n_tags=3)
        interner = Interner()
        self.assertEqual(kernel(a, b, WLConfig(h=h), interner), naive_kernel(a, b, h))
        self.assertEqual(kernel(a, a, WLConfig(h=h), interner), naive_kernel(a, a, h))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_compressed_ids_biject_with_uncompressed_strings(self, seed):
        rng = np.random.default_rng(seed)
        cascades = [random_cascade(rng, int(rng.integers(1, 30)), n_tags=3) for _ in range(4)]
        interner = Interner()
        h = 3
        pairs = [[] for _ in range(h + 1)]
        for c in cascades:
            strings = naive_wl_strings(c, h)
            current = c.tags.copy()
            pairs[0].extend(zip(strings[0], current.tolist()))
            for i in range(1, h + 1):
                current = wl_relabel_step(c, current, interner, i)
                pairs[i].extend(zip(strings[i], current.tolist()))
        for level in pairs:
            self.assertTrue(is_bijection(level))

    @settings(max_examples=15, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_children_neighborhood_matches_directed_reference(self, seed):
        rng = np.random.default_rng(seed)
        a = random_cascade(rng, 20, n_tags=2)
        b = random_cascade(rng, 15, n_tags=2)
        cfg = WLConfig(h=2, neighborhood="children")
        self.assertEqual(kernel(a, b, cfg, Interner()), naive_kernel(a, b, 2, directed=True))

    def test_relabeling_invariant_under_node_order(self):
        parents = [-1, 0, 0, 1, 1, 2, 5]
        tags = [1, 0, 2, 0, 1, 0, 1]
        c1, _ = Cascade.from_parents(parents, tags)
        # same tree with the input listed in reverse order
        n = len(parents)
        flipped = [-1 if p < 0 else n - 1 - p for p in reversed(parents)]
        c2, _ = Cascade.from_parents(flipped, list(reversed(tags)))
        interner = Interner()
        cfg = WLConfig(h=3)
        self.assertEqual(kernel(c1, c1, cfg, interner), kernel(c1, c2, cfg, interner))


class TestDatasetEmbedding(unittest.TestCase):
    """Shared vocabulary, sparse matrices and triplet files"""

    def setUp(self):
        rng = np.random.default_rng(11)
        self.cascades = [random_cascade(rng, int(rng.integers(2, 40)), n_tags=4) for _ in range(10)]

    def test_rows_match_single_embeddings(self):
        cfg = WLConfig(h=2)
        X, index, interner = embed_dataset(self.cascades, cfg)
        self.assertEqual(X.shape, (10, len(index)))
        G = gram_matrix(X)
        fresh = Interner()
        for i in (0, 3):
            for j in (1, 3, 7):
                self.assertEqual(G[i, j], kernel(self.cascades[i], self.cascades[j], cfg, fresh))
        np.testing.assert_allclose(X.sum(axis=1).A.ravel(), [3 * c.n for c in self.cascades])

    def test_independent_of_row_order_and_workers(self):
        cfg = WLConfig(h=2)
        X, index, _ = embed_dataset(self.cascades, cfg)
        X_rev, index_rev, _ = embed_dataset(self.cascades[::-1], cfg)
        X_par, index_par, _ = embed_dataset(self.cascades, cfg, n_jobs=2)
        self.assertEqual(index.entries, index_rev.entries)
        self.assertEqual(index.entries, index_par.entries)
        np.testing.assert_array_equal(X.toarray(), X_rev.toarray()[::-1])
        np.testing.assert_array_equal(X.toarray(), X_par.toarray())

    def test_frozen_vocabulary_equals_training_support(self):
        cfg = WLConfig(h=2)
        train, test = self.cascades[:6], self.cascades[6:]
        X_train, train_index, interner = embed_dataset(train, cfg)
        X_test, test_index, _ = embed_dataset(test, cfg, interner=interner.freeze())
        self.assertEqual(test_index.entries, train_index.entries)

        # later-level label strings embed level-specific ids, so columns agree up to order
        X_all, _, _ = embed_dataset(train + test, cfg)
        mask = training_support(X_all[:6])
        self.assertEqual(int(mask.sum()), len(train_index))
        restricted_train = X_all[:6][:, mask]
        restricted_test = X_all[6:][:, mask]
        np.testing.assert_array_equal(
            (restricted_train @ restricted_test.T).toarray(), (X_train @ X_test.T).toarray()
        )
        np.testing.assert_array_equal(
            (restricted_test @ restricted_test.T).toarray(), (X_test @ X_test.T).toarray()
        )

    def test_normalized_gram_has_unit_diagonal(self):
        X, _, _ = embed_dataset(self.cascades, WLConfig(h=1))
        G = gram_matrix(X, normalize=True)
        np.testing.assert_allclose(np.diag(G), 1.0)
        self.assertTrue(np.all(np.linalg.eigvalsh(gram_matrix(X)) > -1e-6))

    def test_gram_matrices_are_positive_semidefinite(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            cascades = [
                random_cascade(rng, int(rng.integers(1, 40)), n_tags=3) for _ in range(20)
            ]
            X, _, _ = embed_dataset(cascades, WLConfig(h=2))
            self.assertGreaterEqual(np.linalg.eigvalsh(gram_matrix(X)).min(), -1e-8, f"seed {seed}")

    def test_far_apart_motifs_add_their_counts(self):
        quartet = [
            tagged(two_arm_parents(4, first, second), tags=[0] * 17)
            for first in ("path", "star")
            for second in ("path", "broom")
        ]
        X = embed_dataset(quartet, WLConfig(h=2))[0].toarray()
        np.testing.assert_array_equal(X[0] + X[3], X[1] + X[2])
        self.assertFalse(np.array_equal(X[0], X[3]))

    def test_triplet_file_round_trip(self):
        X, index, interner = embed_dataset(self.cascades, WLConfig(h=2))
        labels = np.arange(10) % 2
        features = FeatureSet(X, index.names, labels, [f"r{i}" for i in range(10)], {"config_hash": "abc"}, interner)
        with tempfile.TemporaryDirectory() as tmp:
            target = os.path.join(tmp, "features.txt")
            write_triplets(target, features)
            loaded = read_triplets(target)
        np.testing.assert_array_equal(loaded.X.toarray(), X.toarray())
        self.assertEqual(loaded.feature_names, index.names)
        self.assertEqual(loaded.labels.tolist(), labels.tolist())
        self.assertEqual(loaded.interner.entries(), interner.entries())

    def test_malformed_triplets(self):
        X, index, _ = embed_dataset(self.cascades[:2], WLConfig(h=0))
        features = FeatureSet(X, index.names, np.array([0, 1]), ["a", "b"])
        with tempfile.TemporaryDirectory() as tmp:
            target = os.path.join(tmp, "features.txt")
            write_triplets(target, features)
            with open(target, "a", encoding="utf-8") as fh:
                fh.write("0 1\n")
            with self.assertRaises(DatasetParseError) as ctx:
                read_triplets(target)
        self.assertIn("line", str(ctx.exception))


@pytest.mark.slow
class TestEmbeddingCost(unittest.TestCase):
    """Embedding time grows linearly with cascade size"""

    @staticmethod
    def best_time(c: Cascade, repeats: int = 7) -> float:
        best = math.inf
        for _ in range(repeats):
            start = time.perf_counter()
            embed(c, WLConfig(h=2))
            best = min(best, time.perf_counter() - start)
        return best

    def test_doubling_edges_at_most_doubles_time(self):
        rng = np.random.default_rng(0)
        sizes = [1_000, 2_000, 4_000, 8_000]
        timings = [self.best_time(random_cascade(rng, m + 1, n_tags=4)) for m in sizes]
        for m, small, large in zip(sizes, timings, timings[1:]):
            self.assertLessEqual(large / small, 2.0, f"{m} -> {2 * m} edges")


if __name__ == "__main__":
    unittest.main()

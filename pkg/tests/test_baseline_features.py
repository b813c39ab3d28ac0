"""
Unit tests for baseline_features module
"""

import os
import sys
import tempfile
import unittest

import networkx as nx
import numpy as np
import pandas as pd
from hypothesis import given, settings
from hypothesis import strategies as st

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from baseline_features import (
    ATTRIBUTE_NAMES,
    DEFAULT_THRESHOLD_BASELINES,
    TOPOLOGY_ATTRIBUTES,
    assortativity,
    attribute_frame,
    attribute_matrix,
    attributes,
    resolve_names,
    structural_virality,
    write_attribute_csv,
)
from cascade_model import Cascade, LabeledDataset, sanitize
from errors import MissingAttributeError
from tests.helpers import make_raw, path, random_dataset, random_parents, star


def undirected(c: Cascade) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(c.n))
    graph.add_edges_from((v, int(c.parent[v])) for v in range(1, c.n))
    return graph


class TestAttributeCatalogue(unittest.TestCase):
    def test_thirty_two_unique_names(self):
        self.assertEqual(len(ATTRIBUTE_NAMES), 32)
        self.assertEqual(len(set(ATTRIBUTE_NAMES)), 32)
        self.assertTrue(set(DEFAULT_THRESHOLD_BASELINES) <= set(ATTRIBUTE_NAMES))

    def test_unknown_name(self):
        with self.assertRaises(KeyError):
            resolve_names(["size", "retweet_velocity"])


class TestTopology(unittest.TestCase):
    """Topology attributes against networkx"""

    def test_star(self):
        vec = attributes(sanitize(make_raw(star(5))), TOPOLOGY_ATTRIBUTES)
        self.assertEqual(vec["size"], 6)
        self.assertEqual(vec["max_depth"], 1)
        self.assertEqual(vec["max_width"], 5)
        self.assertEqual(vec["leaf_count"], 5)
        self.assertEqual(vec["root_out_degree"], 5)
        self.assertAlmostEqual(vec["degree_assortativity"], -1.0)
        self.assertAlmostEqual(vec["depth1_subtree_max"], 1.0)

    def test_path(self):
        vec = attributes(make_raw(path(4)), TOPOLOGY_ATTRIBUTES)
        self.assertEqual(vec["max_depth"], 3)
        self.assertEqual(vec["max_width"], 1)
        self.assertEqual(vec["leaf_count"], 1)
        self.assertAlmostEqual(vec["depth_mean"], 1.5)
        self.assertAlmostEqual(vec["depth_size_ratio"], 0.75)
        self.assertAlmostEqual(vec["structural_virality"], 5 / 3)

    def test_single_node(self):
        vec = attributes(make_raw([-1]), TOPOLOGY_ATTRIBUTES)
        self.assertEqual(vec["size"], 1)
        self.assertEqual(vec["density"], 0.0)
        self.assertEqual(vec["structural_virality"], 0.0)
        self.assertEqual(vec["width_depth_ratio"], 0.0)
        self.assertTrue(np.all(np.isfinite(vec.values)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=2, max_value=60), st.integers(min_value=0, max_value=10_000))
    def test_structural_virality_is_mean_pairwise_distance(self, n, seed):
        c, _ = Cascade.from_parents(random_parents(np.random.default_rng(seed), n))
        expected = nx.average_shortest_path_length(undirected(c))
        self.assertAlmostEqual(structural_virality(c), expected, places=9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=4, max_value=60), st.integers(min_value=0, max_value=10_000))
    def test_assortativity_matches_networkx(self, n, seed):
        c, _ = Cascade.from_parents(random_parents(np.random.default_rng(seed), n))
        expected = nx.degree_assortativity_coefficient(undirected(c))
        if np.isnan(expected):
            self.assertEqual(assortativity(c), 0.0)
        else:
            self.assertAlmostEqual(assortativity(c), expected, places=9)


class TestRawAttributes(unittest.TestCase):
    """Attributes that need timestamps or follower counts"""

    def test_time_windows(self):
        day = 86400.0
        raw = make_raw([-1, 0, 0, 1, 1], times=[0.0, day / 2, day, 3 * day, 8 * day])
        vec = attributes(raw, ["nodes_within_1d", "nodes_within_1w", "fraction_within_1d", "fraction_within_1w"])
        self.assertEqual(vec["nodes_within_1d"], 3)
        self.assertEqual(vec["nodes_within_1w"], 4)
        self.assertAlmostEqual(vec["fraction_within_1w"], 0.8)

    def test_follower_statistics(self):
        raw = make_raw([-1, 0, 0], followers=[10, 20, 90], followees=[1, 2, 3])
        vec = attributes(raw, ["median_followers", "mean_followers", "median_followees"])
        self.assertEqual(vec.as_dict(), {"median_followers": 20.0, "mean_followers": 40.0, "median_followees": 2.0})

    def test_missing_follower_counts(self):
        raw = make_raw([-1, 0], rumor_id="quiet")
        with self.assertRaises(MissingAttributeError) as ctx:
            attributes(raw, ["median_followers"])
        self.assertIn("quiet", str(ctx.exception))

    def test_sanitized_cascade_supports_topology_only(self):
        c = sanitize(make_raw([-1, 0, 0]))
        self.assertEqual(len(attributes(c, TOPOLOGY_ATTRIBUTES).values), len(TOPOLOGY_ATTRIBUTES))
        with self.assertRaises(MissingAttributeError):
            attributes(c, ["nodes_within_1d"])


class TestAttributeTables(unittest.TestCase):
    def setUp(self):
        self.ds = random_dataset(np.random.default_rng(2), n_rumors=4)

    def test_matrix_shape_and_parallel(self):
        X = attribute_matrix(self.ds)
        self.assertEqual(X.shape, (self.ds.N, 32))
        np.testing.assert_array_equal(X, attribute_matrix(self.ds, n_jobs=2))
        self.assertEqual(attribute_matrix(LabeledDataset.from_raw([]), ["size"]).shape, (0, 1))

    def test_csv_export(self):
        frame = attribute_frame(self.ds, ["size", "max_depth"])
        self.assertEqual(list(frame.columns), ["size", "max_depth", "label", "rumor_id"])
        with tempfile.TemporaryDirectory() as tmp:
            target = os.path.join(tmp, "attributes.csv")
            write_attribute_csv(self.ds, target)
            loaded = pd.read_csv(target)
        self.assertEqual(len(loaded), self.ds.N)
        self.assertEqual(list(loaded.columns[:32]), list(ATTRIBUTE_NAMES))
        self.assertEqual(loaded["rumor_id"].tolist(), self.ds.rumor_ids)


if __name__ == "__main__":
    unittest.main()

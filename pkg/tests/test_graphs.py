import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morpher.graphs import (
    DatasetBundle,
    DatasetFormatError,
    DimensionError,
    GraphInvariantError,
    LabelError,
    ZeroShotSpec,
    few_shot_split,
    generate_homophily_dataset,
    generate_separable_dataset,
    generate_zero_dataset,
    induce_ego_graph,
    load_dataset,
    load_edge_list,
    make_graph,
    random_network_edges,
    save_dataset,
    save_edge_list,
)


def path_graph(n, d=2):
    return make_graph(n, [(i, i + 1) for i in range(n - 1)], np.ones((n, d)))


class TestGraphInvariants:
    def test_self_loop_rejected(self):
        with pytest.raises(GraphInvariantError):
            make_graph(3, [(0, 0)], np.zeros((3, 2)))

    def test_endpoint_out_of_range(self):
        with pytest.raises(GraphInvariantError):
            make_graph(2, [(0, 5)], np.zeros((2, 2)))

    def test_nonfinite_feature(self):
        x = np.zeros((2, 2))
        x[0, 0] = np.inf
        with pytest.raises(GraphInvariantError):
            make_graph(2, [(0, 1)], x)

    def test_features_read_only(self):
        g = path_graph(3)
        with pytest.raises(ValueError):
            g.features[0, 0] = 5.0

    def test_adjacency_symmetric(self):
        g = make_graph(4, [(0, 1), (2, 3), (1, 2)], np.zeros((4, 1)))
        a = g.adjacency()
        assert np.array_equal(a, a.T)
        assert np.all(np.diag(a) == 0)


class TestDatasetIO:
    def write_files(self, tmp_path, lines, labels=("a", "b")):
        data = tmp_path / "data.jsonl"
        data.write_text("\n".join(lines))
        labels_path = tmp_path / "labels.json"
        labels_path.write_text(json.dumps(list(labels)))
        return data, labels_path

    def test_round_trip_identity(self, tmp_path):
        lines = [
            json.dumps({"n": 2, "edges": [[0, 1]], "x": [[1, 2, 3], [4, 5, 6]], "y": 0}),
            json.dumps({"n": 3, "edges": [[0, 2]], "x": [[0, 0, 1]] * 3, "y": 1}),
        ]
        data, labels = self.write_files(tmp_path, lines)
        bundle = load_dataset(data, labels)
        assert [g.num_nodes for g in bundle.graphs] == [2, 3]
        assert bundle.labels == [0, 1]
        assert bundle.label_texts == ["a", "b"]
        # write back out and reload: identical content
        save_dataset(bundle, tmp_path / "out.jsonl", tmp_path / "out_labels.json")
        again = load_dataset(tmp_path / "out.jsonl", tmp_path / "out_labels.json")
        for g1, g2 in zip(bundle.graphs, again.graphs):
            assert g1.edges == g2.edges
            assert np.array_equal(g1.features, g2.features)

    def test_self_loop_line_rejected(self, tmp_path):
        lines = [json.dumps({"n": 2, "edges": [[0, 0]], "x": [[1], [1]], "y": 0})]
        data, labels = self.write_files(tmp_path, lines)
        with pytest.raises(GraphInvariantError, match="line 1"):
            load_dataset(data, labels)

    def test_padding_appends_zeros(self, tmp_path):
        lines = [json.dumps({"n": 2, "edges": [], "x": [[1, 2, 3], [4, 5, 6]], "y": 0})]
        data, labels = self.write_files(tmp_path, lines)
        bundle = load_dataset(data, labels, pad_to=5)
        assert bundle.feature_dim == 5
        assert np.array_equal(bundle.graphs[0].features[:, 3:], np.zeros((2, 2)))

    def test_malformed_line_reports_number(self, tmp_path):
        lines = [json.dumps({"n": 1, "edges": [], "x": [[1]], "y": 0}), "{broken"]
        data, labels = self.write_files(tmp_path, lines)
        with pytest.raises(DatasetFormatError, match="line 2"):
            load_dataset(data, labels)

    def test_inconsistent_dims_without_padding(self, tmp_path):
        lines = [
            json.dumps({"n": 1, "edges": [], "x": [[1, 2]], "y": 0}),
            json.dumps({"n": 1, "edges": [], "x": [[1, 2, 3]], "y": 0}),
        ]
        data, labels = self.write_files(tmp_path, lines)
        with pytest.raises(DimensionError):
            load_dataset(data, labels)

    def test_label_out_of_range(self, tmp_path):
        lines = [json.dumps({"n": 1, "edges": [], "x": [[1]], "y": 7})]
        data, labels = self.write_files(tmp_path, lines)
        with pytest.raises(LabelError):
            load_dataset(data, labels)

    def test_edge_list_round_trip(self, tmp_path):
        edges = [(0, 3), (1, 2), (4, 5)]
        save_edge_list(edges, tmp_path / "e.txt")
        assert load_edge_list(tmp_path / "e.txt") == edges


class TestEgoGraph:
    def test_one_hop_on_path(self):
        g = path_graph(5)
        ego = induce_ego_graph(g, [2], 1)
        assert set(ego.node_ids) == {1, 2, 3}
        assert ego.node_ids[0] == 2  # center first
        src = {tuple(sorted((ego.node_ids[u], ego.node_ids[v]))) for u, v in ego.edges}
        assert src == {(1, 2), (2, 3)}

    def test_zero_hop_single_node(self):
        g = path_graph(4)
        ego = induce_ego_graph(g, [1], 0)
        assert ego.num_nodes == 1
        assert ego.num_edges == 0
        assert ego.node_ids == (1,)

    def test_two_centers_zero_hop_keeps_their_edge(self):
        # brute force on the triangle: nodes {0, 2}, the 0-2 edge survives filtering
        tri = make_graph(3, [(0, 1), (1, 2), (0, 2)], np.eye(3))
        ego = induce_ego_graph(tri, [0, 2], 0)
        assert set(ego.node_ids) == {0, 2}
        assert ego.num_edges == 1

    def test_features_copied(self):
        g = make_graph(3, [(0, 1), (1, 2)], np.arange(6.0).reshape(3, 2))
        ego = induce_ego_graph(g, [0], 1)
        for local, src in enumerate(ego.node_ids):
            assert np.array_equal(ego.features[local], g.features[src])

    def test_center_out_of_range(self):
        with pytest.raises(GraphInvariantError):
            induce_ego_graph(path_graph(3), [9], 1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 6), st.integers(0, 6), st.data())
    def test_monotone_in_hops(self, gamma1, gamma2, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
        n = 10
        edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.2]
        g = make_graph(n, edges, np.zeros((n, 1)))
        center = int(rng.integers(n))
        lo, hi = sorted((gamma1, gamma2))
        small = set(induce_ego_graph(g, [center], lo).node_ids)
        big = set(induce_ego_graph(g, [center], hi).node_ids)
        assert small <= big

    def test_whole_graph_fixpoint_when_connected(self):
        edges = random_network_edges(30, 10, seed=4)
        g = make_graph(30, edges, np.zeros((30, 1)))
        ego = induce_ego_graph(g, [0], 30)
        assert ego.num_nodes == 30
        assert ego.num_edges == g.num_edges

    def test_deterministic(self):
        g = path_graph(6)
        e1 = induce_ego_graph(g, [3], 2)
        e2 = induce_ego_graph(g, [3], 2)
        assert e1.node_ids == e2.node_ids and e1.edges == e2.edges


class TestZeroDataset:
    def spec(self, seed=5):
        edges = random_network_edges(200, 300, seed=1)
        return ZeroShotSpec(
            base_edges=tuple(edges),
            label_texts=("left", "right", "middle"),
            seed=seed,
        )

    def test_counts_and_dim(self):
        bundle = generate_zero_dataset(self.spec())
        assert len(bundle.graphs) == 120
        assert len(bundle.train_idx) == 20
        assert len(bundle.test_idx) == 100
        assert bundle.feature_dim == 2
        counts = {c: bundle.labels.count(c) for c in range(3)}
        assert counts == {0: 10, 1: 10, 2: 100}

    def test_train_features_pure(self):
        bundle = generate_zero_dataset(self.spec())
        for i in bundle.train_idx:
            g = bundle.graphs[i]
            expected = [1.0, 0.0] if bundle.labels[i] == 0 else [0.0, 1.0]
            assert np.array_equal(g.features, np.tile(expected, (g.num_nodes, 1)))

    def test_test_features_are_basis_rows(self):
        bundle = generate_zero_dataset(self.spec())
        rows = np.vstack([bundle.graphs[i].features for i in bundle.test_idx])
        assert set(map(tuple, rows)) <= {(1.0, 0.0), (0.0, 1.0)}
        # both feature kinds actually occur
        assert len(set(map(tuple, rows))) == 2

    def test_deterministic_under_seed(self):
        b1 = generate_zero_dataset(self.spec(seed=9))
        b2 = generate_zero_dataset(self.spec(seed=9))
        for g1, g2 in zip(b1.graphs, b2.graphs):
            assert g1.edges == g2.edges
            assert np.array_equal(g1.features, g2.features)

    def test_counts_stable_across_seeds(self):
        for seed in (1, 2, 3):
            bundle = generate_zero_dataset(self.spec(seed=seed))
            counts = {c: bundle.labels.count(c) for c in range(3)}
            assert counts == {0: 10, 1: 10, 2: 100}

    def test_small_base_network_rejected(self):
        spec = ZeroShotSpec(
            base_edges=((0, 1), (1, 2)), label_texts=("a", "b", "c"), seed=0
        )
        with pytest.raises(ValueError, match="base network"):
            generate_zero_dataset(spec)


class TestSeparableDataset:
    def test_zero_noise_means_exact(self):
        bundle = generate_separable_dataset(8, 5, 4, 2, seed=3, noise=0.0)
        for g, y in zip(bundle.graphs, bundle.labels):
            expected = np.zeros(4)
            expected[y] = 1.0
            assert np.array_equal(g.features.mean(axis=0), expected)

    def test_deterministic(self):
        b1 = generate_separable_dataset(6, 5, 3, 2, seed=11)
        b2 = generate_separable_dataset(6, 5, 3, 2, seed=11)
        for g1, g2 in zip(b1.graphs, b2.graphs):
            assert np.array_equal(g1.features, g2.features)
            assert g1.edges == g2.edges

    def test_more_classes_than_dims_rejected(self):
        with pytest.raises(ValueError):
            generate_separable_dataset(10, 5, 3, 5, seed=0)


class TestHomophilyDataset:
    def edge_category_fraction(self, g):
        cats = np.argmax(np.asarray(g.features), axis=1)
        same = sum(1 for u, v in g.edges if cats[u] == cats[v])
        return same / g.num_edges

    def test_classes_differ_in_wiring_not_features(self):
        bundle = generate_homophily_dataset(20, 4, seed=1, mix=0.85)
        for g, y in zip(bundle.graphs, bundle.labels):
            frac = self.edge_category_fraction(g)
            if y == 0:
                assert frac > 0.6  # mostly same-category edges
            else:
                assert frac < 0.4
            # one-hot rows throughout
            assert np.all(np.abs(g.features).sum(axis=1) == 1.0)

    def test_deterministic(self):
        a = generate_homophily_dataset(10, 4, seed=3)
        b = generate_homophily_dataset(10, 4, seed=3)
        for g1, g2 in zip(a.graphs, b.graphs):
            assert g1.edges == g2.edges and np.array_equal(g1.features, g2.features)

    def test_mix_range_checked(self):
        with pytest.raises(ValueError):
            generate_homophily_dataset(4, 4, seed=0, mix=0.3)


class TestFewShotSplit:
    def bundle(self, per_class=20, classes=2):
        return generate_separable_dataset(per_class * classes, 5, 4, classes, seed=2)

    def test_ten_shots_split_five_five(self):
        out = few_shot_split(self.bundle(), 10, seed=0)
        for c in range(2):
            train_c = [i for i in out.train_idx if out.labels[i] == c]
            val_c = [i for i in out.val_idx if out.labels[i] == c]
            assert len(train_c) == 5 and len(val_c) == 5
        assert len(out.test_idx) == 40 - 20

    def test_single_shot_goes_to_train(self):
        out = few_shot_split(self.bundle(), 1, seed=0)
        assert len(out.train_idx) == 2 and len(out.val_idx) == 0

    def test_odd_count_extra_in_train(self):
        out = few_shot_split(self.bundle(), 7, seed=0)
        per_class_train = len(out.train_idx) // 2
        assert per_class_train == 4 and len(out.val_idx) // 2 == 3

    def test_insufficient_samples(self):
        small = generate_separable_dataset(6, 5, 4, 2, seed=2)  # 3 per class
        with pytest.raises(ValueError, match="fewer than"):
            few_shot_split(small, 10, seed=0)

    def test_splits_disjoint_cover(self):
        out = few_shot_split(self.bundle(), 10, seed=5)
        all_idx = sorted(out.train_idx + out.val_idx + out.test_idx)
        assert all_idx == list(range(40))

    def test_deterministic(self):
        a = few_shot_split(self.bundle(), 10, seed=5)
        b = few_shot_split(self.bundle(), 10, seed=5)
        assert a.train_idx == b.train_idx and a.val_idx == b.val_idx

    def test_train_capped_at_ten(self):
        # the sampler never places more than 10 labeled samples in train
        big = generate_separable_dataset(60, 5, 4, 2, seed=2)
        out = few_shot_split(big, 20, seed=1)
        for c in range(2):
            assert sum(1 for i in out.train_idx if out.labels[i] == c) == 10
        with pytest.raises(ValueError, match="10 training samples"):
            few_shot_split(big, 21, seed=1)


class TestBundleValidation:
    def test_overlapping_splits_rejected(self):
        g = path_graph(2)
        with pytest.raises(ValueError, match="more than one split"):
            DatasetBundle([g, g], [0, 0], ["a"], train_idx=[0], val_idx=[0])

    def test_label_range_checked(self):
        g = path_graph(2)
        with pytest.raises(LabelError):
            DatasetBundle([g], [3], ["a", "b"])

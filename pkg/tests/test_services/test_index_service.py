"""Tests for the exact k-NN index."""

import numpy as np
import pytest

from mir3d.errors import DataValidationError, FormatError
from mir3d.services.index_service import (
    IndexBuilder,
    build_index,
    euclidean_distance,
    index_paths,
    load_index,
    save_index,
    search,
)


def _random_corpus(rng, n, dim):
    # Small integer grid so that duplicate vectors and distance ties are common
    vectors = rng.integers(-3, 4, size=(n, dim)).astype(np.float32)
    keys = [f"k{i:04d}" for i in rng.permutation(n)]
    return list(zip(keys, vectors))


def _oracle(items, query, k):
    ranked = sorted((euclidean_distance(query, v), key) for key, v in items)
    return [(key, d) for d, key in ranked[:k]]


class TestEuclideanDistance:
    """Tests for the distance function."""

    def test_value(self):
        assert euclidean_distance([0.0, 0.0], [3.0, 4.0]) == 5.0

    def test_dimension_mismatch(self):
        with pytest.raises(DataValidationError):
            euclidean_distance([0.0], [0.0, 1.0])

    def test_non_finite(self):
        with pytest.raises(DataValidationError):
            euclidean_distance([np.inf], [0.0])


class TestSearch:
    """Tests for exact search."""

    def test_matches_brute_force_oracle(self):
        """Random corpora with ties: same keys, same order, same distances."""
        rng = np.random.default_rng(1234)
        for _ in range(200):
            n = int(rng.integers(1, 1001))
            dim = int(rng.integers(1, 65))
            items = _random_corpus(rng, n, dim)
            index = build_index(items, dim)
            query = rng.integers(-3, 4, size=dim).astype(np.float32)
            k = int(rng.integers(1, n + 5))

            hits = search(index, query, k)
            assert [(h.key, h.distance) for h in hits] == _oracle(items, query, k)

    def test_k_larger_than_index(self):
        index = build_index([("a", [0.0]), ("b", [1.0])], 1)
        assert [h.key for h in index.search([0.0], 10)] == ["a", "b"]

    def test_ties_broken_by_key(self):
        index = build_index([("b", [1.0]), ("c", [-1.0]), ("a", [1.0])], 1)
        assert [h.key for h in index.search([0.0], 3)] == ["a", "b", "c"]

    def test_empty_index(self):
        assert IndexBuilder(dim=3).freeze().search([0.0, 0.0, 0.0], 5) == []

    def test_k_must_be_positive(self):
        index = build_index([("a", [0.0])], 1)
        with pytest.raises(DataValidationError):
            index.search([0.0], 0)

    def test_query_dimension_mismatch(self):
        index = build_index([("a", [0.0, 0.0])], 2)
        with pytest.raises(DataValidationError, match="dim"):
            index.search([0.0], 1)

    def test_parallel_scan_equals_sequential(self):
        rng = np.random.default_rng(5)
        items = _random_corpus(rng, 9000, 8)
        index = build_index(items, 8)
        for _ in range(5):
            query = rng.integers(-3, 4, size=8).astype(np.float32)
            assert search(index, query, 50, threads=4) == search(index, query, 50, threads=1)


class TestIndexBuilder:
    """Tests for the build phase."""

    def test_duplicate_key(self):
        builder = IndexBuilder(dim=1)
        builder.add("a", [0.0])
        with pytest.raises(DataValidationError, match="duplicate"):
            builder.add("a", [1.0])

    def test_wrong_length(self):
        with pytest.raises(DataValidationError):
            IndexBuilder(dim=2).add("a", [0.0])

    def test_non_finite(self):
        with pytest.raises(DataValidationError):
            IndexBuilder(dim=1).add("a", [np.nan])

    def test_unknown_kind(self):
        with pytest.raises(DataValidationError):
            IndexBuilder(dim=1, kind="volume-mode")

    def test_frozen_vectors_read_only(self):
        index = build_index([("a", [0.0])], 1)
        assert index.frozen
        with pytest.raises(ValueError):
            index.vectors[0, 0] = 1.0


class TestPersistence:
    """Tests for save_index / load_index."""

    def test_round_trip_searches_identically(self, temp_dir):
        rng = np.random.default_rng(9)
        items = [(f"v{i}#{j}", rng.standard_normal(6).astype(np.float32)) for i in range(10) for j in range(3)]
        index = build_index(items, 6)
        save_index(index, temp_dir)
        loaded = load_index(temp_dir, "slice")

        assert loaded.keys == index.keys
        assert loaded.kind == "slice"
        np.testing.assert_array_equal(loaded.vectors, index.vectors)
        query = rng.standard_normal(6)
        assert loaded.search(query, 7) == index.search(query, 7)

    def test_deterministic_bytes(self, temp_dir):
        items = [("b", [1.0, 2.0]), ("a", [3.0, 4.0])]
        save_index(build_index(items, 2, kind="volume-max"), temp_dir / "one")
        save_index(build_index(list(reversed(items)), 2, kind="volume-max"), temp_dir / "two")
        for first, second in zip(index_paths(temp_dir / "one", "volume-max"), index_paths(temp_dir / "two", "volume-max")):
            assert first.read_bytes() == second.read_bytes()

    def test_missing_index(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            load_index(temp_dir, "slice")

    def test_corrupt_metadata(self, temp_dir):
        save_index(build_index([("a", [0.0])], 1), temp_dir)
        index_paths(temp_dir, "slice")[2].write_text("{not json", encoding="utf-8")
        with pytest.raises(FormatError):
            load_index(temp_dir, "slice")

    def test_keys_disagree_with_vectors(self, temp_dir):
        save_index(build_index([("a", [0.0]), ("b", [1.0])], 1), temp_dir)
        index_paths(temp_dir, "slice")[1].write_text("a\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_index(temp_dir, "slice")

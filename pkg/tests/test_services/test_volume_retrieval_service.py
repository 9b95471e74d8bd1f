"""Tests for pooled volume retrieval."""

import numpy as np
import pytest

from mir3d.errors import DataValidationError
from mir3d.models import POOLING_METHODS
from mir3d.services.manifest_service import load_volume_embeddings
from mir3d.services.volume_retrieval_service import build_volume_index, pool_embeddings, volume_search
from tests.conftest import make_matrix

ORACLES = {
    "median": lambda column: float(np.sort(column)[len(column) // 2])
    if len(column) % 2
    else float((np.sort(column)[len(column) // 2 - 1] + np.sort(column)[len(column) // 2]) / 2),
    "max": lambda column: float(max(column)),
    "average": lambda column: float(sum(column) / len(column)),
    "std": lambda column: float(np.sqrt(sum((x - sum(column) / len(column)) ** 2 for x in column) / len(column))),
}


class TestPooling:
    """Tests for pool_embeddings."""

    def test_against_per_component_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            rows, dim = int(rng.integers(1, 12)), int(rng.integers(1, 9))
            matrix = make_matrix("v", rng.standard_normal((rows, dim)))
            data = matrix.vectors.astype(np.float64)
            for method in POOLING_METHODS:
                pooled = pool_embeddings(matrix, method).vector
                expected = [ORACLES[method](list(data[:, j])) for j in range(dim)]
                np.testing.assert_allclose(pooled, expected, rtol=0, atol=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        vectors = rng.standard_normal((9, 5))
        shuffled = vectors[rng.permutation(9)]
        for method in POOLING_METHODS:
            np.testing.assert_allclose(
                pool_embeddings(make_matrix("v", vectors), method).vector,
                pool_embeddings(make_matrix("v", shuffled), method).vector,
                rtol=0,
                atol=1e-12,
            )

    def test_max_at_least_average(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            matrix = make_matrix("v", rng.standard_normal((int(rng.integers(1, 10)), 6)))
            best = pool_embeddings(matrix, "max").vector
            mean = pool_embeddings(matrix, "average").vector
            assert np.all(best >= mean - 1e-12)

    def test_average_is_linear(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            x = rng.standard_normal((7, 4))
            y = rng.standard_normal((7, 4))
            a, b = rng.uniform(-2.0, 2.0, size=2)
            combined = make_matrix("v", a * x + b * y)
            expected = a * pool_embeddings(make_matrix("v", x), "average").vector + b * pool_embeddings(
                make_matrix("v", y), "average"
            ).vector
            np.testing.assert_allclose(pool_embeddings(combined, "average").vector, expected, atol=1e-5)

    def test_std_of_constant_rows_is_zero(self):
        matrix = make_matrix("v", [[1.5, -2.0]] * 4)
        assert pool_embeddings(matrix, "std").vector.tolist() == [0.0, 0.0]

    def test_empty_matrix(self):
        empty = make_matrix("v", np.zeros((0, 3)))
        with pytest.raises(DataValidationError):
            pool_embeddings(empty, "average")


class TestVolumeIndex:
    """Tests for build_volume_index and volume_search."""

    def test_train_split_only(self, tiny_dataset):
        index = build_volume_index(tiny_dataset, "average")
        assert index.keys == ("a1", "a2", "a3", "b1", "b2", "b3")
        assert index.kind == "volume-average"

    def test_search_ranks_own_group_first(self, tiny_dataset):
        index = build_volume_index(tiny_dataset, "median")
        query = make_matrix("aq", [[0.1, 0.1], [0.0, 0.1]])
        ranked = volume_search(index, query, "median")
        assert len(ranked) == 6
        assert set(ranked.volume_ids()[:3]) == {"a1", "a2", "a3"}
        scores = [item.score for item in ranked.items]
        assert scores == sorted(scores, reverse=True)

    def test_k_truncates(self, tiny_dataset):
        index = build_volume_index(tiny_dataset, "max")
        assert len(volume_search(index, make_matrix("bq", [[5.1, 5.1]]), "max", k=2)) == 2

    def test_pooling_mismatch(self, tiny_dataset):
        index = build_volume_index(tiny_dataset, "max")
        with pytest.raises(DataValidationError, match="mismatch"):
            volume_search(index, make_matrix("bq", [[5.1, 5.1]]), "average")

    @pytest.mark.parametrize("method", POOLING_METHODS)
    def test_indexed_volume_finds_itself_first(self, tiny_dataset, method):
        """A train volume queried under an unrelated id ranks its own pooled vector first at distance 0."""
        index = build_volume_index(tiny_dataset, method)
        matrix = load_volume_embeddings(tiny_dataset, tiny_dataset.get("b3"))
        query = make_matrix("b3-copy", matrix.vectors)
        ranked = volume_search(index, query, method)
        assert ranked.volume_ids()[0] == "b3"
        assert ranked.items[0].score == pytest.approx(1.0, abs=1e-6)

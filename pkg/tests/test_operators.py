"""Operator layer: maps, realizations, pairs, augmentation, Matrix Market IO."""

import threading

import numpy as np
import pytest
import scipy.sparse
from hypothesis import given, strategies as st

from unmatched import mmio, solvers
from unmatched.operators import (
    DenseMatrix,
    LinearMap,
    ShapeError,
    SparseMatrix,
    UnmatchedPair,
    augment,
    augment_rhs,
    identity_map,
    to_dense_array,
)

from conftest import make_small_pair_arrays


class TestApply:
    def test_identity(self):
        m = identity_map(3)
        np.testing.assert_array_equal(m.apply([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_dense_hand_case(self):
        m = DenseMatrix([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(m.apply([1.0, 1.0]), [3.0, 7.0])

    def test_sparse_matches_densified(self):
        rng = np.random.default_rng(3)
        dense = rng.standard_normal((50, 40))
        dense[rng.random((50, 40)) < 0.8] = 0.0
        sp = SparseMatrix.from_scipy(scipy.sparse.csr_matrix(dense))
        for _ in range(20):
            x = rng.standard_normal(40)
            got, want = sp.apply(x), dense @ x
            assert np.linalg.norm(got - want) <= 1e-14 * max(
                np.linalg.norm(want), 1.0)

    def test_shape_error_names_lengths(self):
        m = DenseMatrix([[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(ShapeError, match="length 3, expected 2"):
            m.apply([1.0, 2.0, 3.0])

    def test_linearity_probe(self):
        rng = np.random.default_rng(11)
        maps = [
            DenseMatrix(rng.standard_normal((7, 5))),
            SparseMatrix.from_scipy(
                scipy.sparse.random(9, 6, density=0.4, random_state=4)),
            identity_map(6),
        ]
        for m in maps:
            for _ in range(100):
                x = rng.standard_normal(m.cols)
                y = rng.standard_normal(m.cols)
                lhs = m.apply(x + y)
                rhs = m.apply(x) + m.apply(y)
                assert np.linalg.norm(lhs - rhs) <= 1e-12 * (
                    np.linalg.norm(x) + np.linalg.norm(y) + 1.0)

    def test_apply_is_deterministic(self):
        rng = np.random.default_rng(0)
        m = DenseMatrix(rng.standard_normal((8, 8)))
        x = rng.standard_normal(8)
        assert np.array_equal(m.apply(x), m.apply(x))

    def test_invalid_shapes_rejected(self):
        with pytest.raises(ShapeError):
            LinearMap(0, 3, lambda x: x)
        with pytest.raises(ShapeError):
            DenseMatrix(np.zeros(3))

    def test_sparse_rejects_unsorted_columns(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            SparseMatrix(2, 3, [0, 2, 2], [2, 0], [1.0, 1.0])


class TestPair:
    def test_shape_validation(self):
        with pytest.raises(ShapeError, match="incompatible pair"):
            UnmatchedPair(DenseMatrix(np.ones((3, 2))),
                          DenseMatrix(np.ones((3, 2))))

    def test_composed_identity(self):
        pair = UnmatchedPair(identity_map(4), identity_map(4))
        x = np.arange(4.0)
        np.testing.assert_array_equal(pair.composed().apply(x), x)

    def test_composed_diagonal_hand_case(self):
        pair = UnmatchedPair.from_arrays(np.diag([1.0, 2.0]),
                                         np.diag([3.0, 4.0]))
        comp = pair.composed()
        np.testing.assert_allclose(comp.apply([1.0, 0.0]), [3.0, 0.0])
        np.testing.assert_allclose(comp.apply([0.0, 1.0]), [0.0, 8.0])

    def test_composed_matches_dense_product(self):
        a, b = make_small_pair_arrays(-2.0, 0.05, seed=5)
        pair = UnmatchedPair.from_arrays(a, b)
        rng = np.random.default_rng(6)
        x = rng.standard_normal(64)
        got = pair.composed().apply(x)
        want = b @ (a @ x)
        assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)

    def test_composed_is_back_of_forward_bitwise(self):
        a, b = make_small_pair_arrays(-2.0, 0.05, seed=7)
        pair = UnmatchedPair.from_arrays(a, b)
        x = np.random.default_rng(8).standard_normal(64)
        assert np.array_equal(pair.composed().apply(x),
                              pair.back.apply(pair.forward.apply(x)))

    def test_mvm_accounting(self):
        pair = UnmatchedPair.from_arrays(np.eye(5), np.eye(5))
        comp = pair.composed()
        for k in range(1, 8):
            comp.apply(np.ones(5))
            assert pair.mvm_count == 2 * k

    def test_counter_is_thread_safe(self):
        pair = UnmatchedPair.from_arrays(np.eye(4), np.eye(4))
        x = np.ones(4)

        def work():
            for _ in range(200):
                pair.forward.apply(x)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert pair.mvm_count == 8 * 200

    def test_densify_does_not_count(self):
        pair = UnmatchedPair.from_arrays(np.eye(3), 2 * np.eye(3))
        a, b = pair.densify()
        np.testing.assert_array_equal(a, np.eye(3))
        np.testing.assert_array_equal(b, 2 * np.eye(3))
        assert pair.mvm_count == 0

    def test_to_dense_array_probes_opaque_maps(self):
        m = LinearMap(2, 2, lambda x: np.array([2 * x[0], 3 * x[1]]))
        np.testing.assert_array_equal(to_dense_array(m), np.diag([2.0, 3.0]))


class TestAugment:
    def test_alpha_zero_reduces_to_plain_iterates(self):
        a, b = make_small_pair_arrays(-1.0, 0.05, seed=1)
        base = UnmatchedPair.from_arrays(a, b)
        aug = augment(UnmatchedPair.from_arrays(a, b), 0.0)
        rhs = np.random.default_rng(2).standard_normal(64)
        cfg = solvers.IterationConfig(omega=1.0, max_iters=40)
        plain = solvers.iterate(base, rhs, cfg)
        padded = solvers.iterate(aug, augment_rhs(rhs, 64), cfg)
        np.testing.assert_array_equal(plain.x, padded.x)

    def test_identity_pair_alpha_one(self):
        pair = augment(UnmatchedPair.from_arrays(np.eye(2), np.eye(2)), 1.0)
        comp = pair.composed()
        np.testing.assert_allclose(comp.apply([1.0, 0.0]), [2.0, 0.0])
        np.testing.assert_allclose(comp.apply([0.0, 1.0]), [0.0, 2.0])

    def test_matches_dense_shifted_operator(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((10, 8))
        b = rng.standard_normal((8, 10))
        aug = augment(UnmatchedPair.from_arrays(a, b), 0.3)
        comp = aug.composed()
        shifted = b @ a + 0.3 * np.eye(8)
        for _ in range(10):
            x = rng.standard_normal(8)
            want = shifted @ x
            assert np.linalg.norm(comp.apply(x) - want) \
                <= 1e-13 * np.linalg.norm(want)

    def test_augmented_identity_property(self):
        rng = np.random.default_rng(10)
        a = rng.standard_normal((6, 9))
        b = rng.standard_normal((9, 6))
        base = UnmatchedPair.from_arrays(a, b)
        for alpha in (0.0, 0.7, 2.5):
            aug = augment(UnmatchedPair.from_arrays(a, b), alpha)
            for _ in range(5):
                x = rng.standard_normal(9)
                want = base.composed().apply(x) + alpha * x
                got = aug.composed().apply(x)
                assert np.linalg.norm(got - want) <= 1e-13 * max(
                    np.linalg.norm(want), 1.0)

    def test_negative_alpha_rejected(self):
        pair = UnmatchedPair.from_arrays(np.eye(2), np.eye(2))
        with pytest.raises(ValueError, match="nonnegative"):
            augment(pair, -0.1)

    def test_augment_shapes_and_counter(self):
        a, b = np.ones((3, 2)), np.ones((2, 3))
        base = UnmatchedPair.from_arrays(a, b)
        aug = augment(base, 0.5)
        assert aug.forward.shape == (5, 2)
        assert aug.back.shape == (2, 5)
        aug.composed().apply(np.ones(2))
        assert aug.mvm_count == 2
        assert base.mvm_count == 0  # augmented pair owns its own counter


class TestAugmentRhs:
    def test_hand_case(self):
        np.testing.assert_array_equal(augment_rhs([1.0, 2.0], 2),
                                      [1.0, 2.0, 0.0, 0.0])

    def test_empty_data(self):
        np.testing.assert_array_equal(augment_rhs([], 3), np.zeros(3))

    @given(st.integers(0, 30), st.integers(0, 30))
    def test_length_is_m_plus_n(self, m, n):
        out = augment_rhs(np.ones(m), n)
        assert out.shape == (m + n,)
        assert np.all(out[m:] == 0.0)


class TestMatrixMarket:
    def test_dense_round_trip(self, tmp_path):
        a = np.array([[1.5, -2.0], [0.0, 3.25], [4.0, 0.5]])
        path = tmp_path / "dense.mtx"
        mmio.write_matrix(path, a)
        back = mmio.read_matrix(path)
        assert isinstance(back, DenseMatrix)
        np.testing.assert_array_equal(back.array, a)
        text = path.read_text()
        assert text.startswith("%%MatrixMarket matrix array")

    def test_sparse_round_trip_one_based_coordinates(self, tmp_path):
        m = scipy.sparse.csr_matrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
        path = tmp_path / "sparse.mtx"
        mmio.write_matrix(path, SparseMatrix.from_scipy(m))
        again = mmio.read_matrix(path)
        assert isinstance(again, SparseMatrix)
        np.testing.assert_array_equal(again.to_array(), m.toarray())
        body = [line for line in path.read_text().splitlines()
                if line and not line.startswith("%")]
        entries = {tuple(line.split()[:2]) for line in body[1:]}
        assert entries == {("1", "2"), ("2", "1")}  # 1-based indices

    def test_vector_round_trip(self, tmp_path):
        v = np.array([1.0, -2.5, 3.75])
        path = tmp_path / "vec.mtx"
        mmio.write_vector(path, v)
        np.testing.assert_array_equal(mmio.read_vector(path), v)

    def test_vector_rejects_matrices(self, tmp_path):
        path = tmp_path / "mat.mtx"
        mmio.write_matrix(path, np.ones((2, 2)))
        with pytest.raises(ValueError, match="single-column"):
            mmio.read_vector(path)

"""Kernel families, Gram builders and the memory accounting."""

import itertools

import numpy as np
import pytest

from tkreg import (
    CapacityError,
    IndexScheme,
    InvalidOrderError,
    RangeError,
    ShapeError,
    TensorKernelSpec,
    UnsupportedKernelError,
    build_dense_gram_matrix,
    build_packed_gram,
    contract_objective,
    kernel_eval,
    memory_report,
    unique_count,
)

LINEAR4 = TensorKernelSpec(family="linear", q=4)
POLY2 = TensorKernelSpec(family="polynomial", q=4, degree=2)
EXP4 = TensorKernelSpec(family="exponential", q=4)


class TestSpecValidation:
    def test_polynomial_needs_degree(self):
        with pytest.raises(ValueError):
            TensorKernelSpec(family="polynomial", q=4)
        with pytest.raises(ValueError):
            TensorKernelSpec(family="polynomial", q=4, degree=0)

    def test_degree_forbidden_elsewhere(self):
        with pytest.raises(ValueError):
            TensorKernelSpec(family="linear", q=4, degree=2)

    def test_odd_order_rejected(self):
        with pytest.raises(InvalidOrderError):
            TensorKernelSpec(family="linear", q=3)
        with pytest.raises(InvalidOrderError):
            TensorKernelSpec(family="linear", q=0)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            TensorKernelSpec(family="gaussian", q=4)


class TestKernelEval:
    def test_linear_hand_values(self):
        pts = np.array([[1, 2], [0, 1], [1, 1], [2, 0]], dtype=float)
        assert kernel_eval(LINEAR4, pts) == 0.0
        same = np.tile([1.0, 2.0], (4, 1))
        assert kernel_eval(LINEAR4, same) == 17.0
        assert kernel_eval(POLY2, same) == 289.0

    def test_exponential_at_zero(self):
        assert kernel_eval(EXP4, np.zeros((4, 3))) == 1.0

    def test_polynomial_degree_one_is_linear(self):
        rng = np.random.default_rng(0)
        poly1 = TensorKernelSpec(family="polynomial", q=4, degree=1)
        for _ in range(20):
            pts = rng.standard_normal((4, 5))
            assert kernel_eval(poly1, pts) == kernel_eval(LINEAR4, pts)

    @pytest.mark.parametrize("spec", [LINEAR4, POLY2, EXP4])
    def test_symmetry_under_permutations(self, spec):
        rng = np.random.default_rng(42)
        pts = rng.standard_normal((4, 6))
        base = kernel_eval(spec, pts)
        for _ in range(50):
            perm = rng.permutation(4)
            assert kernel_eval(spec, pts[perm]) == pytest.approx(
                base, rel=1e-10, abs=1e-12
            )

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            kernel_eval(LINEAR4, [[1.0, 2.0], [1.0], [1.0], [1.0]])
        with pytest.raises(ShapeError):
            kernel_eval(LINEAR4, np.zeros((3, 2)))

    def test_exponential_overflow_guard(self):
        pts = np.full((4, 1), 40.0)  # sum of products = 40**4 > 700
        with pytest.raises(RangeError):
            kernel_eval(EXP4, pts)


class TestPackedGram:
    def test_single_point(self):
        x = np.array([[0.3, -1.2, 0.7]])
        gram = build_packed_gram(LINEAR4, x)
        assert gram.values.shape == (1,)
        assert gram.values[0] == kernel_eval(LINEAR4, np.tile(x, (4, 1)))

    def test_slots_equal_kernel_eval_exactly(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((6, 4))
        for spec in (LINEAR4, POLY2, EXP4, TensorKernelSpec("linear", q=2)):
            gram = build_packed_gram(spec, X * 0.4)
            for slot, tup in enumerate(
                itertools.combinations_with_replacement(range(6), spec.q)
            ):
                expected = kernel_eval(spec, 0.4 * X[list(tup)])
                assert gram.values[slot] == expected

    def test_entry_count_n20(self):
        rng = np.random.default_rng(2)
        gram = build_packed_gram(LINEAR4, rng.standard_normal((20, 3)))
        assert gram.values.shape[0] == unique_count(20, 4) == 8855

    def test_brute_force_dense_oracle_n10(self):
        # every slot equals the value the full 10^4-entry tensor would hold
        rng = np.random.default_rng(3)
        X = rng.standard_normal((10, 5))
        gram = build_packed_gram(LINEAR4, X)
        scheme = gram.scheme
        for _ in range(300):
            tup = tuple(rng.integers(0, 10, size=4))
            brute = float(np.sum(X[tup[0]] * X[tup[1]] * X[tup[2]] * X[tup[3]]))
            assert gram.get(tup) == pytest.approx(brute, rel=1e-12)
        assert scheme.unique_count == 715

    @pytest.mark.parametrize("spec", [LINEAR4, POLY2, EXP4])
    def test_positive_definite(self, spec):
        rng = np.random.default_rng(4)
        for n in (2, 4, 6):
            X = 0.3 * rng.standard_normal((n, 3))
            gram = build_packed_gram(spec, X)
            for _ in range(10):
                alpha = rng.standard_normal(n)
                quad = spec.q * contract_objective(gram, alpha)
                assert quad >= -1e-12

    def test_overflow_propagates(self):
        X = np.full((3, 1), 40.0)
        with pytest.raises(RangeError):
            build_packed_gram(EXP4, X)


class TestDenseBaseline:
    def test_tiny_hand_case(self):
        X = np.array([[1.0], [2.0]])
        dense = build_dense_gram_matrix(LINEAR4, X)
        assert dense.matrix.shape == (3, 3)
        assert dense.entry((0, 1), (0, 1)) == 4.0  # (1*2) * (1*2)

    @pytest.mark.parametrize("spec", [LINEAR4, POLY2])
    def test_exact_match_with_packed(self, spec):
        rng = np.random.default_rng(5)
        for n in (2, 5, 12):
            X = rng.standard_normal((n, 7))
            gram = build_packed_gram(spec, X)
            dense = build_dense_gram_matrix(spec, X)
            for slot, tup in enumerate(
                itertools.combinations_with_replacement(range(n), 4)
            ):
                assert dense.entry(tup[:2], tup[2:]) == gram.values[slot]

    def test_entry_symmetric_in_pair_order(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((6, 3))
        dense = build_dense_gram_matrix(LINEAR4, X)
        gram = build_packed_gram(LINEAR4, X)
        for _ in range(100):
            tup = tuple(rng.integers(0, 6, size=4))
            assert dense.entry(tup[:2], tup[2:]) == pytest.approx(
                gram.get(tup), rel=1e-12
            )

    def test_storage_counts_n10(self):
        X = np.random.default_rng(7).standard_normal((10, 2))
        dense = build_dense_gram_matrix(LINEAR4, X)
        assert dense.stored_entries == 55 ** 2 == 3025
        assert unique_count(10, 4) == 715

    def test_cap_refusal(self):
        X = np.zeros((9, 2))
        with pytest.raises(CapacityError):
            build_dense_gram_matrix(LINEAR4, X, cap=8)

    def test_exponential_unsupported(self):
        with pytest.raises(UnsupportedKernelError):
            build_dense_gram_matrix(EXP4, np.zeros((3, 2)))

    def test_order2_baseline_is_classic_gram(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((5, 3))
        dense = build_dense_gram_matrix(TensorKernelSpec("linear", q=2), X)
        assert dense.matrix.shape == (5, 5)
        assert np.allclose(dense.matrix, X @ X.T, rtol=1e-12, atol=1e-12)


class TestMemoryReport:
    def test_paper_reduction_percentages(self):
        # (n, q) -> (unique entries, reduction percent)
        table = {
            (10, 2): (55, 45.00), (20, 2): (210, 47.50), (30, 2): (465, 48.33),
            (40, 2): (820, 48.75), (50, 2): (1275, 49.00), (100, 2): (5050, 49.50),
            (10, 3): (220, 78.00), (20, 3): (1540, 80.75), (30, 3): (4960, 81.63),
            (40, 3): (11480, 82.06), (50, 3): (22100, 82.32), (100, 3): (171700, 82.83),
            (10, 4): (715, 92.85), (20, 4): (8855, 94.47), (30, 4): (40920, 94.95),
            (40, 4): (123410, 95.18), (50, 4): (292825, 95.31), (100, 4): (4421275, 95.58),
        }
        for (n, q), (count, percent) in table.items():
            assert unique_count(n, q) == count
            report = memory_report(n, q)
            assert report["packed_bytes"] == count * 8
            assert report["dense_bytes"] == n ** q * 8
            assert report["reduction_fraction"] * 100 == pytest.approx(
                percent, abs=0.01
            )

    def test_single_point(self):
        report = memory_report(1, 4)
        assert report["packed_bytes"] == report["dense_bytes"] == 8
        assert report["reduction_fraction"] == 0.0

    def test_memory_formulas_q4(self):
        # full tensor: n^4 doubles; packed: n(n+1)(n+2)(n+3)/24 doubles
        for n in (60, 130, 150):
            report = memory_report(n, 4)
            assert report["dense_bytes"] == n ** 4 * 8
            assert report["packed_bytes"] == n * (n + 1) * (n + 2) * (n + 3) // 24 * 8

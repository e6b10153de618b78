import numpy as np
import pytest

from cmitest.kernels import (
    GAUSSIAN,
    LAPLACIAN,
    KernelSpec,
    eval_kernel,
    gram_matrix,
    median_heuristic,
)


class TestKernelSpec:
    def test_rejects_bad_family(self):
        with pytest.raises(ValueError, match="family"):
            KernelSpec("cauchy", 1.0)

    @pytest.mark.parametrize("bw", [0.0, -1.0, np.inf, np.nan])
    def test_rejects_bad_bandwidth(self, bw):
        with pytest.raises(ValueError, match="bandwidth"):
            KernelSpec(GAUSSIAN, bw)


class TestEvalKernel:
    def test_gaussian_closed_form(self):
        spec = KernelSpec(GAUSSIAN, 1.0)
        assert eval_kernel(spec, (0, 0), (1, 1)) == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_laplacian_closed_form(self):
        spec = KernelSpec(LAPLACIAN, 2.0)
        assert eval_kernel(spec, (0, 0), (1, 1)) == pytest.approx(np.exp(-1.0), rel=1e-12)

    @pytest.mark.parametrize("family", [GAUSSIAN, LAPLACIAN])
    def test_identity_case(self, family):
        spec = KernelSpec(family, 0.7)
        a = np.array([1.3, -2.0, 0.4])
        assert eval_kernel(spec, a, a) == 1.0

    @pytest.mark.parametrize("family", [GAUSSIAN, LAPLACIAN])
    def test_symmetry_and_bounds(self, family):
        spec = KernelSpec(family, 1.4)
        rng = np.random.default_rng(0)
        for _ in range(50):
            a, b = rng.standard_normal((2, 4))
            k_ab = eval_kernel(spec, a, b)
            assert k_ab == pytest.approx(eval_kernel(spec, b, a), rel=1e-15)
            assert 0.0 < k_ab <= 1.0

    @pytest.mark.parametrize("family", [GAUSSIAN, LAPLACIAN])
    def test_translation_invariance(self, family):
        spec = KernelSpec(family, 0.9)
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b, c = rng.standard_normal((3, 5))
            assert eval_kernel(spec, a + c, b + c) == pytest.approx(
                eval_kernel(spec, a, b), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            eval_kernel(KernelSpec(GAUSSIAN, 1.0), (1, 2), (1, 2, 3))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            eval_kernel(KernelSpec(GAUSSIAN, 1.0), (np.nan, 0.0), (0.0, 0.0))


class TestGramMatrix:
    def test_identical_rows_all_ones(self):
        a = np.array([[2.0, 3.0], [2.0, 3.0]])
        g = gram_matrix(KernelSpec(GAUSSIAN, 1.0), a, a)
        assert np.allclose(g, 1.0)

    def test_small_laplacian_column(self):
        a = np.array([[0.0], [1.0]])
        b = np.array([[0.0]])
        g = gram_matrix(KernelSpec(LAPLACIAN, 1.0), a, b)
        assert g == pytest.approx(np.array([[1.0], [np.exp(-1.0)]]), rel=1e-12)

    def test_matches_scalar_eval(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((5, 3))
        spec = KernelSpec(LAPLACIAN, 0.8)
        g = gram_matrix(spec, a, b)
        for i in range(4):
            for j in range(5):
                assert g[i, j] == pytest.approx(eval_kernel(spec, a[i], b[j]), rel=1e-12)

    @pytest.mark.parametrize("family", [GAUSSIAN, LAPLACIAN])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gram_psd(self, family, seed):
        # eigen-decomposition oracle for positive semidefiniteness
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((5, 3))
        g = gram_matrix(KernelSpec(family, 1.1), a, a)
        assert np.allclose(g, g.T)
        assert np.linalg.eigvalsh(g).min() >= -1e-10

    def test_gram_psd_larger(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((60, 4))
        g = gram_matrix(KernelSpec(GAUSSIAN, 0.5), a, a)
        assert np.linalg.eigvalsh(g).min() >= -1e-8

    def test_column_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            gram_matrix(KernelSpec(GAUSSIAN, 1.0), np.zeros((2, 2)), np.zeros((2, 3)))


class TestMedianHeuristic:
    def test_three_point_enumeration(self):
        # brute-force oracle: distances {1, 2, 3}, median 2
        pts = np.array([[0.0], [1.0], [3.0]])
        assert median_heuristic(pts, LAPLACIAN) == pytest.approx(2.0)

    def test_single_pair(self):
        pts = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert median_heuristic(pts, GAUSSIAN) == pytest.approx(5.0)

    def test_lower_median_on_even_pool(self):
        # four points on a line: distances {1, 1, 1, 2, 2, 3}; lower median = 1
        pts = np.array([[0.0], [1.0], [2.0], [3.0]])
        assert median_heuristic(pts, LAPLACIAN) == pytest.approx(1.0)

    def test_standard_normal_band(self):
        # population median of |N(0,2)| = sqrt(2) * 0.6745 ~= 0.954
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((1000, 1))
        assert 0.8 <= median_heuristic(pts, GAUSSIAN) <= 1.5

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        pts = rng.standard_normal((40, 3))
        perm = rng.permutation(40)
        assert median_heuristic(pts, LAPLACIAN) == pytest.approx(
            median_heuristic(pts[perm], LAPLACIAN), rel=1e-15)

    def test_subsample_cap_deterministic(self):
        rng = np.random.default_rng(5)
        pts = rng.standard_normal((1500, 2))
        assert median_heuristic(pts, GAUSSIAN) == median_heuristic(pts, GAUSSIAN)

    def test_identical_points_error(self):
        pts = np.ones((5, 2))
        with pytest.raises(ValueError, match="degenerate"):
            median_heuristic(pts, GAUSSIAN)

    def test_zero_median_errors_even_if_not_all_identical(self):
        # {0, 0, 0, 1}: pool {0, 0, 0, 1, 1, 1}, lower median 0 -> no valid bandwidth
        pts = np.array([[0.0], [0.0], [0.0], [1.0]])
        with pytest.raises(ValueError, match="zero bandwidth"):
            median_heuristic(pts, LAPLACIAN)

    def test_needs_two_points(self):
        with pytest.raises(ValueError, match="two points"):
            median_heuristic(np.zeros((1, 2)), GAUSSIAN)

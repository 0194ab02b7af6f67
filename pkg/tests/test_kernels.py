"""Backend equality and correctness of the array kernels.

The numpy reference implementations (*_np) are checked against naive
loop oracles, and the active backend (numba when available) is checked
against the references for exact bit equality, which is the contract the
rest of the package relies on.
"""

import numpy as np
import pytest

from auditsim import kernels


def random_groups(seed, n=400, d=3, g=17):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    codes = rng.integers(0, g, size=n)
    codes[codes == g - 2] = g - 1  # leave one group empty on purpose
    return np.ascontiguousarray(x), codes.astype(np.int64), g


class TestGroupStats:
    def test_matches_loop_oracle(self):
        x, codes, g = random_groups(0)
        sums, counts = kernels.group_stats_np(x, codes, g)
        ref_sums = np.zeros((g, x.shape[1]))
        ref_counts = np.zeros(g, dtype=np.int64)
        for i in range(len(x)):
            ref_sums[codes[i]] += x[i]
            ref_counts[codes[i]] += 1
        np.testing.assert_allclose(sums, ref_sums, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(counts, ref_counts)
        assert counts[g - 2] == 0

    def test_backend_equals_reference(self):
        x, codes, g = random_groups(1)
        a = kernels.group_stats(x, codes, g)
        b = kernels.group_stats_np(x, codes, g)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestSubtractGroupMeans:
    def test_demeans_within_groups(self):
        x, codes, g = random_groups(2)
        sums, counts = kernels.group_stats_np(x, codes, g)
        means = np.zeros_like(sums)
        nonzero = counts > 0
        means[nonzero] = sums[nonzero] / counts[nonzero, None]
        out = kernels.subtract_group_means_np(x, codes, means)
        np.testing.assert_allclose(out, x - means[codes], rtol=0, atol=0)
        for c in np.unique(codes):
            grp = out[codes == c]
            np.testing.assert_allclose(grp.mean(axis=0), 0.0, atol=1e-13)

    def test_backend_equals_reference(self):
        x, codes, g = random_groups(3)
        sums, counts = kernels.group_stats_np(x, codes, g)
        means = sums / np.maximum(counts, 1)[:, None]
        np.testing.assert_array_equal(
            kernels.subtract_group_means(x, codes, means),
            kernels.subtract_group_means_np(x, codes, means))


class TestClusterScoreSums:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((300, 4))
        resid = rng.standard_normal(300)
        codes = rng.integers(0, 40, size=300).astype(np.int64)
        got = kernels.cluster_score_sums_np(x, resid, codes, 40)
        ref = np.zeros((40, 4))
        for i in range(300):
            ref[codes[i]] += x[i] * resid[i]
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)

    def test_backend_equals_reference(self):
        rng = np.random.default_rng(5)
        x = np.ascontiguousarray(rng.standard_normal((500, 6)))
        resid = rng.standard_normal(500)
        codes = rng.integers(0, 80, size=500).astype(np.int64)
        np.testing.assert_array_equal(
            kernels.cluster_score_sums(x, resid, codes, 80),
            kernels.cluster_score_sums_np(x, resid, codes, 80))


class TestLloydAssign:
    def test_matches_broadcast_oracle(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((250, 5))
        centers = rng.standard_normal((8, 5))
        labels, wss = kernels.lloyd_assign_np(
            np.ascontiguousarray(x), np.ascontiguousarray(centers))
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        np.testing.assert_array_equal(labels, d2.argmin(axis=1))
        assert wss == pytest.approx(d2.min(axis=1).sum(), rel=1e-12)

    def test_duplicate_center_tie_goes_low(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0]])
        centers = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
        labels, wss = kernels.lloyd_assign_np(x, centers)
        np.testing.assert_array_equal(labels, [2, 0])
        assert wss == 0.0

    def test_backend_equals_reference(self):
        rng = np.random.default_rng(7)
        x = np.ascontiguousarray(rng.standard_normal((400, 6)))
        centers = np.ascontiguousarray(rng.standard_normal((9, 6)))
        la, wa = kernels.lloyd_assign(x, centers)
        lb, wb = kernels.lloyd_assign_np(x, centers)
        np.testing.assert_array_equal(la, lb)
        assert wa == wb


class TestPointCenterSqdist:
    def test_matches_manual(self):
        rng = np.random.default_rng(8)
        x = np.ascontiguousarray(rng.standard_normal((120, 3)))
        centers = np.ascontiguousarray(rng.standard_normal((5, 3)))
        labels = rng.integers(0, 5, size=120).astype(np.int64)
        got = kernels.point_center_sqdist_np(x, centers, labels)
        ref = ((x - centers[labels]) ** 2).sum(axis=1)
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=0)

    def test_backend_equals_reference(self):
        rng = np.random.default_rng(9)
        x = np.ascontiguousarray(rng.standard_normal((200, 4)))
        centers = np.ascontiguousarray(rng.standard_normal((6, 4)))
        labels = rng.integers(0, 6, size=200).astype(np.int64)
        np.testing.assert_array_equal(
            kernels.point_center_sqdist(x, centers, labels),
            kernels.point_center_sqdist_np(x, centers, labels))


class TestHashRows:
    def make(self, seed, n=5000, d=4):
        rng = np.random.default_rng(seed)
        return rng.integers(0, 2**63, size=(n, d), dtype=np.int64).view(np.uint64)

    def test_deterministic_and_row_local(self):
        a = self.make(10)
        h1 = kernels.hash_rows_np(a)
        h2 = kernels.hash_rows_np(a.copy())
        np.testing.assert_array_equal(h1, h2)
        perm = np.random.default_rng(0).permutation(len(a))
        np.testing.assert_array_equal(kernels.hash_rows_np(a[perm]), h1[perm])

    def test_no_collisions_on_random_rows(self):
        h = kernels.hash_rows_np(self.make(11))
        assert len(np.unique(h)) == len(h)

    def test_column_order_matters(self):
        a = self.make(12, n=100)
        swapped = np.ascontiguousarray(a[:, ::-1])
        assert not np.array_equal(kernels.hash_rows_np(swapped),
                                  kernels.hash_rows_np(a))

    def test_backend_equals_reference(self):
        a = self.make(13)
        np.testing.assert_array_equal(kernels.hash_rows(a),
                                      kernels.hash_rows_np(a))


class TestBackendFlag:
    def test_backend_name(self):
        assert kernels.BACKEND in ("numba", "numpy")
        if kernels.HAS_NUMBA:
            assert kernels.BACKEND == "numba"

    def test_warmup_runs(self):
        kernels.warmup()

"""Hot numeric kernels with optional numba acceleration.

Every kernel here has a pure-numpy implementation and, when numba is
available, a jitted twin compiled from the same scalar loop. The backend
is chosen once at import time:

* ``AUDITSIM_NUMBA`` unset, ``"1"`` or ``"auto"``: use numba when it imports.
* ``AUDITSIM_NUMBA=0`` (also ``off``/``false``/``numpy``): force pure numpy.

Both paths iterate rows in the same order with ordinary (non-fastmath)
float arithmetic, so they produce bit-identical results; ``tests/test_kernels``
asserts exact equality and ``benchmarks/bench_kernels.py`` times the two.
All kernels are serial on purpose: reassociating parallel reductions would
break the byte-identical determinism the pipeline guarantees.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("AUDITSIM_NUMBA", "auto").strip().lower()
_want_numba = _flag not in ("0", "off", "false", "numpy")

HAS_NUMBA = False
if _want_numba:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"

_HASH_MULT1 = np.uint64(0xBF58476D1CE4E5B9)
_HASH_MULT2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


# ---------------------------------------------------------------------------
# pure-numpy reference implementations
# ---------------------------------------------------------------------------

def group_stats_np(x, gid, n_groups):
    """Per-group column sums and row counts in one logical pass.

    Parameters
    ----------
    x : (n, k) float64 array
    gid : (n,) int64 array of group codes in [0, n_groups)
    n_groups : int

    Returns
    -------
    sums : (n_groups, k) float64
    counts : (n_groups,) int64
    """
    n, k = x.shape
    sums = np.empty((n_groups, k))
    for j in range(k):
        sums[:, j] = np.bincount(gid, weights=x[:, j], minlength=n_groups)
    counts = np.bincount(gid, minlength=n_groups)
    return sums, counts.astype(np.int64)


def subtract_group_means_np(x, gid, means):
    """Demean the rows of ``x`` by their group's mean row (new array)."""
    return x - means[gid]


def cluster_score_sums_np(x, e, cid, n_clusters):
    """Sum of per-row scores x_i * e_i within each cluster.

    Returns an (n_clusters, k) array whose rows are the cluster score
    sums used by the sandwich covariance meat.
    """
    n, k = x.shape
    out = np.empty((n_clusters, k))
    for j in range(k):
        out[:, j] = np.bincount(cid, weights=x[:, j] * e, minlength=n_clusters)
    return out


def _lloyd_best_np(x, centers):
    """Per-row nearest center and its squared distance.

    Distances accumulate feature by feature and candidate centers are
    scanned in ascending order with a strict comparison, mirroring the
    compiled loop exactly so both backends produce the same bits.
    """
    n, d = x.shape
    k = centers.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    best = np.zeros(n)
    for j in range(d):
        diff = x[:, j] - centers[0, j]
        best += diff * diff
    for c in range(1, k):
        dist = np.zeros(n)
        for j in range(d):
            diff = x[:, j] - centers[c, j]
            dist += diff * diff
        closer = dist < best
        best = np.where(closer, dist, best)
        labels[closer] = c
    return labels, best


def lloyd_assign_np(x, centers):
    """Assign each row to its nearest center (squared Euclidean).

    Ties go to the lowest center index. Returns (labels, total_wss).
    """
    labels, best = _lloyd_best_np(x, centers)
    return labels, float(best.sum())


def point_center_sqdist_np(x, centers, labels):
    """Squared distance of each row to its assigned center."""
    diff = x - centers[labels]
    return (diff * diff).sum(axis=1)


def hash_rows_np(bits):
    """Order-independent 64-bit content hash of each row.

    ``bits`` is an (n, k) uint64 view of the row payload. The same row
    contents always produce the same hash regardless of position, which
    is what the canonical row ordering in the estimator relies on.
    """
    n, k = bits.shape
    h = np.full(n, _GOLDEN, dtype=np.uint64)
    for j in range(k):
        z = bits[:, j] + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _HASH_MULT1
        z = (z ^ (z >> np.uint64(27))) * _HASH_MULT2
        z = z ^ (z >> np.uint64(31))
        h = (h ^ z) * _HASH_MULT1
        h = h ^ (h >> np.uint64(29))
    return h


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _group_stats_nb(x, gid, n_groups):
        n, k = x.shape
        sums = np.zeros((n_groups, k))
        counts = np.zeros(n_groups, dtype=np.int64)
        for i in range(n):
            g = gid[i]
            counts[g] += 1
            for j in range(k):
                sums[g, j] += x[i, j]
        return sums, counts

    @njit(cache=True)
    def _subtract_group_means_nb(x, gid, means):
        n, k = x.shape
        out = np.empty((n, k))
        for i in range(n):
            g = gid[i]
            for j in range(k):
                out[i, j] = x[i, j] - means[g, j]
        return out

    @njit(cache=True)
    def _cluster_score_sums_nb(x, e, cid, n_clusters):
        n, k = x.shape
        out = np.zeros((n_clusters, k))
        for i in range(n):
            c = cid[i]
            ei = e[i]
            for j in range(k):
                out[c, j] += x[i, j] * ei
        return out

    @njit(cache=True)
    def _lloyd_best_nb(x, centers):
        n, d = x.shape
        k = centers.shape[0]
        labels = np.empty(n, dtype=np.int64)
        best = np.empty(n)
        for i in range(n):
            best_c = 0
            best_d = 0.0
            for j in range(d):
                diff = x[i, j] - centers[0, j]
                best_d += diff * diff
            for c in range(1, k):
                dist = 0.0
                for j in range(d):
                    diff = x[i, j] - centers[c, j]
                    dist += diff * diff
                if dist < best_d:
                    best_d = dist
                    best_c = c
            labels[i] = best_c
            best[i] = best_d
        return labels, best

    def _lloyd_assign_nb(x, centers):
        # The total reduces outside the compiled kernel through the same
        # numpy sum as the fallback, so both backends agree bit for bit.
        labels, best = _lloyd_best_nb(x, centers)
        return labels, float(best.sum())

    @njit(cache=True)
    def _point_center_sqdist_nb(x, centers, labels):
        n, d = x.shape
        out = np.empty(n)
        for i in range(n):
            c = labels[i]
            dist = 0.0
            for j in range(d):
                diff = x[i, j] - centers[c, j]
                dist += diff * diff
            out[i] = dist
        return out

    @njit(cache=True)
    def _hash_rows_nb(bits):
        n, k = bits.shape
        golden = np.uint64(0x9E3779B97F4A7C15)
        m1 = np.uint64(0xBF58476D1CE4E5B9)
        m2 = np.uint64(0x94D049BB133111EB)
        out = np.empty(n, dtype=np.uint64)
        for i in range(n):
            h = golden
            for j in range(k):
                z = bits[i, j] + golden
                z = (z ^ (z >> np.uint64(30))) * m1
                z = (z ^ (z >> np.uint64(27))) * m2
                z = z ^ (z >> np.uint64(31))
                h = (h ^ z) * m1
                h = h ^ (h >> np.uint64(29))
            out[i] = h
        return out

    group_stats = _group_stats_nb
    subtract_group_means = _subtract_group_means_nb
    cluster_score_sums = _cluster_score_sums_nb
    lloyd_assign = _lloyd_assign_nb
    point_center_sqdist = _point_center_sqdist_nb
    hash_rows = _hash_rows_nb
else:
    group_stats = group_stats_np
    subtract_group_means = subtract_group_means_np
    cluster_score_sums = cluster_score_sums_np
    lloyd_assign = lloyd_assign_np
    point_center_sqdist = point_center_sqdist_np
    hash_rows = hash_rows_np


def warmup():
    """Force one compilation of every jitted kernel (no-op on numpy path)."""
    x = np.arange(12.0).reshape(4, 3)
    gid = np.array([0, 1, 0, 1], dtype=np.int64)
    sums, _ = group_stats(x, gid, 2)
    subtract_group_means(x, gid, sums / 2.0)
    cluster_score_sums(x, np.ones(4), gid, 2)
    labels, _ = lloyd_assign(x, x[:2].copy())
    point_center_sqdist(x, x[:2].copy(), labels)
    hash_rows(x.view(np.uint64).reshape(4, 3))
    return BACKEND

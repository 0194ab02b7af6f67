"""Occupation task tables: percentiles, composites, clustering, text rates.

An occupation task table is a DataFrame with one row per occupation, the
six task-intensity columns of :data:`auditsim.theory.TASK_FIELDS`, and an
``employment_weight`` column. Percentiles are always computed over whatever
table is passed in (there is no hidden reference universe); composites
min-max normalize within the same table.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import kernels, rng
from .theory import TASK_FIELDS

WEIGHT_COLUMN = "employment_weight"

#: Composite column names produced by :func:`composites`.
SUBJECTIVE = "subjective_loading"
OBJECTIVE = "objective_loading"
DISCRETION = "discretion"
MANUAL = "manual_loading"
CONTACT = "contact_loading"


# ---------------------------------------------------------------------------
# percentiles and composites
# ---------------------------------------------------------------------------

def weighted_percentiles(values, weights=None):
    """Weight-based centiles (1..100) with midpoint treatment of ties.

    Each value's cumulative share is the weight strictly below it plus half
    the weight tied with it; the centile is ``ceil(100 * share)``, floored
    at 1 so zero-weight rows at the bottom still land on the scale. A table
    where every value is equal therefore maps to centile 50, and n equally
    weighted distinct values map to 1..100 evenly.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("values must be a nonempty 1-d array")
    if np.any(~np.isfinite(v)):
        raise ValueError("values must be finite")
    if weights is None:
        w = np.ones_like(v)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != v.shape:
            raise ValueError("weights must match values in shape")
        if np.any(w < 0) or np.any(~np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must have positive total")

    uniq, inverse = np.unique(v, return_inverse=True)
    at = np.bincount(inverse, weights=w, minlength=uniq.size)
    below = np.concatenate([[0.0], np.cumsum(at)[:-1]])
    share = (below + 0.5 * at) / total
    centile = np.ceil(100.0 * share).astype(np.int64)
    centile = np.clip(centile, 1, 100)
    return centile[inverse]


def percentile_table(table, columns=TASK_FIELDS, weight_column=WEIGHT_COLUMN):
    """Centile version of the task columns, weighted by employment."""
    weights = table[weight_column].to_numpy() if weight_column in table else None
    out = pd.DataFrame(index=table.index)
    for col in columns:
        out[col] = weighted_percentiles(table[col].to_numpy(), weights)
    return out


def minmax(values):
    """Min-max normalization onto [0, 1]; constant input is an error."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        raise ValueError("cannot min-max normalize a constant column")
    return (v - lo) / (hi - lo)


def composites(table, alpha=1.0, beta=1.0, delta=1.0):
    """Noise-loading composites per occupation.

    The subjective loading is ``1 + alpha * mm(analytical) + beta *
    mm(interpersonal)`` and the objective loading ``1 + delta *
    mm(routine_cognitive)``, both min-max normalized within the table, so
    the subjective loading lives in [1, 1 + alpha + beta] and the objective
    one in [1, 1 + delta]. ``discretion`` is the share
    subjective / (subjective + objective). Manual and contact loadings are
    carried along min-max normalized for use as controls.
    """
    for name, val in (("alpha", alpha), ("beta", beta), ("delta", delta)):
        if val < 0 or not np.isfinite(val):
            raise ValueError(f"{name} must be finite and >= 0")
    subj = 1.0 + alpha * minmax(table["analytical"]) + beta * minmax(table["interpersonal"])
    obj = 1.0 + delta * minmax(table["routine_cognitive"])
    return pd.DataFrame(
        {
            SUBJECTIVE: subj,
            OBJECTIVE: obj,
            DISCRETION: subj / (subj + obj),
            MANUAL: minmax(table["routine_manual"]),
            CONTACT: minmax(table["contact"]),
        },
        index=table.index,
    )


def occupation_composites(table, alpha=1.0, beta=1.0, delta=1.0):
    """Composites over employment-weighted task centiles.

    The canonical pipeline for an occupation table: rank each task column
    into weighted centiles, then build the noise-loading composites from
    the ranked values. Keeps ``occupation_id`` alongside when present so
    the result can be joined back to ads.
    """
    pct = percentile_table(table)
    comp = composites(pct, alpha=alpha, beta=beta, delta=delta)
    if "occupation_id" in table:
        comp.insert(0, "occupation_id", table["occupation_id"].to_numpy())
    return comp


def collinearity_determinant(table, columns=None):
    """Determinant of the Pearson correlation matrix of the given columns.

    1 means orthogonal measures, values near 0 flag near-collinearity.
    Defaults to every column in the table. Constant columns have no
    defined correlation and raise.
    """
    if columns is None:
        columns = list(table.columns)
    x = np.column_stack([np.asarray(table[c], dtype=np.float64) for c in columns])
    sd = x.std(axis=0)
    if np.any(sd == 0):
        bad = [c for c, s in zip(columns, sd) if s == 0]
        raise ValueError(f"constant columns have no correlation: {bad}")
    corr = np.corrcoef(x, rowvar=False)
    return float(np.linalg.det(corr))


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterModel:
    """Fitted k-means model (centers ordered by restart-winning layout)."""

    k: int
    centers: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    converged: bool
    restart: int

    def assign(self, x):
        """Nearest-center labels for new rows (ties to the lowest index)."""
        labels, _ = kernels.lloyd_assign(np.ascontiguousarray(x, dtype=np.float64),
                                         self.centers)
        return labels


def _seed_plus_plus(x, k, stream):
    """k-means++ seeding driven by one counter-based stream."""
    n = x.shape[0]
    first = int(rng.integers(stream, np.uint64(0), n)[()])
    centers = [x[first]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all mass coincides with existing centers; reuse any point
            idx = int(rng.integers(stream, np.uint64(c), n)[()])
        else:
            u = float(rng.uniform(stream, np.uint64(c)))
            idx = int(np.searchsorted(np.cumsum(d2), u * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - centers[-1]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(x, centers, max_iter):
    """Lloyd iterations with farthest-point reseeding of emptied clusters."""
    k = centers.shape[0]
    labels = np.full(x.shape[0], -1, dtype=np.int64)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_labels, _ = kernels.lloyd_assign(x, centers)
        sums, counts = kernels.group_stats(x, new_labels, k)
        reseeded = False
        if np.any(counts == 0):
            sq = kernels.point_center_sqdist(x, centers, new_labels)
            order = np.argsort(-sq, kind="stable")
            used = 0
            for c in np.flatnonzero(counts == 0):
                centers[c] = x[order[used]]
                used += 1
            reseeded = True
            continue_labels = new_labels  # assignment redone next iteration
        else:
            nonzero = counts[:, None].astype(np.float64)
            centers = sums / nonzero
            continue_labels = new_labels
        if not reseeded and np.array_equal(continue_labels, labels):
            converged = True
            labels = continue_labels
            break
        labels = continue_labels
    final_labels, wss = kernels.lloyd_assign(x, centers)
    return centers, final_labels, float(wss), it, converged


def kmeans(x, k, seed, n_restarts=16, max_iter=300, extra_inits=()):
    """Deterministic k-means with k-means++ restarts.

    The best restart is the one with the lowest within-cluster sum of
    squares, ties broken by restart index; given the same seed the result
    is identical regardless of how restarts would be scheduled. Emptied
    clusters are reseeded at the point farthest from its center.
    ``extra_inits`` prepends explicit center matrices (used by the elbow
    scan to warm-start from the previous k).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x must be 2-d")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")

    best = None
    inits = [(None, np.ascontiguousarray(c, dtype=np.float64)) for c in extra_inits]
    inits += [(r, None) for r in range(n_restarts)]
    for slot, (restart, init) in enumerate(inits):
        if init is None:
            stream = rng.derive(seed, "kmeans", restart)
            init = _seed_plus_plus(x, k, stream)
        if init.shape != (k, x.shape[1]):
            raise ValueError("initial centers have the wrong shape")
        centers, labels, wss, n_iter, converged = _lloyd(x, init.copy(), max_iter)
        if best is None or wss < best[0]:
            best = (wss, slot, centers, labels, n_iter, converged, restart)
    wss, _, centers, labels, n_iter, converged, restart = best
    return ClusterModel(k=k, centers=centers, labels=labels, inertia=wss,
                        n_iter=n_iter, converged=converged,
                        restart=-1 if restart is None else restart)


@dataclass(frozen=True)
class ElbowResult:
    """WSS profile over candidate k with a curvature-based suggestion."""

    ks: tuple
    wss: tuple
    suggested_k: int | None


def _farthest_point_extension(x, centers, extra):
    """Append ``extra`` greedy farthest points to a center matrix."""
    centers = np.asarray(centers, dtype=np.float64)
    for _ in range(extra):
        labels, _ = kernels.lloyd_assign(x, np.ascontiguousarray(centers))
        sq = kernels.point_center_sqdist(x, np.ascontiguousarray(centers), labels)
        centers = np.vstack([centers, x[int(np.argmax(sq))]])
    return centers


def kmeans_scan(x, ks, seed, n_restarts=16, max_iter=300):
    """Fit k-means over a k-grid and suggest the elbow.

    Every k past the first also tries a warm start built from the previous
    best centers plus greedy farthest points, which guarantees the WSS
    profile is non-increasing in k. The suggestion maximizes the discrete
    curvature of the log-WSS profile (raw WSS decays convexly for almost
    any data, so its curvature always peaks at the second k; the log curve
    bends hardest where the marginal fit gain collapses). Needs at least
    three ks, otherwise None; ties go to the smallest k.
    """
    ks = sorted(set(int(k) for k in ks))
    if not ks:
        raise ValueError("ks must be nonempty")
    x = np.ascontiguousarray(x, dtype=np.float64)
    models = {}
    wss = []
    prev = None
    for k in ks:
        extra = ()
        if prev is not None and k > prev.k:
            extra = (_farthest_point_extension(x, prev.centers, k - prev.k),)
        model = kmeans(x, k, seed, n_restarts=n_restarts, max_iter=max_iter,
                       extra_inits=extra)
        models[k] = model
        wss.append(model.inertia)
        prev = model
    suggested = None
    if len(ks) >= 3 and wss[0] > 0.0:
        floor = wss[0] * 1e-15
        f = np.log(np.maximum(np.asarray(wss), floor))
        curv = []
        for i in range(1, len(ks) - 1):
            right = (f[i + 1] - f[i]) / (ks[i + 1] - ks[i])
            left = (f[i] - f[i - 1]) / (ks[i] - ks[i - 1])
            curv.append(right - left)
        suggested = ks[1 + int(np.argmax(curv))]
    return ElbowResult(ks=tuple(ks), wss=tuple(wss), suggested_k=suggested), models


# ---------------------------------------------------------------------------
# text task rates
# ---------------------------------------------------------------------------

def _tokenize(text):
    tokens = [t.strip(string.punctuation).lower() for t in text.split()]
    return [t for t in tokens if t]


@dataclass(frozen=True)
class TextDictionary:
    """Phrase dictionary for scoring ad text, one tuple per channel."""

    analytical: tuple
    interpersonal: tuple
    routine: tuple

    def __post_init__(self):
        for channel in ("analytical", "interpersonal", "routine"):
            phrases = getattr(self, channel)
            if not phrases:
                raise ValueError(f"channel {channel!r} has no phrases")
            for phrase in phrases:
                if not _tokenize(phrase):
                    raise ValueError(f"unusable phrase {phrase!r} in {channel!r}")

    @property
    def counts(self):
        return (len(self.analytical), len(self.interpersonal), len(self.routine))

    def require_counts(self, expected):
        """Validate the per-channel phrase counts against a known layout."""
        if self.counts != tuple(expected):
            raise ValueError(
                f"dictionary counts {self.counts} do not match expected {tuple(expected)}")
        return self

    @classmethod
    def load(cls, path, expected_counts=None):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        try:
            obj = cls(analytical=tuple(payload["analytical"]),
                      interpersonal=tuple(payload["interpersonal"]),
                      routine=tuple(payload["routine"]))
        except KeyError as exc:
            raise ValueError(f"dictionary file missing channel {exc}") from None
        if expected_counts is not None:
            obj.require_counts(expected_counts)
        return obj


def _count_phrase(tokens, phrase_tokens):
    """Non-overlapping left-to-right matches of a token phrase."""
    n, m = len(tokens), len(phrase_tokens)
    hits = 0
    i = 0
    while i + m <= n:
        if tokens[i:i + m] == phrase_tokens:
            hits += 1
            i += m
        else:
            i += 1
    return hits


@dataclass(frozen=True)
class TextTaskRates:
    """Per-100-word task phrase rates of one text."""

    word_count: int
    analytical_rate: float
    interpersonal_rate: float
    routine_rate: float

    @property
    def subjective_rate(self):
        return self.analytical_rate + self.interpersonal_rate

    @property
    def objective_rate(self):
        return self.routine_rate


def text_task_rates(text, dictionary):
    """Score a text against a phrase dictionary, per 100 words.

    Matching is case-insensitive and exact on whitespace tokens (surrounding
    punctuation stripped, no stemming); each phrase counts its
    non-overlapping occurrences. An empty text scores zero everywhere.
    """
    tokens = _tokenize(text)
    words = len(tokens)
    rates = {}
    for channel in ("analytical", "interpersonal", "routine"):
        hits = sum(_count_phrase(tokens, _tokenize(p))
                   for p in getattr(dictionary, channel))
        rates[channel] = 100.0 * hits / words if words else 0.0
    return TextTaskRates(word_count=words,
                         analytical_rate=rates["analytical"],
                         interpersonal_rate=rates["interpersonal"],
                         routine_rate=rates["routine"])

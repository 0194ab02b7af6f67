"""Fixed-effects linear probability estimation with clustered inference.

The engine absorbs one fixed-effect dimension by within-group demeaning,
solves the least-squares problem by pivoted QR with explicit rank
handling (collinear columns are dropped by name, never silently), and
reports CR1 cluster-robust covariance. Inference uses a t / F reference
distribution with (clusters - 1) degrees of freedom. Absorbed groups
enter the CR1 small-sample factor only when they straddle clusters: a
group nested inside a single cluster leaves that cluster's score sum
unchanged, so counting it would only inflate the covariance.

Estimates are invariant to row permutation of the input, bit for bit:
rows are first brought into a canonical order keyed by fixed-effect
group, cluster, and a content hash, so every reduction sees the same
float array no matter how the caller shuffled the data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr, solve_triangular
from scipy.special import fdtrc, stdtr

from . import kernels

INTERCEPT = "intercept"


def _codes(ids):
    return np.unique(np.asarray(ids), return_inverse=True)[1].astype(np.int64)


def within_transform(x, fe_ids):
    """Demean columns within fixed-effect groups.

    Returns the demeaned array (same shape as ``x``) and a boolean mask
    marking rows whose group has a single member; those rows come out
    exactly zero and carry no information, so estimation drops them from
    sample-size bookkeeping. The transform is idempotent.
    """
    arr = np.asarray(x, dtype=np.float64)
    flat = arr.ndim == 1
    mat = np.ascontiguousarray(arr.reshape(len(arr), -1))
    codes = _codes(fe_ids)
    if len(codes) != len(mat):
        raise ValueError("fe_ids must have one entry per row")
    n_groups = int(codes.max()) + 1 if len(codes) else 0
    sums, counts = kernels.group_stats(mat, codes, n_groups)
    means = sums / counts[:, None]
    out = kernels.subtract_group_means(mat, codes, means)
    singleton = counts[codes] == 1
    return (out.ravel() if flat else out), singleton


@dataclass(frozen=True)
class RegressionSpec:
    """Named-column description of one regression on a covariate frame."""

    outcome: str
    regressors: tuple
    fe: Optional[str] = None
    cluster: str = "ad_code"
    add_intercept: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if not self.regressors:
            raise ValueError("spec needs at least one regressor")
        if len(set(self.regressors)) != len(self.regressors):
            raise ValueError("duplicate regressor names")


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit with CR1 cluster-robust covariance.

    ``names``/``coef``/``vcov`` cover the retained (identified) columns
    in their original order; collinear columns appear in ``dropped``.
    ``n_obs`` excludes rows whose fixed-effect group was a singleton.
    """

    outcome: str
    names: tuple
    coef: np.ndarray
    vcov: np.ndarray
    n_obs: int
    n_clusters: int
    n_absorbed: int
    n_singletons: int
    dropped: tuple

    @property
    def df(self):
        return self.n_clusters - 1

    @property
    def k_model(self):
        return len(self.names) + self.n_absorbed

    @property
    def se(self):
        return np.sqrt(np.diag(self.vcov))

    def index(self, name):
        if name in self.dropped:
            raise ValueError(f"column {name!r} was dropped as collinear")
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"unknown coefficient {name!r}") from None

    def coefficient(self, name):
        return float(self.coef[self.index(name)])

    def se_of(self, name):
        return float(self.se[self.index(name)])

    def table(self):
        se = self.se
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(se > 0, self.coef / se, 0.0)
        p = 2.0 * stdtr(self.df, -np.abs(t))
        return pd.DataFrame({"term": list(self.names), "estimate": self.coef,
                             "se": se, "t": t, "p": p})


@dataclass(frozen=True)
class LincomResult:
    """Delta-method linear combination of coefficients."""

    estimate: float
    se: float
    t: float
    p: float
    df: int


@dataclass(frozen=True)
class WaldResult:
    """Joint Wald test of linear restrictions."""

    f: float
    p: float
    q: int
    df: int


def _canonical_order(y, x, fe_codes, cl_codes):
    payload = np.column_stack([y, x, fe_codes.astype(np.float64),
                               cl_codes.astype(np.float64)])
    rowhash = kernels.hash_rows(np.ascontiguousarray(payload).view(np.uint64))
    return np.lexsort((rowhash, cl_codes, fe_codes))


def fit_ols(frame, outcome, regressors, fe=None, cluster="ad_code",
            add_intercept=None):
    """OLS with optional absorbed fixed effects and CR1 clustered errors.

    ``frame`` holds all named columns; ``regressors`` are numeric columns.
    Without ``fe`` an intercept is prepended automatically (override via
    ``add_intercept``); with ``fe`` the intercept is absorbed. Collinear
    columns are dropped by pivoted-QR rank detection and reported by name.

    The CR1 factor (G/(G-1)) * ((N-1)/(N-K)) counts an absorbed group in
    K only when the group spans more than one cluster. Groups nested
    within clusters (the usual case: ad effects with clustering on ads)
    do not consume cluster-level degrees of freedom.
    """
    regressors = list(regressors)
    if add_intercept is None:
        add_intercept = fe is None
    y = np.ascontiguousarray(frame[outcome], dtype=np.float64)
    n = len(y)
    if n == 0:
        raise ValueError("empty estimation sample")
    names = ([INTERCEPT] if add_intercept else []) + regressors
    cols = [np.ones(n)] if add_intercept else []
    cols += [np.asarray(frame[r], dtype=np.float64) for r in regressors]
    x = np.ascontiguousarray(np.column_stack(cols))
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("design matrix and outcome must be finite")
    if np.ptp(y) == 0.0:
        raise ValueError("outcome is constant; nothing to fit")

    fe_codes = _codes(frame[fe]) if fe is not None else np.zeros(n, dtype=np.int64)
    cl_codes = _codes(frame[cluster])

    order = _canonical_order(y, x, fe_codes, cl_codes)
    y, x = y[order], np.ascontiguousarray(x[order])
    fe_codes, cl_codes = fe_codes[order], cl_codes[order]

    n_singletons = 0
    n_absorbed = 0
    n_absorbed_dof = 0
    if fe is not None:
        yx = np.column_stack([y, x])
        demeaned, singleton = within_transform(yx, fe_codes)
        n_singletons = int(singleton.sum())
        keep = ~singleton
        yx = demeaned[keep]
        y, x = yx[:, 0], np.ascontiguousarray(yx[:, 1:])
        fe_codes, cl_codes = fe_codes[keep], cl_codes[keep]
        n_absorbed = len(np.unique(fe_codes))
        if len(y) == 0:
            raise ValueError("every fixed-effect group is a singleton")
        if np.max(np.abs(y)) == 0.0:
            raise ValueError("outcome is constant within every fixed-effect "
                             "group; nothing to fit")
        # rows are sorted by fixed-effect group first, so a group nested
        # in one cluster never shows two cluster codes on adjacent rows
        same_fe = fe_codes[1:] == fe_codes[:-1]
        nested = not np.any(same_fe & (cl_codes[1:] != cl_codes[:-1]))
        n_absorbed_dof = 0 if nested else n_absorbed

    n_obs = len(y)
    n_clusters = len(np.unique(cl_codes))
    if n_clusters < 2:
        raise ValueError("cluster-robust inference needs at least two clusters")

    q_mat, r_mat, piv = qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_mat))
    cutoff = diag[0] * n_obs * np.finfo(np.float64).eps if diag.size else 0.0
    rank = int(np.count_nonzero(diag > cutoff))
    if rank == 0:
        raise ValueError("design matrix has no identifying variation")
    retained_piv = piv[:rank]
    dropped = tuple(names[j] for j in sorted(piv[rank:]))

    qty = q_mat.T @ y
    beta_piv = solve_triangular(r_mat[:rank, :rank], qty[:rank])
    # map pivot-ordered results back to the original column order
    orig_order = np.argsort(retained_piv)
    retained = retained_piv[orig_order]
    beta = beta_piv[orig_order]
    retained_names = tuple(names[j] for j in retained)

    k_model = rank + n_absorbed
    if n_obs - k_model < 1:
        raise ValueError("not enough observations for the model size")
    k_dof = rank + n_absorbed_dof

    x_ret = np.ascontiguousarray(x[:, retained])
    resid = y - x_ret @ beta
    rinv = solve_triangular(r_mat[:rank, :rank], np.eye(rank))
    bread = (rinv @ rinv.T)[np.ix_(orig_order, orig_order)]
    scores = kernels.cluster_score_sums(x_ret, resid, cl_codes, n_clusters)
    meat = scores.T @ scores
    factor = (n_clusters / (n_clusters - 1.0)) * ((n_obs - 1.0) / (n_obs - k_dof))
    vcov = factor * (bread @ meat @ bread)
    vcov = 0.5 * (vcov + vcov.T)

    return FitResult(outcome=outcome, names=retained_names, coef=beta,
                     vcov=vcov, n_obs=n_obs, n_clusters=n_clusters,
                     n_absorbed=n_absorbed, n_singletons=n_singletons,
                     dropped=dropped)


def fit(spec, frame):
    """Run a :class:`RegressionSpec` against a covariate frame."""
    return fit_ols(frame, spec.outcome, spec.regressors, fe=spec.fe,
                   cluster=spec.cluster, add_intercept=spec.add_intercept)


def _weight_vector(fit_result, weights):
    c = np.zeros(len(fit_result.names))
    for name, w in weights.items():
        c[fit_result.index(name)] = w
    return c


def lincom(fit_result, weights):
    """Estimate and delta-method SE of a coefficient combination.

    ``weights`` maps coefficient names to weights; unnamed coefficients
    get weight zero. Referencing a dropped column is an error.
    """
    c = _weight_vector(fit_result, weights)
    est = float(c @ fit_result.coef)
    var = float(c @ fit_result.vcov @ c)
    se = np.sqrt(max(var, 0.0))
    if se == 0.0:
        return LincomResult(est, 0.0, 0.0, 1.0, fit_result.df)
    t = est / se
    p = float(2.0 * stdtr(fit_result.df, -abs(t)))
    return LincomResult(est, se, float(t), p, fit_result.df)


def wald_joint(fit_result, restrictions):
    """Joint Wald F test that every restriction row equals zero.

    ``restrictions`` is a sequence of weight mappings, one per restriction.
    The statistic is referred to F(q, clusters - 1).
    """
    rows = [_weight_vector(fit_result, r) for r in restrictions]
    if not rows:
        raise ValueError("need at least one restriction")
    r_mat = np.vstack(rows)
    rb = r_mat @ fit_result.coef
    rvr = r_mat @ fit_result.vcov @ r_mat.T
    rvr = 0.5 * (rvr + rvr.T)
    try:
        chol = cho_factor(rvr)
    except LinAlgError:
        raise ValueError("restriction covariance is singular; check for "
                         "redundant or dropped terms") from None
    q = len(rows)
    f = float(rb @ cho_solve(chol, rb)) / q
    p = float(fdtrc(q, fit_result.df, f))
    return WaldResult(f=f, p=p, q=q, df=fit_result.df)

"""The audit analysis battery: gaps, mechanism decomposition, interference.

Every analysis builds a covariate frame from the dataset, fits a linear
probability model with ad fixed effects (except the peer-composition
checks, which need cross-ad variation), clusters on ads, and reports the
quantities of interest as small result dataclasses with plain DataFrame
tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from . import dgp, tasks
from .regression import FitResult, LincomResult, WaldResult, fit_ols, lincom, wald_joint
from .theory import GROUPS

AUDITED_GROUPS = tuple(g for g in GROUPS if g != "WM")

COMPOSITE_COLUMNS = (tasks.SUBJECTIVE, tasks.OBJECTIVE, tasks.MANUAL, tasks.CONTACT)


def analysis_frame(dataset, alpha=1.0, beta=1.0, delta=1.0):
    """Covariate frame plus callback outcome and group dummies."""
    if not dataset.has_callbacks():
        raise ValueError("dataset has no callbacks; run a callback model first")
    frame = dgp.covariate_frame(dataset, alpha=alpha, beta=beta, delta=delta)
    frame["callback"] = dataset.apps["callback"].to_numpy().astype(np.float64)
    group = frame["group"].to_numpy()
    for g in AUDITED_GROUPS:
        frame[f"group[{g}]"] = (group == g).astype(np.float64)
    return frame


# ---------------------------------------------------------------------------
# group gaps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapTable:
    """Per-group callback gaps, optionally broken out by ad category.

    ``table`` has one row per (group, category) cell with the gap level;
    ``contrasts`` holds each non-base category's difference from the base
    category. Cells whose category has fewer than two ads, or whose
    interaction fell to collinearity, are flagged and left unestimated.
    """

    table: pd.DataFrame
    contrasts: pd.DataFrame
    base_category: str
    fit: FitResult

    def gap(self, group, category=None):
        t = self.table
        mask = t["group"] == group
        if category is not None:
            mask &= t["category"] == category
        row = t[mask]
        if len(row) != 1:
            raise ValueError(f"no unique cell for {group!r}, {category!r}")
        return float(row["estimate"].iloc[0])


def _category_per_ad(frame):
    cats = frame.groupby("ad_code")["category"].first()
    return cats


def gap_table(dataset, grouping=None, controls=dgp.CREDENTIALS,
              alpha=1.0, beta=1.0, delta=1.0):
    """Estimate group callback gaps, overall or per ad category.

    ``grouping`` selects the category labels: None pools everything,
    ``"category"`` uses the occupation archetype carried by the dataset,
    and a mapping/array assigns a label per ad id. Base-category gaps are
    raw group coefficients; other categories add the interaction via a
    linear combination, and ``contrasts`` tests the interaction itself.
    """
    frame = analysis_frame(dataset, alpha=alpha, beta=beta, delta=delta)
    if grouping is None:
        frame["category"] = "all"
    elif isinstance(grouping, str):
        if grouping != "category":
            raise ValueError("grouping must be None, 'category', or a mapping")
    else:
        ad_ids = dataset.ads["ad_id"].to_numpy()
        if isinstance(grouping, dict):
            labels = np.asarray([grouping[a] for a in ad_ids])
        else:
            labels = np.asarray(grouping)
            if labels.shape != ad_ids.shape:
                raise ValueError("grouping array must have one label per ad")
        frame["category"] = labels[frame["ad_code"].to_numpy()]

    per_ad = _category_per_ad(frame)
    counts = per_ad.value_counts()
    categories = sorted(counts.index)
    small = {c for c in categories if counts[c] < 2}
    base = next((c for c in categories if c not in small), None)
    if base is None:
        raise ValueError("no category has at least two ads")

    regressors = [f"group[{g}]" for g in AUDITED_GROUPS]
    cat_vec = frame["category"].to_numpy()
    inter_names = {}
    for cat in categories:
        if cat == base or cat in small:
            continue
        in_cat = (cat_vec == cat).astype(np.float64)
        for g in AUDITED_GROUPS:
            name = f"group[{g}]:cat[{cat}]"
            frame[name] = frame[f"group[{g}]"].to_numpy() * in_cat
            inter_names[(g, cat)] = name
    regressors += list(inter_names.values())
    regressors += list(controls)

    result = fit_ols(frame, "callback", regressors, fe="ad_code",
                     cluster="ad_code")

    rows = []
    contrasts = []
    for g in AUDITED_GROUPS:
        for cat in categories:
            flagged = cat in small
            weights = None
            if not flagged:
                weights = {f"group[{g}]": 1.0}
                if cat != base:
                    name = inter_names[(g, cat)]
                    if name in result.dropped:
                        flagged = True
                    else:
                        weights[name] = 1.0
            if flagged or f"group[{g}]" in result.dropped:
                rows.append((g, cat, np.nan, np.nan, np.nan, np.nan, True))
                continue
            li = lincom(result, weights)
            rows.append((g, cat, li.estimate, li.se, li.t, li.p, False))
            if cat != base:
                ci = lincom(result, {inter_names[(g, cat)]: 1.0})
                contrasts.append((g, cat, ci.estimate, ci.se, ci.t, ci.p))
    cols = ["group", "category", "estimate", "se", "t", "p", "flagged"]
    table = pd.DataFrame(rows, columns=cols)
    contrast_cols = ["group", "category", "estimate", "se", "t", "p"]
    return GapTable(table=table,
                    contrasts=pd.DataFrame(contrasts, columns=contrast_cols),
                    base_category=base, fit=result)


# ---------------------------------------------------------------------------
# mechanism decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BPDecomposition:
    """Group interactions with standardized noise-loading composites.

    Each row reports the coefficients on the standardized subjective and
    objective loadings for one group (or the pooled minority indicator),
    and the subjective-minus-objective contrast that summarizes which
    evaluation channel drives the group's callback response.
    """

    table: pd.DataFrame
    subsample: str
    n_ads: int
    fit: FitResult


def _contact_subsample_mask(frame, subsample):
    if subsample == "all":
        return np.ones(len(frame), dtype=bool)
    contact = frame.groupby("ad_code")[tasks.CONTACT].first()
    lo, hi = np.quantile(contact.to_numpy(), [0.4, 0.6])
    if lo >= hi:
        raise ValueError("contact loading too concentrated to split 40/20/40")
    per_app = frame[tasks.CONTACT].to_numpy()
    if subsample == "low40":
        return per_app <= lo
    if subsample == "high40":
        return per_app >= hi
    raise ValueError("subsample must be 'all', 'low40' or 'high40'")


def bp_decomposition(dataset, pooled=True, contact_subsample="all",
                     alpha=1.0, beta=1.0, delta=1.0):
    """Regress callbacks on group-by-composite interactions with ad effects.

    Composites are standardized to mean zero, unit variance within the
    estimation subsample. Composite main effects are absorbed by the ad
    fixed effects; only the interactions with group (or the pooled
    minority indicator) are identified and reported.
    """
    frame = analysis_frame(dataset, alpha=alpha, beta=beta, delta=delta)
    mask = _contact_subsample_mask(frame, contact_subsample)
    frame = frame[mask].reset_index(drop=True)

    std_names = {}
    for comp in COMPOSITE_COLUMNS:
        v = frame[comp].to_numpy()
        sd = v.std()
        if sd == 0.0:
            raise ValueError(f"composite {comp} has zero variance in "
                             f"subsample {contact_subsample!r}")
        frame[f"z[{comp}]"] = (v - v.mean()) / sd
        std_names[comp] = f"z[{comp}]"

    indicators = (("minority", "minority"),) if pooled else tuple(
        (g, f"group[{g}]") for g in AUDITED_GROUPS)
    regressors = []
    for _, col in indicators:
        regressors.append(col)
    inter = {}
    for label, col in indicators:
        for comp in COMPOSITE_COLUMNS:
            name = f"{col}:{std_names[comp]}"
            frame[name] = frame[col].to_numpy() * frame[std_names[comp]].to_numpy()
            inter[(label, comp)] = name
            regressors.append(name)
    regressors += list(dgp.CREDENTIALS)

    result = fit_ols(frame, "callback", regressors, fe="ad_code",
                     cluster="ad_code")

    rows = []
    for label, _ in indicators:
        b_name = inter[(label, tasks.SUBJECTIVE)]
        p_name = inter[(label, tasks.OBJECTIVE)]
        b = lincom(result, {b_name: 1.0})
        p = lincom(result, {p_name: 1.0})
        d = lincom(result, {b_name: 1.0, p_name: -1.0})
        rows.append((label, b.estimate, b.se, p.estimate, p.se,
                     d.estimate, d.se, d.t, d.p))
    table = pd.DataFrame(rows, columns=[
        "group", "subjective", "subjective_se", "objective", "objective_se",
        "difference", "difference_se", "t", "p"])
    n_ads = int(frame["ad_code"].nunique())
    return BPDecomposition(table=table, subsample=contact_subsample,
                           n_ads=n_ads, fit=result)


# ---------------------------------------------------------------------------
# credential attenuation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CredentialAttenuation:
    """Credential returns and their minority-by-discretion interactions.

    ``table`` has one row per credential: the majority return, the
    minority differential at low- and high-discretion ads, and the triple
    interaction (high minus low differential). Entries whose interaction
    fell to collinearity (e.g. a credential constant within a discretion
    half) are left as NaN. The two Wald rows test the positive-return and
    placebo triples jointly over the identified triples, or are None when
    none survive. White-male callback rates by discretion half are
    included as a design check.
    """

    table: pd.DataFrame
    f_positive: Optional[WaldResult]
    f_placebo: Optional[WaldResult]
    wm_rate_low: float
    wm_rate_high: float
    flagged: tuple
    fit: FitResult


def credential_attenuation(dataset, credentials=dgp.CREDENTIALS,
                           alpha=1.0, beta=1.0, delta=1.0):
    """Fit the credential-by-minority-by-discretion interaction model.

    Discretion is split at the median of the ad-level discretion index.
    Credentials constant within either discretion half are flagged (their
    interactions cannot be identified there).
    """
    credentials = tuple(credentials)
    unknown = sorted(set(credentials) - set(dgp.CREDENTIALS))
    if unknown:
        raise ValueError(f"unknown credentials: {unknown}")
    frame = analysis_frame(dataset, alpha=alpha, beta=beta, delta=delta)
    high = frame["high_discretion"].to_numpy()
    minority = frame["minority"].to_numpy()

    flagged = []
    for cred in credentials:
        v = frame[cred].to_numpy()
        for label, m in (("low", high == 0.0), ("high", high == 1.0)):
            if m.any() and np.ptp(v[m]) == 0.0:
                flagged.append(f"{cred}[{label}]")

    frame["minority:high"] = minority * high
    regressors = ["minority", "minority:high"]
    two_way, triple = {}, {}
    for cred in credentials:
        v = frame[cred].to_numpy()
        frame[f"{cred}:minority"] = v * minority
        frame[f"{cred}:minority:high"] = v * minority * high
        two_way[cred] = f"{cred}:minority"
        triple[cred] = f"{cred}:minority:high"
        regressors += [cred, two_way[cred], triple[cred]]

    result = fit_ols(frame, "callback", regressors, fe="ad_code",
                     cluster="ad_code")

    def li(weights):
        if any(name in result.dropped for name in weights):
            return None
        return lincom(result, weights)

    rows = []
    for cred in credentials:
        main = li({cred: 1.0})
        low = li({two_way[cred]: 1.0})
        high_li = li({two_way[cred]: 1.0, triple[cred]: 1.0})
        tri = li({triple[cred]: 1.0})
        rows.append((
            cred,
            main.estimate if main else np.nan, main.se if main else np.nan,
            low.estimate if low else np.nan, low.se if low else np.nan,
            high_li.estimate if high_li else np.nan,
            high_li.se if high_li else np.nan,
            tri.estimate if tri else np.nan, tri.se if tri else np.nan,
            tri.p if tri else np.nan))
    table = pd.DataFrame(rows, columns=[
        "credential", "return", "return_se", "minority_low", "minority_low_se",
        "minority_high", "minority_high_se", "triple", "triple_se", "triple_p"])

    def block_f(block):
        names = [triple[c] for c in block
                 if c in credentials and triple[c] not in result.dropped]
        if not names:
            return None
        return wald_joint(result, [{n: 1.0} for n in names])

    callback = frame["callback"].to_numpy()
    wm = frame["group"].to_numpy() == "WM"
    wm_low = callback[wm & (high == 0.0)]
    wm_high = callback[wm & (high == 1.0)]

    return CredentialAttenuation(
        table=table,
        f_positive=block_f(dgp.POSITIVE_CREDENTIALS),
        f_placebo=block_f(dgp.PLACEBO_CREDENTIALS),
        wm_rate_low=float(wm_low.mean()) if wm_low.size else np.nan,
        wm_rate_high=float(wm_high.mean()) if wm_high.size else np.nan,
        flagged=tuple(flagged),
        fit=result,
    )


# ---------------------------------------------------------------------------
# within-ad interference
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterferenceResult:
    """Peer-composition dependence tests.

    Under independent evaluation all three p-values are uniform: the
    joint tests of group-specific slopes in minority and Black co-applicant
    counts, and the triple interaction of minority, high discretion and
    peer composition.
    """

    minority_joint: WaldResult
    black_joint: WaldResult
    triple: LincomResult
    fits: dict


def interference_check(dataset, alpha=1.0, beta=1.0, delta=1.0):
    """Test whether callbacks respond to co-applicant group composition."""
    sizes = dataset.apps.groupby("ad_id").size()
    if int(sizes.min()) < 2:
        raise ValueError("interference checks need at least two resumes per ad")
    frame = analysis_frame(dataset, alpha=alpha, beta=beta, delta=delta)

    fits = {}
    joints = {}
    for label, count_col in (("minority", "peer_minority"),
                             ("black", "peer_black")):
        regressors = [f"group[{g}]" for g in AUDITED_GROUPS] + [count_col]
        inter_names = []
        for g in AUDITED_GROUPS:
            name = f"group[{g}]:{count_col}"
            frame[name] = frame[f"group[{g}]"].to_numpy() * frame[count_col].to_numpy()
            inter_names.append(name)
        regressors += inter_names
        result = fit_ols(frame, "callback", regressors, cluster="ad_code")
        fits[label] = result
        joints[label] = wald_joint(result, [{n: 1.0} for n in inter_names])

    minority = frame["minority"].to_numpy()
    high = frame["high_discretion"].to_numpy()
    count = frame["peer_minority"].to_numpy()
    frame["minority:high"] = minority * high
    frame["minority:peer"] = minority * count
    frame["high:peer"] = high * count
    frame["minority:high:peer"] = minority * high * count
    result = fit_ols(frame, "callback",
                     ["minority", "high_discretion", "peer_minority",
                      "minority:high", "minority:peer", "high:peer",
                      "minority:high:peer"],
                     cluster="ad_code")
    fits["triple"] = result
    tri = lincom(result, {"minority:high:peer": 1.0})

    return InterferenceResult(minority_joint=joints["minority"],
                              black_joint=joints["black"],
                              triple=tri, fits=fits)

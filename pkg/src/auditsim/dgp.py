"""Callback data-generating processes over generated audit designs.

Two callback models fill the ``callback`` column of an
:class:`~auditsim.design.AuditDataset`:

* the structural model draws quality and signal noise per application and
  applies the evaluator's threshold rule, so group callback rates converge
  to the closed forms in :mod:`auditsim.theory`;
* the reduced-form model is a linear probability specification with known
  coefficients (group gaps, credential returns, optional interaction
  hooks) plus an ad-level shock whose scale is calibrated by bisection so
  the realized intraclass correlation of callbacks hits a target.

Both use per-ad counter streams, so simulation order cannot affect draws.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy.special import betaincinv

from . import rng, tasks
from .theory import (BLACK_GROUPS, GROUPS, RACE_MINORITY_GROUPS, TASK_FIELDS,
                     TaskProfile, callback_prob, composite_variance,
                     discretion_median_split, evaluate_job)

# Credential indicators derived from randomized resume attributes. The
# first three carry positive returns by default, the last three are
# placebos with zero return.
CREDENTIALS = ("social_internship", "programming_data", "study_abroad",
               "gpa_listed", "quantitative_internship", "math_minor")
POSITIVE_CREDENTIALS = CREDENTIALS[:3]
PLACEBO_CREDENTIALS = CREDENTIALS[3:]

DEFAULT_CREDENTIAL_RETURNS = {
    "social_internship": 0.011,
    "programming_data": 0.010,
    "study_abroad": 0.008,
    "gpa_listed": 0.0,
    "quantitative_internship": 0.0,
    "math_minor": 0.0,
}

#: Stylized group gap pattern used throughout the recovery experiments.
BENCHMARK_GAPS = {"WW": -0.033, "BW": -0.046, "BM": -0.051, "HM": -0.040}

# Counter fields of the per-ad streams.
_F_BERNOULLI = 0
_F_AD_EFFECT = 1
_F_THETA = 0
_F_EPS_SUBJECTIVE = 1
_F_EPS_OBJECTIVE = 2


class CalibrationError(RuntimeError):
    """The ad-effect scale cannot reach the requested intraclass correlation."""


def credential_matrix(apps):
    """Binary credential indicators (float columns) from resume attributes."""
    return pd.DataFrame({
        "social_internship": apps["internship"].to_numpy() == "interpersonal",
        "programming_data": apps["computer_skills"].to_numpy() == "data_programming",
        "study_abroad": apps["study_abroad"].to_numpy(),
        "gpa_listed": apps["gpa"].to_numpy() != "none",
        "quantitative_internship": apps["internship"].to_numpy() == "analytical",
        "math_minor": apps["minor"].to_numpy() == "math",
    }, index=apps.index).astype(np.float64)


def _aligned_codes(sorted_ids, ids, what):
    codes = np.searchsorted(sorted_ids, ids)
    codes = np.clip(codes, 0, len(sorted_ids) - 1)
    if not np.array_equal(sorted_ids[codes], ids):
        raise ValueError(f"rows reference unknown {what} ids")
    return codes


def covariate_frame(dataset, alpha=1.0, beta=1.0, delta=1.0):
    """Per-application covariates shared by the DGPs and the analyses.

    Ad-level quantities (task composites, the discretion index and its
    median split, occupation category) are broadcast to applications;
    peer counts give the number of co-applicants on the same ad drawn
    from the race-minority (or Black) groups, excluding the applicant.

    Composite percentile ranks are taken over the occupations the ads
    actually reference. A dataset restored from CSV carries only those
    occupations, so conditioning on them keeps covariates identical
    between an in-memory dataset and its CSV round trip.
    """
    ads, apps = dataset.ads, dataset.apps
    ad_ids = ads["ad_id"].to_numpy()
    codes = _aligned_codes(ad_ids, apps["ad_id"].to_numpy(), "ad")
    occupations = dataset.occupations
    used = np.isin(occupations["occupation_id"].to_numpy(),
                   ads["occupation_id"].to_numpy())
    if not used.all():
        occupations = occupations.loc[used].reset_index(drop=True)
    occ_ids = occupations["occupation_id"].to_numpy()
    occ_codes = _aligned_codes(occ_ids, ads["occupation_id"].to_numpy(),
                               "occupation")

    comp = tasks.occupation_composites(occupations, alpha=alpha,
                                       beta=beta, delta=delta)
    ad_level = {c: comp[c].to_numpy()[occ_codes]
                for c in (tasks.SUBJECTIVE, tasks.OBJECTIVE, tasks.DISCRETION,
                          tasks.MANUAL, tasks.CONTACT)}
    disc = ad_level[tasks.DISCRETION]
    sd = disc.std()
    z_disc = (disc - disc.mean()) / sd if sd > 0 else np.zeros_like(disc)
    high = discretion_median_split(disc)

    group = apps["group"].to_numpy()
    minority = group != "WM"
    race_minority = np.isin(group, RACE_MINORITY_GROUPS)
    black = np.isin(group, BLACK_GROUPS)

    def peer(ind):
        per_ad = np.bincount(codes, weights=ind, minlength=len(ads))
        return per_ad[codes] - ind

    frame = pd.DataFrame({
        "ad_code": codes,
        "category": occupations["occupation_category"].to_numpy()[occ_codes][codes],
        "group": group,
        "minority": minority.astype(np.float64),
        "race_minority": race_minority.astype(np.float64),
        "black": black.astype(np.float64),
        "peer_minority": peer(race_minority.astype(np.float64)),
        "peer_black": peer(black.astype(np.float64)),
        "z_discretion": z_disc[codes],
        "high_discretion": high[codes].astype(np.float64),
    }, index=apps.index)
    for c, v in ad_level.items():
        frame[c] = v[codes]
    cred = credential_matrix(apps)
    for c in CREDENTIALS:
        frame[c] = cred[c]
    return frame


# ---------------------------------------------------------------------------
# structural model
# ---------------------------------------------------------------------------

def _application_profile(dataset):
    merged = dataset.merged()
    return TaskProfile(**{f: merged[f].to_numpy() for f in TASK_FIELDS})


def _application_retention(dataset, params):
    lookup = {g: params.retention[g] for g in GROUPS}
    return np.asarray([lookup[g] for g in dataset.apps["group"]], dtype=np.float64)


def structural_callback_probs(dataset, params):
    """Closed-form callback probability of every application."""
    profile = _application_profile(dataset)
    pi = _application_retention(dataset, params)
    v = composite_variance(profile, params, pi)
    return callback_prob(v, params.threshold)


def simulate_structural(dataset, params, master_seed):
    """Draw callbacks from the evaluator's threshold rule.

    Per application: quality theta ~ N(0,1), channel noises
    eps_s ~ N(0, B/pi_g) and eps_o ~ N(0, 1/P); the blended evaluation
    E*(theta+eps_s) + (1-E*)(theta+eps_o) earns a callback when it clears
    threshold * (1 + V_g), which makes the callback rate the closed form
    of :func:`auditsim.theory.callback_prob`.
    """
    profile = _application_profile(dataset)
    pi = _application_retention(dataset, params)
    ev = evaluate_job(profile, params)
    e = ev.discretion
    v = composite_variance(profile, params, pi)

    apps = dataset.apps
    streams = rng.derive(master_seed, "structural", apps["ad_id"].to_numpy())
    slots = apps["slot"].to_numpy()
    theta = rng.normal(streams, rng.field_counters(_F_THETA, slots))
    eps_s = rng.normal(streams, rng.field_counters(_F_EPS_SUBJECTIVE, slots))
    eps_s *= np.sqrt(ev.subjective_noise / pi)
    eps_o = rng.normal(streams, rng.field_counters(_F_EPS_OBJECTIVE, slots))
    eps_o *= np.sqrt(ev.objective_variance)

    blended = e * (theta + eps_s) + (1.0 - e) * (theta + eps_o)
    callbacks = (blended > params.threshold * (1.0 + v)).astype(np.int64)
    return dataset.with_callbacks(callbacks, {
        "callback_model": "structural",
        "callback_seed": int(master_seed),
    })


# ---------------------------------------------------------------------------
# reduced-form model
# ---------------------------------------------------------------------------

def _probability_map(name, mapping, allowed):
    out = dict(mapping)
    unknown = sorted(set(out) - set(allowed))
    if unknown:
        raise ValueError(f"{name} has unknown keys: {unknown}")
    return out


@dataclass(frozen=True)
class ReducedForm:
    """Linear probability callback model with known coefficients.

    The expected callback rate of an application is the baseline plus its
    group gap (optionally shifted per occupation category), credential
    returns, and three optional interaction hooks used by the recovery
    experiments: a minority credential bonus at low-discretion ads, a
    minority penalty sloping in the standardized discretion index, and a
    peer-composition effect for race-minority applicants. An ad-level
    shock calibrated to the target intraclass correlation is added on top
    and the sum is clamped to [0, 1].
    """

    baseline: float = 0.15
    group_gaps: dict = field(default_factory=dict)
    category_gaps: dict = field(default_factory=dict)
    credential_returns: dict = field(
        default_factory=lambda: dict(DEFAULT_CREDENTIAL_RETURNS))
    minority_low_discretion_bonus: dict = field(default_factory=dict)
    discretion_gradient: float = 0.0
    minority_peer_effect: float = 0.0
    icc: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.baseline < 1.0:
            raise ValueError("baseline must lie in (0, 1)")
        audited = tuple(g for g in GROUPS if g != "WM")
        gaps = _probability_map("group_gaps", self.group_gaps, audited)
        object.__setattr__(self, "group_gaps", gaps)
        cats = {}
        for cat, extra in dict(self.category_gaps).items():
            cats[str(cat)] = _probability_map(
                f"category_gaps[{cat!r}]", extra, audited)
        object.__setattr__(self, "category_gaps", cats)
        returns = dict(DEFAULT_CREDENTIAL_RETURNS)
        returns.update(_probability_map("credential_returns",
                                        self.credential_returns, CREDENTIALS))
        object.__setattr__(self, "credential_returns", returns)
        bonus = _probability_map("minority_low_discretion_bonus",
                                 self.minority_low_discretion_bonus, CREDENTIALS)
        object.__setattr__(self, "minority_low_discretion_bonus", bonus)
        for g, gap in gaps.items():
            if not 0.0 < self.baseline + gap < 1.0:
                raise ValueError(f"baseline + gap for {g} leaves (0, 1)")
        for cat, extra in cats.items():
            for g, shift in extra.items():
                total = self.baseline + gaps.get(g, 0.0) + shift
                if not 0.0 < total < 1.0:
                    raise ValueError(
                        f"baseline + gap for {g} in category {cat!r} leaves (0, 1)")
        if not 0.0 <= self.icc <= 0.9:
            raise ValueError("icc must lie in [0, 0.9]")

    def expected_rates(self, dataset, frame=None):
        """Deterministic part of the callback probability per application."""
        if frame is None:
            frame = covariate_frame(dataset, self.alpha, self.beta, self.delta)
        if self.category_gaps:
            known = set(dataset.occupations["occupation_category"])
            missing = sorted(set(self.category_gaps) - known)
            if missing:
                raise ValueError(f"category_gaps name absent categories: {missing}")
        group = frame["group"].to_numpy()
        m = np.full(len(frame), self.baseline)
        for g, gap in self.group_gaps.items():
            m[group == g] += gap
        if self.category_gaps:
            category = frame["category"].to_numpy()
            for cat, extra in self.category_gaps.items():
                in_cat = category == cat
                for g, shift in extra.items():
                    m[in_cat & (group == g)] += shift
        returns = np.array([self.credential_returns[c] for c in CREDENTIALS])
        m += frame[list(CREDENTIALS)].to_numpy() @ returns
        minority = frame["minority"].to_numpy()
        if self.minority_low_discretion_bonus:
            low_minority = minority * (1.0 - frame["high_discretion"].to_numpy())
            for cred, coef in self.minority_low_discretion_bonus.items():
                m += coef * frame[cred].to_numpy() * low_minority
        if self.discretion_gradient != 0.0:
            m += self.discretion_gradient * minority * frame["z_discretion"].to_numpy()
        if self.minority_peer_effect != 0.0:
            m += (self.minority_peer_effect * frame["race_minority"].to_numpy()
                  * frame["peer_minority"].to_numpy())
        return m, frame


# -- ad-effect calibration ---------------------------------------------------

@dataclass(frozen=True)
class AdEffect:
    """Mean-zero scaled-Beta ad shock calibrated to an ICC target.

    The shock is ``offset + scale * X`` with ``X ~ Beta(a, b)``; support
    and moments are chosen so probabilities stay in [0, 1] for the rate
    range the calibration saw. ``sigma == 0`` encodes no shock.
    """

    sigma: float
    a: float
    b: float
    scale: float
    offset: float
    target_icc: float
    achieved_icc: float

    def draw(self, uniforms):
        u = np.asarray(uniforms, dtype=np.float64)
        if self.sigma == 0.0:
            return np.zeros_like(u)
        return self.offset + self.scale * betaincinv(self.a, self.b, u)


def _beta_shock(sigma, down, up):
    """Beta(a, b) layout with mean 0, sd ``sigma``, support in [-down, up].

    Prefers a symmetric bell when the variance fits inside the smaller
    headroom; otherwise pins the lower support at -down and spans the
    full headroom with a right-skewed shape. Returns None when no Beta
    with that variance fits the support.
    """
    var = sigma * sigma
    half = min(down, up)
    if var <= half * half / 3.0:
        a = 0.5 * (half * half / var - 1.0)
        return a, a, 2.0 * half, -half
    mu = down / (down + up)
    c = down * down * (1.0 - mu) / (mu * var) - 1.0
    if c <= 0.02:
        return None
    return c * mu, c * (1.0 - mu), down / mu, -down


def anova_icc(values, groups):
    """One-way ANOVA intraclass correlation with unequal-size correction."""
    y = np.asarray(values, dtype=np.float64)
    codes = np.unique(np.asarray(groups), return_inverse=True)[1]
    counts = np.bincount(codes)
    n, g = y.size, counts.size
    if g < 2:
        raise ValueError("need at least two groups")
    if n <= g:
        raise ValueError("need groups with more than one member overall")
    sums = np.bincount(codes, weights=y)
    means = sums / counts
    grand = y.mean()
    ssb = float(np.sum(counts * (means - grand) ** 2))
    ssw = float(np.sum(y * y) - np.sum(counts * means ** 2))
    msb = ssb / (g - 1)
    msw = ssw / (n - g)
    n0 = (n - np.sum(counts ** 2) / n) / (g - 1)
    denom = msb + (n0 - 1.0) * msw
    if denom <= 0.0:
        return 0.0
    return (msb - msw) / denom


def calibrate_ad_effect(dataset, form, seed=0, n_eval=None):
    """Find the ad-shock scale whose realized callback ICC hits the target.

    Measures the ANOVA ICC of simulated callbacks under common random
    numbers (``n_eval`` replicate draws averaged), and bisects on the
    shock standard deviation. By default ``n_eval`` scales inversely
    with the number of ads so the measurement noise of the target stays
    comparable across dataset sizes; small designs need more replicate
    draws than audit-scale ones for the bisection to settle near the
    true ICC. Raises :class:`CalibrationError` when the achieved ICC
    misses the target by more than 0.05.
    """
    m, frame = form.expected_rates(dataset)
    target = form.icc
    if target == 0.0:
        return AdEffect(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    down, up = float(m.min()), float(1.0 - m.max())
    if down <= 1e-9 or up <= 1e-9:
        raise CalibrationError(
            f"expected rates span [{m.min():.4f}, {m.max():.4f}]; no headroom "
            "for an ad effect")
    codes = frame["ad_code"].to_numpy()
    n_ads = int(codes.max()) + 1
    if n_eval is None:
        n_eval = max(3, -(-6000 // n_ads))
    u_unifs = [rng.uniform(rng.derive(seed, "icc-cal-shock", t),
                           np.arange(n_ads, dtype=np.int64))
               for t in range(n_eval)]
    y_unifs = [rng.uniform(rng.derive(seed, "icc-cal-outcome", t),
                           np.arange(m.size, dtype=np.int64))
               for t in range(n_eval)]

    def measure(sigma):
        layout = _beta_shock(sigma, down, up)
        if layout is None:
            raise CalibrationError(
                f"no feasible shock with sd {sigma:.4f} inside headroom "
                f"({down:.4f} down, {up:.4f} up)")
        a, b, scale, offset = layout
        vals = []
        for t in range(n_eval):
            u = offset + scale * betaincinv(a, b, u_unifs[t])
            p = np.clip(m + u[codes], 0.0, 1.0)
            vals.append(anova_icc(y_unifs[t] < p, codes))
        return float(np.mean(vals))

    lo, hi = 0.0, 0.98 * np.sqrt(down * up)
    top = measure(hi)
    if top < target:
        if target - top > 0.05:
            raise CalibrationError(
                f"maximum feasible shock reaches ICC {top:.3f} < target "
                f"{target:.3f}; lower the target or widen rate headroom")
        sigma, achieved = hi, top
    else:
        sigma_lo, sigma_hi = lo, hi
        for _ in range(40):
            mid = 0.5 * (sigma_lo + sigma_hi)
            if measure(mid) < target:
                sigma_lo = mid
            else:
                sigma_hi = mid
        sigma = 0.5 * (sigma_lo + sigma_hi)
        achieved = measure(sigma)
    if abs(achieved - target) > 0.05:
        raise CalibrationError(
            f"calibrated ICC {achieved:.3f} misses target {target:.3f} by "
            f"more than 0.05")
    a, b, scale, offset = _beta_shock(sigma, down, up)
    return AdEffect(sigma=float(sigma), a=float(a), b=float(b),
                    scale=float(scale), offset=float(offset),
                    target_icc=float(target), achieved_icc=float(achieved))


def simulate_reduced(dataset, form, master_seed, ad_effect=None):
    """Draw callbacks from the reduced-form linear probability model.

    ``ad_effect`` may carry a calibration from :func:`calibrate_ad_effect`
    to reuse across replications; by default one is calibrated here
    (deterministically). Clamp events (probabilities pushed outside
    [0, 1]) are counted in the result metadata and warn above 0.1%.
    """
    m, frame = form.expected_rates(dataset)
    if ad_effect is None:
        ad_effect = calibrate_ad_effect(dataset, form)
    elif ad_effect.target_icc != form.icc:
        raise ValueError(
            f"ad effect calibrated for ICC {ad_effect.target_icc}, form "
            f"targets {form.icc}")

    apps = dataset.apps
    ad_ids = dataset.ads["ad_id"].to_numpy()
    streams = rng.derive(master_seed, "reduced", ad_ids)
    shock = ad_effect.draw(rng.uniform(streams, rng.field_counters(_F_AD_EFFECT, 0)))
    codes = frame["ad_code"].to_numpy()
    raw = m + shock[codes]
    clamped = int(np.count_nonzero((raw < 0.0) | (raw > 1.0)))
    p = np.clip(raw, 0.0, 1.0)

    app_streams = rng.derive(master_seed, "reduced", apps["ad_id"].to_numpy())
    draws = rng.uniform(app_streams,
                        rng.field_counters(_F_BERNOULLI, apps["slot"].to_numpy()))
    callbacks = (draws < p).astype(np.int64)

    clamp_rate = clamped / len(apps)
    if clamp_rate > 0.001:
        warnings.warn(f"reduced-form DGP clamped {clamp_rate:.3%} of "
                      "callback probabilities", RuntimeWarning, stacklevel=2)
    return dataset.with_callbacks(callbacks, {
        "callback_model": "reduced",
        "callback_seed": int(master_seed),
        "clamp_count": clamped,
        "clamp_rate": clamp_rate,
        "icc_target": form.icc,
        "ad_effect_sigma": ad_effect.sigma,
        "ad_effect_achieved_icc": ad_effect.achieved_icc,
    })


# ---------------------------------------------------------------------------
# balance diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BalanceResult:
    """Group-by-attribute correlation table with zero-variance flags."""

    correlations: pd.DataFrame
    max_abs_correlation: float
    flagged: tuple

    def worst(self, n=5):
        stacked = self.correlations.abs().stack().sort_values(ascending=False)
        return stacked.head(n)


def _attribute_dummies(apps):
    cols = {}
    for attr in ("university", "major", "minor", "gpa", "internship",
                 "computer_skills", "college_job"):
        values = apps[attr].astype(str).to_numpy()
        for level in sorted(set(values)):
            cols[f"{attr}[{level}]"] = (values == level).astype(np.float64)
    for attr in ("volunteer", "spanish", "study_abroad"):
        cols[attr] = apps[attr].to_numpy().astype(np.float64)
    names = apps["applicant_name"].to_numpy()
    cols["name[alternate]"] = np.char.endswith(names.astype(str), "_2").astype(np.float64)
    return cols


def balance_check(dataset, extra=None):
    """Correlate every group indicator with every binarized attribute.

    Randomized designs should show all correlations small. Zero-variance
    columns are reported as correlation 0 and flagged rather than NaN.
    ``extra`` may add columns (arrays aligned with applications) to probe
    suspected leakage, e.g. a duplicated group indicator.
    """
    apps = dataset.apps
    group = apps["group"].to_numpy()
    attrs = _attribute_dummies(apps)
    if extra is not None:
        for name in extra:
            attrs[str(name)] = np.asarray(extra[name], dtype=np.float64)

    flagged = []
    table = {}
    n = len(apps)
    g_cols = {}
    for g in GROUPS:
        ind = (group == g).astype(np.float64)
        sd = ind.std()
        if sd == 0:
            flagged.append(f"group[{g}]")
        g_cols[g] = (ind - ind.mean(), sd)
    for name, col in attrs.items():
        sd = col.std()
        if sd == 0:
            flagged.append(name)
        centered = col - col.mean()
        row = []
        for g in GROUPS:
            g_centered, g_sd = g_cols[g]
            if sd == 0 or g_sd == 0:
                row.append(0.0)
            else:
                row.append(float(centered @ g_centered / (n * sd * g_sd)))
        table[name] = row
    corr = pd.DataFrame.from_dict(table, orient="index", columns=list(GROUPS))
    return BalanceResult(correlations=corr,
                         max_abs_correlation=float(corr.abs().to_numpy().max()),
                         flagged=tuple(flagged))

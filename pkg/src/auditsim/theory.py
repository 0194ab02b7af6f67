"""Closed-form screening model underlying the audit simulator.

An employer scores an applicant by blending a subjective impression with an
objective record. Job content governs how noisy each channel is: analytical
and interpersonal demands (amplified by customer contact) inflate the
subjective channel's noise variance, routine cognitive content sharpens the
objective channel. The employer weights the channels inversely to their
noise, which makes the subjective weight

    discretion = B / (B + P)

the share of the evaluation left to impressions. For an audited group whose
subjective signal retains only a fraction ``pi`` of its precision, the
composite noise variance exceeds the reference group's by a closed-form gap,
and callback probabilities fall accordingly. Everything here is elementwise:
pass scalars or equal-shaped numpy arrays in the task fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .normal import THRESHOLD_15PCT, normal_pdf, normal_ppf, normal_sf

GROUPS = ("WM", "WW", "BW", "HW", "BM", "HM")
RACE_MINORITY_GROUPS = ("BW", "HW", "BM", "HM")
BLACK_GROUPS = ("BW", "BM")

TASK_FIELDS = (
    "analytical", "interpersonal", "routine_cognitive",
    "routine_manual", "physical", "contact",
)


def _check_unit_interval(name, value):
    v = np.asarray(value, dtype=np.float64)
    if np.any(~np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
        raise ValueError(f"task intensity {name!r} must lie in [0, 1]")
    return value


@dataclass(frozen=True)
class TaskProfile:
    """Normalized task intensities of a job, each in [0, 1].

    Fields accept scalars or numpy arrays of a common shape, so a whole
    ad table can be evaluated in one call.
    """

    analytical: object = 0.0
    interpersonal: object = 0.0
    routine_cognitive: object = 0.0
    routine_manual: object = 0.0
    physical: object = 0.0
    contact: object = 0.0

    def __post_init__(self):
        for name in TASK_FIELDS:
            _check_unit_interval(name, getattr(self, name))


def _default_retention():
    return {g: (1.0 if g == "WM" else 0.9) for g in GROUPS}


@dataclass(frozen=True)
class ModelParams:
    """Structural parameters of the screening model.

    ``alpha``/``beta`` weight analytical and interpersonal content in the
    subjective noise, ``delta`` weights routine cognitive content in the
    objective precision, and ``gamma`` is the slope of the contact
    amplifier ``1 + gamma * contact`` (zero recovers the base model).
    ``threshold`` is the hiring standard on the latent productivity scale;
    the default yields a 15% callback rate at zero composite noise.
    ``retention`` maps each group to the fraction of subjective-signal
    precision the evaluator retains for it; the reference group is pinned
    at 1.
    """

    alpha: float = 1.0
    beta: float = 1.0
    delta: float = 1.0
    gamma: float = 0.0
    threshold: float = THRESHOLD_15PCT
    retention: Mapping[str, float] = field(default_factory=_default_retention)
    reference_group: str = "WM"

    def __post_init__(self):
        for name in ("alpha", "beta", "delta", "gamma"):
            if not np.isfinite(getattr(self, name)) or getattr(self, name) < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if self.reference_group not in self.retention:
            raise ValueError(f"retention must include the reference group "
                             f"{self.reference_group!r}")
        for g, pi in self.retention.items():
            _check_retention(pi, g)
        if self.retention[self.reference_group] != 1.0:
            raise ValueError("reference group retention must equal 1")

    @property
    def groups(self):
        return tuple(self.retention)

    @property
    def audited_groups(self):
        return tuple(g for g in self.retention if g != self.reference_group)


def _check_retention(pi, group=None):
    v = np.asarray(pi, dtype=np.float64)
    if np.any(~np.isfinite(v)) or np.any(v <= 0.0) or np.any(v > 1.0):
        where = f" for group {group!r}" if group else ""
        raise ValueError(f"retention{where} must lie in (0, 1]")


@dataclass(frozen=True)
class JobEvaluation:
    """Channel noise structure of one job (or an array of jobs)."""

    subjective_noise: object    # B >= 1
    objective_precision: object  # P >= 1
    objective_variance: object   # U = 1 / P
    discretion: object           # B / (B + P) in (0, 1)


@dataclass(frozen=True)
class GapResult:
    """Callback gap of one audited group relative to the reference.

    ``exact`` and ``taylor`` are group-minus-reference differences
    (nonpositive whenever retention < 1); ``taylor`` expands the callback
    rate around the reference composite variance with curvature
    ``curvature`` (so ``taylor = -curvature * variance_gap``).
    """

    retention: object
    noise_penalty: object
    v_reference: object
    v_group: object
    variance_gap: object
    exact: object
    taylor: object
    curvature: object


def contact_amplifier(profile, params):
    """The subjective-noise multiplier 1 + gamma * contact (>= 1)."""
    return 1.0 + params.gamma * np.asarray(profile.contact, dtype=np.float64)


def evaluate_job(profile, params):
    """Channel noise variances and the discretion index for a job."""
    amp = contact_amplifier(profile, params)
    b = 1.0 + (params.alpha * np.asarray(profile.analytical, dtype=np.float64)
               + params.beta * np.asarray(profile.interpersonal, dtype=np.float64)) * amp
    p = 1.0 + params.delta * np.asarray(profile.routine_cognitive, dtype=np.float64)
    return JobEvaluation(
        subjective_noise=b,
        objective_precision=p,
        objective_variance=1.0 / p,
        discretion=b / (b + p),
    )


def noise_penalty(retention):
    """Penalty 1 / pi - 1 from retaining a fraction pi of signal precision."""
    _check_retention(retention)
    return 1.0 / np.asarray(retention, dtype=np.float64) - 1.0


def composite_variance(profile, params, retention=1.0):
    """Noise variance of the blended evaluation for a given retention."""
    _check_retention(retention)
    ev = evaluate_job(profile, params)
    e = ev.discretion
    tau2 = ev.subjective_noise / np.asarray(retention, dtype=np.float64)
    return e * e * tau2 + (1.0 - e) ** 2 * ev.objective_variance


def variance_gap(profile, params, retention):
    """Composite-variance excess of an audited group, in closed form.

    Identical to ``composite_variance(..., retention) -
    composite_variance(..., 1)``; the closed form
    ``penalty * B**3 / (B + P)**2`` is exact, not an approximation.
    """
    ev = evaluate_job(profile, params)
    b, p = ev.subjective_noise, ev.objective_precision
    return noise_penalty(retention) * b ** 3 / (b + p) ** 2


def variance_gap_partials(profile, params, retention):
    """Partial derivatives of the variance gap in each task intensity.

    Returns a dict keyed by task field name for the four inputs the gap
    responds to. With S = B + P the derivative of B**3 / S**2 in B is
    B**2 (B + 3P) / S**3, and the contact derivative follows by the chain
    rule through the amplifier, which makes it vanish exactly when the
    job has no analytical or interpersonal content.
    """
    pen = noise_penalty(retention)
    amp = contact_amplifier(profile, params)
    ev = evaluate_job(profile, params)
    b, p = ev.subjective_noise, ev.objective_precision
    s = b + p
    core = b * b * (b + 3.0 * p) / s ** 3
    loading = (params.alpha * np.asarray(profile.analytical, dtype=np.float64)
               + params.beta * np.asarray(profile.interpersonal, dtype=np.float64))
    return {
        "analytical": pen * params.alpha * amp * core,
        "interpersonal": pen * params.beta * amp * core,
        "routine_cognitive": -2.0 * pen * params.delta * b ** 3 / s ** 3,
        "contact": pen * loading * params.gamma * core,
    }


def callback_prob(noise_variance, threshold):
    """Probability the blended evaluation clears the hiring standard.

    The composite evaluation has variance 1 + v (unit productivity variance
    plus composite noise v) and the employer demands it exceed
    ``threshold * (1 + v)``, so the callback rate is the upper normal tail
    at ``threshold * sqrt(1 + v)``: higher composite noise means a stricter
    effective cutoff and a lower callback rate.
    """
    v = np.asarray(noise_variance, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("noise variance must be nonnegative")
    out = normal_sf(threshold * np.sqrt(1.0 + v))
    return out if np.ndim(out) else float(out)


def gap_curvature(v_reference, threshold):
    """Sensitivity of the callback rate to composite variance (positive).

    The first-order callback gap is ``-gap_curvature(V_ref, t) *
    variance_gap``.
    """
    z = threshold * np.sqrt(1.0 + np.asarray(v_reference, dtype=np.float64))
    return normal_pdf(z) * threshold / (2.0 * np.sqrt(1.0 + v_reference))


def callback_gap(profile, params, retention):
    """Exact and first-order callback gaps for one retention level."""
    _check_retention(retention)
    v_ref = composite_variance(profile, params, 1.0)
    v_grp = composite_variance(profile, params, retention)
    gap = variance_gap(profile, params, retention)
    k0 = gap_curvature(v_ref, params.threshold)
    exact = (callback_prob(v_grp, params.threshold)
             - callback_prob(v_ref, params.threshold))
    return GapResult(
        retention=retention,
        noise_penalty=noise_penalty(retention),
        v_reference=v_ref,
        v_group=v_grp,
        variance_gap=gap,
        exact=exact,
        taylor=-k0 * gap,
        curvature=k0,
    )


def group_gaps(profile, params):
    """GapResult per audited group under ``params.retention``."""
    return {g: callback_gap(profile, params, params.retention[g])
            for g in params.audited_groups}


def default_threshold(baseline_rate=0.15):
    """Hiring standard that yields ``baseline_rate`` at zero composite noise."""
    if not 0.0 < baseline_rate < 1.0:
        raise ValueError("baseline rate must lie in (0, 1)")
    return normal_ppf(1.0 - baseline_rate)


def discretion_median_split(discretion):
    """Boolean high-discretion indicator at the median (ties go high)."""
    d = np.asarray(discretion, dtype=np.float64)
    return d >= np.median(d)

"""Self-certification of the evaluation-model math.

Each check measures a property of the closed forms against an
independent route (Monte Carlo, finite differences, a high-precision
library, or an exact structural fact) and reports the measured error
next to its tolerance. The checks accept replacement callables for the
pieces they certify so tests can inject a broken implementation and
confirm the right property trips.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import mpmath
import numpy as np

from . import rng, theory
from .normal import normal_cdf, normal_ppf


@dataclass(frozen=True)
class PropertyResult:
    """Outcome of one certification check."""

    name: str
    passed: bool
    error: float
    tolerance: float
    detail: str

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "error": float(self.error),
            "tolerance": float(self.tolerance),
            "detail": self.detail,
        }


@dataclass(frozen=True)
class VerifyReport:
    """All certification outcomes from one run."""

    seed: int
    results: tuple

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "passed": bool(self.passed),
            "properties": [r.to_dict() for r in self.results],
        }

    def lines(self):
        out = []
        for r in self.results:
            flag = "pass" if r.passed else "FAIL"
            out.append(f"[{flag}] {r.name}: error {r.error:.3e} "
                       f"(tolerance {r.tolerance:.1e}) {r.detail}")
        out.append(f"overall: {'pass' if self.passed else 'FAIL'}")
        return out


def _random_point(stream):
    """One random task profile, parameter set, and retention level."""
    u = rng.uniform(stream, np.arange(12, dtype=np.int64))
    profile = theory.TaskProfile(*(0.05 + 0.90 * u[:6]))
    params = theory.ModelParams(alpha=0.25 + 1.75 * u[6],
                                beta=0.25 + 1.75 * u[7],
                                delta=0.25 + 1.75 * u[8],
                                gamma=1.5 * u[9])
    retention = 0.55 + 0.43 * u[10]
    return profile, params, retention


def check_variance_gap_mc(seed=0, points=20, draws=1_000_000, gap_fn=None):
    """Closed-form variance gap vs a paired Monte Carlo estimate.

    Both groups' composite signals are built from the same normal draws,
    so the mean of the paired difference of squared signals estimates the
    gap with a small standard error. The reported error is the worst
    gap-to-estimate distance in MC standard-error units.
    """
    gap_fn = gap_fn or theory.variance_gap
    worst = 0.0
    worst_detail = ""
    counters = np.arange(draws, dtype=np.int64)
    for i in range(points):
        profile, params, retention = _random_point(rng.derive(seed, "vgap-pt", i))
        ev = theory.evaluate_job(profile, params)
        e = float(ev.discretion)
        b = float(ev.subjective_noise)
        u_var = float(ev.objective_variance)
        closed = float(gap_fn(profile, params, retention))

        z_s = rng.normal(rng.derive(seed, "vgap-subj", i), counters)
        z_o = rng.normal(rng.derive(seed, "vgap-obj", i), counters)
        sig_grp = e * np.sqrt(b / retention) * z_s + (1.0 - e) * np.sqrt(u_var) * z_o
        sig_ref = e * np.sqrt(b) * z_s + (1.0 - e) * np.sqrt(u_var) * z_o
        d = sig_grp ** 2 - sig_ref ** 2
        est = float(d.mean())
        se = float(d.std(ddof=1) / np.sqrt(draws))
        dist = abs(est - closed) / se
        if dist > worst:
            worst = dist
            worst_detail = (f"point {i}: closed {closed:.6e}, mc {est:.6e}, "
                            f"mc se {se:.2e}")
    return PropertyResult("variance-gap-mc", worst <= 3.0, worst, 3.0,
                          f"worst of {points} points in se units; {worst_detail}")


def check_gradients(seed=0, points=100, step=1e-5, partials_fn=None):
    """Analytic task-intensity partials vs central finite differences."""
    partials_fn = partials_fn or theory.variance_gap_partials
    fields = ("analytical", "interpersonal", "routine_cognitive", "contact")
    worst = 0.0
    worst_detail = ""
    for i in range(points):
        profile, params, retention = _random_point(rng.derive(seed, "grad-pt", i))
        analytic = partials_fn(profile, params, retention)
        for f in fields:
            x = getattr(profile, f)
            hi = dataclasses.replace(profile, **{f: x + step})
            lo = dataclasses.replace(profile, **{f: x - step})
            fd = (theory.variance_gap(hi, params, retention)
                  - theory.variance_gap(lo, params, retention)) / (2.0 * step)
            ref = max(abs(float(analytic[f])), 1e-12)
            rel = abs(float(fd) - float(analytic[f])) / ref
            if rel > worst:
                worst = rel
                worst_detail = f"point {i}, d/d{f}"
    return PropertyResult("gradient-partials", worst <= 1e-6, worst, 1e-6,
                          f"worst relative error over {points} points "
                          f"x {len(fields)} partials ({worst_detail})")


def check_contact_partial_zero(seed=0, points=50, partials_fn=None):
    """Contact partial vanishes exactly when the subjective loading is zero."""
    partials_fn = partials_fn or theory.variance_gap_partials
    worst = 0.0
    for i in range(points):
        profile, params, retention = _random_point(rng.derive(seed, "czero", i))
        flat = dataclasses.replace(profile, analytical=0.0, interpersonal=0.0)
        d = abs(float(partials_fn(flat, params, retention)["contact"]))
        worst = max(worst, d)
    return PropertyResult("contact-partial-zero", worst <= 1e-15, worst, 1e-15,
                          f"max |contact partial| at zero loading, {points} points")


def check_taylor_limit(seed=0, points=60, gap_fn=None):
    """First-order callback gap tracks the exact gap as the penalty shrinks.

    At penalties up to 1e-3 the ratio must stay inside [0.99, 1.01], and
    at full retention both gaps must be exactly zero.
    """
    gap_fn = gap_fn or theory.callback_gap
    worst = 0.0
    for i in range(points):
        profile, params, _ = _random_point(rng.derive(seed, "taylor", i))
        penalty = 10.0 ** (-3.0 - 3.0 * rng.uniform(
            rng.derive(seed, "taylor-pen", i), np.arange(1))[0])
        retention = 1.0 / (1.0 + penalty)
        res = gap_fn(profile, params, retention)
        ratio = float(res.taylor) / float(res.exact)
        worst = max(worst, abs(ratio - 1.0))

        zero = gap_fn(profile, params, 1.0)
        if float(zero.exact) != 0.0 or float(zero.taylor) != 0.0:
            return PropertyResult(
                "taylor-limit", False, max(abs(float(zero.exact)),
                                           abs(float(zero.taylor))), 0.0,
                f"gaps nonzero at full retention (point {i})")
    return PropertyResult("taylor-limit", worst <= 0.01, worst, 0.01,
                          f"max |taylor/exact - 1| over {points} points with "
                          "penalty <= 1e-3; exact zero at full retention")


def check_contact_falsification(seed=0, points=40, gap_fn=None):
    """Contact moves the gap only through analytical/interpersonal loading.

    With zero loading the gap is constant in contact to machine
    precision; with positive loading and a positive amplifier the gap is
    strictly increasing along a contact grid.
    """
    gap_fn = gap_fn or theory.variance_gap
    ks = np.linspace(0.0, 1.0, 11)
    worst_flat = 0.0
    min_rise = np.inf
    for i in range(points):
        profile, params, retention = _random_point(rng.derive(seed, "falsify", i))
        if params.gamma == 0.0:
            params = dataclasses.replace(params, gamma=0.5)

        flat = dataclasses.replace(profile, analytical=0.0, interpersonal=0.0)
        gaps_flat = np.array([float(gap_fn(dataclasses.replace(flat, contact=k),
                                           params, retention)) for k in ks])
        worst_flat = max(worst_flat, float(np.ptp(gaps_flat)))

        loaded = profile if profile.analytical + profile.interpersonal > 0 else (
            dataclasses.replace(profile, analytical=0.3))
        gaps = np.array([float(gap_fn(dataclasses.replace(loaded, contact=k),
                                      params, retention)) for k in ks])
        min_rise = min(min_rise, float(np.diff(gaps).min()))
    passed = worst_flat <= 1e-15 and min_rise > 0.0
    return PropertyResult(
        "contact-falsification", passed, worst_flat, 1e-15,
        f"max spread at zero loading {worst_flat:.2e}; min grid increase "
        f"with loading {min_rise:.3e} (must be positive)")


def check_callback_monotonic(seed=0, points=30):
    """Callback rate strictly decreases in composite noise; gaps stay signed."""
    v = np.linspace(0.0, 10.0, 201)
    min_drop = np.inf
    for i in range(points):
        profile, params, retention = _random_point(rng.derive(seed, "mono", i))
        rates = theory.callback_prob(v, params.threshold)
        min_drop = min(min_drop, float(-np.diff(rates).max()))
        ev = theory.evaluate_job(profile, params)
        e = float(ev.discretion)
        gap = float(theory.variance_gap(profile, params, retention))
        if not (0.0 <= e < 1.0) or gap < 0.0:
            return PropertyResult("range-and-monotonicity", False, gap, 0.0,
                                  f"range violation at point {i}")
    return PropertyResult("range-and-monotonicity", min_drop > 0.0, min_drop, 0.0,
                          f"min callback decrease along noise grid {min_drop:.3e} "
                          "(must be positive); discretion and gap ranges hold")


def check_normal_certification(points=25):
    """Normal CDF and inverse against a 50-digit reference and round trips."""
    mpmath.mp.dps = 50
    xs = np.concatenate([np.linspace(-8.0, 8.0, points), [-37.0, 37.0]])
    worst = 0.0
    for x in xs:
        ref = float(mpmath.ncdf(mpmath.mpf(float(x))))
        got = float(normal_cdf(float(x)))
        scale = max(ref, 1e-300)
        worst = max(worst, abs(got - ref) / scale)
    ps = np.concatenate([np.geomspace(1e-12, 0.5, points),
                         1.0 - np.geomspace(1e-12, 0.5, points)])
    rt = float(np.max(np.abs(normal_cdf(normal_ppf(ps)) - ps) / ps))
    err = max(worst, rt)
    return PropertyResult("normal-certification", err <= 1e-12, err, 1e-12,
                          f"cdf vs 50-digit reference rel {worst:.2e}; "
                          f"cdf(ppf(p)) round trip rel {rt:.2e}")


_CHECKS = (
    ("variance-gap-mc", check_variance_gap_mc),
    ("gradient-partials", check_gradients),
    ("contact-partial-zero", check_contact_partial_zero),
    ("taylor-limit", check_taylor_limit),
    ("contact-falsification", check_contact_falsification),
    ("range-and-monotonicity", check_callback_monotonic),
    ("normal-certification", check_normal_certification),
)


def run_verify(seed=0, draws=1_000_000, overrides=None):
    """Run every certification check and collect a report.

    ``overrides`` maps a check name to extra keyword arguments for that
    check (for example a replacement ``partials_fn``), which lets tests
    confirm that a broken implementation fails by name.
    """
    overrides = overrides or {}
    unknown = set(overrides) - {name for name, _ in _CHECKS}
    if unknown:
        raise ValueError(f"unknown verify checks: {sorted(unknown)}")
    results = []
    for name, fn in _CHECKS:
        kwargs = dict(overrides.get(name, {}))
        if fn is check_variance_gap_mc:
            kwargs.setdefault("seed", seed)
            kwargs.setdefault("draws", draws)
        elif fn is not check_normal_certification:
            kwargs.setdefault("seed", seed)
        results.append(fn(**kwargs))
    return VerifyReport(seed=seed, results=tuple(results))

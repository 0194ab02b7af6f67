"""Closed-form screening model checked by hand algebra and derivatives.

The anchor case is worked out with explicit literals; derivative claims
are confirmed against central finite differences, and the exact gap is
confirmed against the definitional difference of composite variances.
"""

import dataclasses

import numpy as np
import pytest

from auditsim import theory
from auditsim.normal import THRESHOLD_15PCT, normal_pdf, normal_sf

# Hand-worked anchor: amp = 1 + 0.5 * 0.5, loading = 2 * 0.5 + 1 * 0.25,
# B = 1 + 1.25 * 1.25, P = 1 + 1.5 * 0.4.
PROFILE = theory.TaskProfile(analytical=0.5, interpersonal=0.25,
                             routine_cognitive=0.4, routine_manual=0.1,
                             physical=0.2, contact=0.5)
PARAMS = theory.ModelParams(alpha=2.0, beta=1.0, delta=1.5, gamma=0.5)
B = 2.5625
P = 1.6


class TestEvaluateJob:
    def test_hand_anchor(self):
        ev = theory.evaluate_job(PROFILE, PARAMS)
        assert float(ev.subjective_noise) == pytest.approx(B, abs=1e-15)
        assert float(ev.objective_precision) == pytest.approx(P, abs=1e-15)
        assert float(ev.objective_variance) == pytest.approx(1.0 / P, rel=1e-15)
        assert float(ev.discretion) == pytest.approx(B / (B + P), rel=1e-15)

    def test_contact_amplifier(self):
        assert theory.contact_amplifier(PROFILE, PARAMS) == pytest.approx(1.25)
        flat = theory.ModelParams(gamma=0.0)
        assert theory.contact_amplifier(PROFILE, flat) == 1.0

    def test_zero_profile_is_unit_channels(self):
        ev = theory.evaluate_job(theory.TaskProfile(), PARAMS)
        assert float(ev.subjective_noise) == 1.0
        assert float(ev.objective_precision) == 1.0
        assert float(ev.discretion) == 0.5

    def test_vectorized_matches_scalar(self):
        a = np.array([0.1, 0.5, 0.9])
        prof = dataclasses.replace(PROFILE, analytical=a)
        ev = theory.evaluate_job(prof, PARAMS)
        for i, x in enumerate(a):
            one = theory.evaluate_job(dataclasses.replace(PROFILE, analytical=x),
                                      PARAMS)
            assert ev.subjective_noise[i] == one.subjective_noise


class TestVarianceGap:
    def test_noise_penalty_values(self):
        assert theory.noise_penalty(0.8) == pytest.approx(0.25, abs=1e-15)
        assert theory.noise_penalty(0.5) == 1.0
        assert theory.noise_penalty(1.0) == 0.0

    def test_noise_penalty_domain(self):
        for bad in (0.0, -0.5, 1.5, np.nan):
            with pytest.raises(ValueError):
                theory.noise_penalty(bad)

    def test_hand_anchor(self):
        expected = 0.25 * B**3 / (B + P) ** 2
        got = theory.variance_gap(PROFILE, PARAMS, 0.8)
        assert float(got) == pytest.approx(expected, rel=1e-14)

    def test_equals_composite_variance_difference(self):
        rng = np.random.default_rng(21)
        for _ in range(25):
            u = rng.uniform(0.05, 0.95, size=6)
            prof = theory.TaskProfile(*u)
            params = theory.ModelParams(alpha=rng.uniform(0.2, 2),
                                        beta=rng.uniform(0.2, 2),
                                        delta=rng.uniform(0.2, 2),
                                        gamma=rng.uniform(0, 1.5))
            pi = rng.uniform(0.55, 0.99)
            direct = (theory.composite_variance(prof, params, pi)
                      - theory.composite_variance(prof, params, 1.0))
            closed = theory.variance_gap(prof, params, pi)
            assert float(closed) == pytest.approx(float(direct), rel=1e-11)

    def test_composite_variance_hand_anchor(self):
        e = B / (B + P)
        expected = e * e * (B / 0.8) + (1 - e) ** 2 / P
        got = theory.composite_variance(PROFILE, PARAMS, 0.8)
        assert float(got) == pytest.approx(expected, rel=1e-14)

    def test_gap_nonnegative_and_zero_at_full_retention(self):
        assert float(theory.variance_gap(PROFILE, PARAMS, 1.0)) == 0.0
        assert float(theory.variance_gap(PROFILE, PARAMS, 0.9)) > 0.0


class TestPartials:
    FIELDS = ("analytical", "interpersonal", "routine_cognitive", "contact")

    def test_keys(self):
        d = theory.variance_gap_partials(PROFILE, PARAMS, 0.8)
        assert set(d) == set(self.FIELDS)

    def test_against_finite_differences(self):
        rng = np.random.default_rng(4)
        step = 1e-6
        for _ in range(8):
            prof = theory.TaskProfile(*rng.uniform(0.05, 0.95, size=6))
            params = theory.ModelParams(alpha=rng.uniform(0.2, 2),
                                        beta=rng.uniform(0.2, 2),
                                        delta=rng.uniform(0.2, 2),
                                        gamma=rng.uniform(0, 1.5))
            pi = rng.uniform(0.55, 0.99)
            grad = theory.variance_gap_partials(prof, params, pi)
            for f in self.FIELDS:
                x = getattr(prof, f)
                hi = dataclasses.replace(prof, **{f: x + step})
                lo = dataclasses.replace(prof, **{f: x - step})
                fd = (theory.variance_gap(hi, params, pi)
                      - theory.variance_gap(lo, params, pi)) / (2 * step)
                assert float(grad[f]) == pytest.approx(float(fd), rel=2e-5,
                                                       abs=1e-10)

    def test_contact_partial_exactly_zero_without_loading(self):
        flat = dataclasses.replace(PROFILE, analytical=0.0, interpersonal=0.0)
        grad = theory.variance_gap_partials(flat, PARAMS, 0.8)
        assert float(grad["contact"]) == 0.0

    def test_signs(self):
        grad = theory.variance_gap_partials(PROFILE, PARAMS, 0.8)
        assert float(grad["analytical"]) > 0
        assert float(grad["interpersonal"]) > 0
        assert float(grad["routine_cognitive"]) < 0
        assert float(grad["contact"]) > 0


class TestCallbacks:
    def test_zero_noise_baseline(self):
        assert abs(theory.callback_prob(0.0, THRESHOLD_15PCT) - 0.15) < 1e-12

    def test_matches_survival_form(self):
        v = np.array([0.0, 0.3, 2.0, 9.0])
        got = theory.callback_prob(v, 1.1)
        np.testing.assert_allclose(got, normal_sf(1.1 * np.sqrt(1 + v)),
                                   rtol=0, atol=0)

    def test_decreasing_in_noise(self):
        rates = theory.callback_prob(np.linspace(0, 10, 101), THRESHOLD_15PCT)
        assert np.all(np.diff(rates) < 0)

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            theory.callback_prob(-0.1, 1.0)

    def test_curvature_is_minus_rate_slope(self):
        h = 1e-6
        for v in (0.1, 0.4, 2.0):
            slope = (theory.callback_prob(v + h, THRESHOLD_15PCT)
                     - theory.callback_prob(v - h, THRESHOLD_15PCT)) / (2 * h)
            curv = theory.gap_curvature(v, THRESHOLD_15PCT)
            assert curv == pytest.approx(-slope, rel=1e-6)
            z = THRESHOLD_15PCT * np.sqrt(1 + v)
            hand = normal_pdf(z) * THRESHOLD_15PCT / (2 * np.sqrt(1 + v))
            assert curv == pytest.approx(hand, rel=1e-15)


class TestCallbackGap:
    def test_fields_consistent(self):
        res = theory.callback_gap(PROFILE, PARAMS, 0.8)
        assert res.retention == 0.8
        assert float(res.noise_penalty) == pytest.approx(0.25)
        assert float(res.variance_gap) == pytest.approx(
            float(res.v_group) - float(res.v_reference), rel=1e-11)
        direct = (theory.callback_prob(res.v_group, PARAMS.threshold)
                  - theory.callback_prob(res.v_reference, PARAMS.threshold))
        assert float(res.exact) == pytest.approx(direct, rel=1e-15)
        assert float(res.taylor) == -float(res.curvature) * float(res.variance_gap)

    def test_gaps_nonpositive(self):
        res = theory.callback_gap(PROFILE, PARAMS, 0.7)
        assert float(res.exact) < 0
        assert float(res.taylor) < 0

    def test_zero_at_full_retention(self):
        res = theory.callback_gap(PROFILE, PARAMS, 1.0)
        assert float(res.exact) == 0.0
        assert float(res.taylor) == 0.0

    def test_group_gaps_cover_audited_groups(self):
        gaps = theory.group_gaps(PROFILE, theory.ModelParams())
        assert set(gaps) == set(theory.GROUPS) - {"WM"}
        for res in gaps.values():
            assert float(res.exact) <= 0.0

    def test_array_profile(self):
        prof = dataclasses.replace(PROFILE,
                                   analytical=np.array([0.2, 0.5, 0.8]))
        res = theory.callback_gap(prof, PARAMS, 0.8)
        assert np.asarray(res.exact).shape == (3,)


class TestValidation:
    def test_task_profile_bounds(self):
        with pytest.raises(ValueError):
            theory.TaskProfile(analytical=1.5)
        with pytest.raises(ValueError):
            theory.TaskProfile(contact=-0.1)
        with pytest.raises(ValueError):
            theory.TaskProfile(physical=np.nan)

    def test_params_bounds(self):
        with pytest.raises(ValueError):
            theory.ModelParams(alpha=-0.1)
        with pytest.raises(ValueError):
            theory.ModelParams(gamma=np.inf)
        with pytest.raises(ValueError):
            theory.ModelParams(threshold=np.nan)

    def test_retention_table_rules(self):
        with pytest.raises(ValueError):
            theory.ModelParams(retention={"BW": 0.9})
        with pytest.raises(ValueError):
            theory.ModelParams(retention={"WM": 0.9, "BW": 0.9})
        with pytest.raises(ValueError):
            theory.ModelParams(retention={"WM": 1.0, "BW": 0.0})

    def test_default_retention_reference_pinned(self):
        params = theory.ModelParams()
        assert params.retention["WM"] == 1.0
        assert params.reference_group == "WM"
        assert set(params.audited_groups) == set(theory.GROUPS) - {"WM"}


class TestHelpers:
    def test_default_threshold(self):
        assert theory.default_threshold() == THRESHOLD_15PCT
        assert abs(theory.default_threshold(0.5)) < 1e-15
        for bad in (0.0, 1.0, -0.2):
            with pytest.raises(ValueError):
                theory.default_threshold(bad)

    def test_median_split_ties_go_high(self):
        got = theory.discretion_median_split(np.array([1.0, 2.0, 2.0, 3.0]))
        np.testing.assert_array_equal(got, [False, True, True, True])

    def test_median_split_even_count(self):
        got = theory.discretion_median_split(np.array([1.0, 2.0, 3.0, 4.0]))
        np.testing.assert_array_equal(got, [False, False, True, True])

"""Tests for design-effect arithmetic, analytic power, and the MC engine."""

import numpy as np
import pytest
from scipy import stats

from auditsim import rng
from auditsim.power import (
    PowerProtocol,
    adjusted_n,
    analytic_power_two_prop,
    audit_reference_protocol,
    design_effect,
    mc_power,
    two_arm_cluster_protocol,
)


class TestDesignEffect:
    def test_reference_value(self):
        assert design_effect(4, 0.30) == 1.90

    def test_single_draw_has_no_inflation(self):
        assert design_effect(1, 0.8) == 1.0

    def test_zero_icc_has_no_inflation(self):
        assert design_effect(4, 0.0) == 1.0

    def test_linear_in_extra_draws(self):
        assert design_effect(3, 0.5) == 2.0
        assert design_effect(5, 0.5) == 3.0

    def test_rejects_k_below_one(self):
        with pytest.raises(ValueError, match="at least 1"):
            design_effect(0, 0.3)

    @pytest.mark.parametrize("icc", [-0.1, 1.0, 1.5])
    def test_rejects_icc_outside_range(self, icc):
        with pytest.raises(ValueError, match="icc"):
            design_effect(4, icc)


class TestAdjustedN:
    def test_reference_value(self):
        assert adjusted_n(5586, 1.9) == 10614

    def test_rounds_up(self):
        assert adjusted_n(100, 1.001) == 101

    def test_exact_product_is_not_inflated(self):
        assert adjusted_n(100, 1.0) == 100
        assert adjusted_n(250, 2.0) == 500

    def test_returns_int(self):
        assert isinstance(adjusted_n(10, 1.5), int)

    def test_rejects_base_below_one(self):
        with pytest.raises(ValueError, match="base_n"):
            adjusted_n(0, 1.5)

    def test_rejects_deflation(self):
        with pytest.raises(ValueError, match="at least 1"):
            adjusted_n(100, 0.99)


def _power_oracle(p0, p1, n_per_arm, alpha, de):
    # Same pooled-null / unpooled-alternative normal approximation,
    # rebuilt on scipy so the two normal implementations cross-check.
    n_eff = n_per_arm / de
    pbar = 0.5 * (p0 + p1)
    se_null = np.sqrt(2.0 * pbar * (1.0 - pbar) / n_eff)
    se_alt = np.sqrt((p0 * (1.0 - p0) + p1 * (1.0 - p1)) / n_eff)
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    d = abs(p1 - p0)
    return stats.norm.cdf((d - z * se_null) / se_alt) + stats.norm.cdf(
        (-d - z * se_null) / se_alt)


class TestAnalyticPower:
    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.2])
    def test_equal_rates_return_alpha(self, alpha):
        power = analytic_power_two_prop(0.15, 0.15, 500, alpha=alpha)
        assert power == pytest.approx(alpha, abs=1e-12)

    def test_matches_scipy_reconstruction(self):
        cases = [
            (0.15, 0.225, 5586, 0.05, 1.0),
            (0.15, 0.225, 10614, 0.05, 1.9),
            (0.10, 0.14, 800, 0.05, 1.3),
            (0.50, 0.55, 2000, 0.01, 1.0),
            (0.30, 0.20, 350, 0.10, 2.2),
        ]
        for p0, p1, n, alpha, de in cases:
            ours = analytic_power_two_prop(p0, p1, n, alpha, de)
            assert ours == pytest.approx(
                _power_oracle(p0, p1, n, alpha, de), rel=1e-10)

    def test_increasing_in_sample_size(self):
        powers = [analytic_power_two_prop(0.15, 0.20, n) for n in
                  (200, 500, 1000, 5000)]
        assert all(a < b for a, b in zip(powers, powers[1:]))

    def test_increasing_in_effect_size(self):
        powers = [analytic_power_two_prop(0.15, p1, 800) for p1 in
                  (0.17, 0.20, 0.25, 0.30)]
        assert all(a < b for a, b in zip(powers, powers[1:]))

    def test_design_effect_shrinks_power(self):
        flat = analytic_power_two_prop(0.15, 0.225, 1000)
        clustered = analytic_power_two_prop(0.15, 0.225, 1000, de=1.9)
        assert clustered < flat

    def test_design_effect_equals_smaller_sample(self):
        # n_eff = 2000 / 2 = 1000 exactly, so the two calls coincide.
        assert analytic_power_two_prop(0.15, 0.225, 2000, de=2.0) == \
            analytic_power_two_prop(0.15, 0.225, 1000)

    def test_symmetric_in_rate_order(self):
        assert analytic_power_two_prop(0.15, 0.25, 400) == \
            analytic_power_two_prop(0.25, 0.15, 400)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2])
    def test_rejects_degenerate_rates(self, bad):
        with pytest.raises(ValueError, match="p0"):
            analytic_power_two_prop(bad, 0.2, 100)
        with pytest.raises(ValueError, match="p1"):
            analytic_power_two_prop(0.2, bad, 100)

    def test_rejects_tiny_arm(self):
        with pytest.raises(ValueError, match="n_per_arm"):
            analytic_power_two_prop(0.15, 0.2, 1)

    @pytest.mark.parametrize("alpha", [0.0, 1.0])
    def test_rejects_degenerate_alpha(self, alpha):
        with pytest.raises(ValueError, match="alpha"):
            analytic_power_two_prop(0.15, 0.2, 100, alpha=alpha)

    def test_rejects_deflating_design_effect(self):
        with pytest.raises(ValueError, match="design effect"):
            analytic_power_two_prop(0.15, 0.2, 100, de=0.9)


def _z_test_protocol(n=25, mu=0.6):
    """Shifted-mean z test with a textbook closed-form power."""

    def simulate(seed):
        return np.random.default_rng(seed).normal(mu, 1.0, size=n)

    def z_test(sample):
        z = np.sqrt(len(sample)) * float(np.mean(sample))
        return float(2.0 * stats.norm.sf(abs(z)))

    return PowerProtocol(name="z test", simulate=simulate, test=z_test,
                         n_per_arm=n, k=1, icc=0.0)


class TestMcPower:
    def test_exact_bookkeeping(self):
        # Calls 1..100: every fifth simulation raises (20 failures), and
        # among the 80 survivors the odd call numbers reject (40), so
        # every report field has a hand-computable value.
        calls = {"n": 0}

        def simulate(seed):
            calls["n"] += 1
            if calls["n"] % 5 == 0:
                raise ValueError("synthetic failure")
            return calls["n"]

        protocol = PowerProtocol(
            name="bookkeeping", simulate=simulate,
            test=lambda value: 0.0 if value % 2 == 1 else 1.0,
            n_per_arm=50, k=4, icc=0.30)
        report = mc_power(protocol, 100, master_seed=0)
        assert report.test == "bookkeeping"
        assert report.failed == 20
        assert report.replications == 80
        assert report.mc_power == 0.5
        assert report.mc_se == pytest.approx(np.sqrt(0.25 / 80), rel=1e-12)
        assert report.design_effect == design_effect(4, 0.30)
        assert report.base_n == 50
        assert report.adjusted_n == adjusted_n(50, report.design_effect)
        assert report.alpha == 0.05

    def test_rejection_includes_boundary(self):
        protocol = PowerProtocol(name="boundary", simulate=lambda seed: None,
                                 test=lambda data: 0.05,
                                 n_per_arm=10, k=1, icc=0.0)
        assert mc_power(protocol, 100, 0).mc_power == 1.0

    def test_alpha_override(self):
        protocol = PowerProtocol(name="boundary", simulate=lambda seed: None,
                                 test=lambda data: 0.05,
                                 n_per_arm=10, k=1, icc=0.0)
        report = mc_power(protocol, 100, 0, alpha=0.01)
        assert report.mc_power == 0.0
        assert report.alpha == 0.01

    def test_replication_seeds_follow_derivation(self):
        seen = []

        def simulate(seed):
            seen.append(seed)
            return seed

        protocol = PowerProtocol(name="probe", simulate=simulate,
                                 test=lambda data: 1.0,
                                 n_per_arm=10, k=1, icc=0.0)
        mc_power(protocol, 120, master_seed=7)
        assert seen == [rng.derive(7, "power-rep", r) for r in range(120)]

    def test_toy_power_matches_closed_form(self):
        report = mc_power(_z_test_protocol(), 1000, master_seed=42)
        shift = 0.6 * np.sqrt(25)
        crit = stats.norm.ppf(0.975)
        exact = stats.norm.sf(crit - shift) + stats.norm.cdf(-crit - shift)
        se = np.sqrt(exact * (1.0 - exact) / 1000)
        assert report.failed == 0
        assert report.replications == 1000
        assert abs(report.mc_power - exact) < 4.0 * se
        assert report.mc_se == pytest.approx(
            np.sqrt(report.mc_power * (1 - report.mc_power) / 1000))

    def test_deterministic_in_master_seed(self):
        first = mc_power(_z_test_protocol(), 200, master_seed=9)
        second = mc_power(_z_test_protocol(), 200, master_seed=9)
        assert first.to_dict() == second.to_dict()

    def test_rejects_too_few_replications(self):
        with pytest.raises(ValueError, match="at least 100"):
            mc_power(_z_test_protocol(), 99, master_seed=0)

    def test_all_failures_is_an_error(self):
        def simulate(seed):
            raise RuntimeError("always broken")

        protocol = PowerProtocol(name="broken", simulate=simulate,
                                 test=lambda data: 0.5,
                                 n_per_arm=10, k=1, icc=0.0)
        with pytest.raises(RuntimeError, match="every replication failed"):
            mc_power(protocol, 100, master_seed=0)

    def test_unexpected_errors_propagate(self):
        # Only simulation-level failures are absorbed into the failed
        # count; anything else is a bug and should surface.
        def simulate(seed):
            raise TypeError("not a protocol failure")

        protocol = PowerProtocol(name="buggy", simulate=simulate,
                                 test=lambda data: 0.5,
                                 n_per_arm=10, k=1, icc=0.0)
        with pytest.raises(TypeError):
            mc_power(protocol, 100, master_seed=0)

    def test_report_dict_keys(self):
        report = mc_power(_z_test_protocol(), 100, master_seed=1)
        assert set(report.to_dict()) == {
            "test", "design_effect", "base_n", "adjusted_n",
            "analytic_power", "mc_power", "mc_se", "replications",
            "failed", "alpha", "notes"}


class TestProtocolDefaults:
    def test_optional_fields(self):
        protocol = PowerProtocol(name="p", simulate=lambda s: None,
                                 test=lambda d: 1.0,
                                 n_per_arm=10, k=2, icc=0.1)
        assert protocol.alpha == 0.05
        assert protocol.analytic_power is None
        assert protocol.notes == ""


@pytest.fixture(scope="module")
def two_arm():
    return two_arm_cluster_protocol(n_ads=100, k=4, p0=0.15, p1=0.25,
                                    icc=0.2, design_seed=3)


class TestTwoArmProtocol:
    def test_bookkeeping_fields(self, two_arm):
        assert two_arm.n_per_arm == 100 * 4 // 2
        assert two_arm.k == 4
        assert two_arm.icc == 0.2
        assert two_arm.alpha == 0.05
        assert "100 ads" in two_arm.name
        assert two_arm.notes

    def test_analytic_power_matches_direct_call(self, two_arm):
        expected = analytic_power_two_prop(
            0.15, 0.25, 200, 0.05, design_effect(4, 0.2))
        assert two_arm.analytic_power == expected

    def test_arms_are_assigned_by_ad(self, two_arm):
        dataset = two_arm.simulate(rng.derive(11, "power-rep", 0))
        apps = dataset.apps
        assert set(apps["group"]) == {"WM", "BW"}
        per_ad = apps.groupby("ad_id")["group"].nunique()
        assert (per_ad == 1).all()
        assert (apps["callback"].to_numpy() >= 0).all()

    def test_test_returns_probability(self, two_arm):
        dataset = two_arm.simulate(rng.derive(11, "power-rep", 1))
        p = two_arm.test(dataset)
        assert 0.0 <= p <= 1.0

    def test_mc_power_near_analytic(self, two_arm):
        report = mc_power(two_arm, 100, master_seed=5)
        assert report.failed == 0
        # 100 replications give an MC standard error near 0.05, and the
        # normal approximation itself is a few points off the clustered
        # t at this size, so the band is wide.
        assert abs(report.mc_power - two_arm.analytic_power) < 0.2


@pytest.fixture(scope="module")
def audit_protocol():
    return audit_reference_protocol(n_ads=360, design_seed=5)


class TestAuditReferenceProtocol:
    def test_cell_sample_size(self, audit_protocol):
        # 6 groups x 6 categories = 36 cells, 4 resumes per ad.
        assert audit_protocol.n_per_arm == (360 // 36) * 4
        assert audit_protocol.k == 4
        assert audit_protocol.icc == 0.30
        assert audit_protocol.notes

    def test_analytic_power_matches_direct_call(self, audit_protocol):
        expected = analytic_power_two_prop(
            0.15, 0.225, audit_protocol.n_per_arm, 0.05,
            design_effect(4, 0.30))
        assert audit_protocol.analytic_power == expected

    def test_simulated_dataset_covers_all_cells(self, audit_protocol):
        dataset = audit_protocol.simulate(rng.derive(13, "power-rep", 0))
        cats = dataset.occupations["occupation_category"]
        assert set(cats) == {f"cat_{i}" for i in range(1, 7)}
        ads = dataset.ads.merge(
            dataset.occupations[["occupation_id", "occupation_category"]],
            on="occupation_id")
        counts = ads["occupation_category"].value_counts()
        assert len(counts) == 6
        assert (counts >= 10).all()
        assert set(dataset.apps["group"]) == set(
            ("WM", "WW", "BW", "HW", "BM", "HM"))

    def test_test_returns_probability(self, audit_protocol):
        dataset = audit_protocol.simulate(rng.derive(13, "power-rep", 1))
        p = audit_protocol.test(dataset)
        assert 0.0 <= p <= 1.0

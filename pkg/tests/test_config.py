"""Tests for JSON run-config validation and error paths."""

import json

import pytest

from auditsim.config import ConfigError, load_config, validate_config


def minimal_config(**overrides):
    base = {
        "master_seed": 42,
        "dgp": {"reduced": {}},
    }
    base.update(overrides)
    return base


def config_error(obj):
    with pytest.raises(ConfigError) as exc_info:
        validate_config(obj)
    return exc_info.value


class TestMinimalConfig:
    def test_defaults(self):
        run = validate_config(minimal_config())
        assert run.master_seed == 42
        assert run.dgp_mode == "reduced"
        assert run.structural is None
        assert run.reduced is not None
        assert run.design.n_ads == 9220
        assert run.analysis.grouping is None
        assert run.analysis.cluster_k == (2, 3, 4, 5, 6, 7, 8)
        assert run.power.protocol == "two_arm"
        assert run.power.replications == 500
        assert run.verify_draws == 1_000_000
        assert run.out_dir is None
        assert run.raw == minimal_config()

    def test_structural_mode(self):
        run = validate_config(minimal_config(
            dgp={"structural": {"alpha": 1.5, "baseline_rate": 0.15}}))
        assert run.dgp_mode == "structural"
        assert run.reduced is None
        assert run.structural.alpha == 1.5

    def test_error_to_dict(self):
        err = ConfigError("power.alpha", "must lie in (0, 1)")
        assert err.to_dict() == {"error": "config", "path": "power.alpha",
                                 "message": "must lie in (0, 1)"}
        assert "power.alpha" in str(err)


class TestTopLevel:
    def test_non_object_rejected(self):
        assert config_error([1, 2]).path == "$"

    def test_unknown_top_level_key(self):
        err = config_error(minimal_config(bogus=1))
        assert err.path == "bogus"
        assert "unknown top-level key" in err.message

    def test_master_seed_required(self):
        obj = minimal_config()
        del obj["master_seed"]
        assert config_error(obj).path == "$.master_seed"

    @pytest.mark.parametrize("seed", [-1, 2 ** 64, 1.5, True, "7"])
    def test_master_seed_must_be_integer_in_range(self, seed):
        assert config_error(minimal_config(master_seed=seed)).path == "$.master_seed"

    @pytest.mark.parametrize("out_dir", ["", 7])
    def test_out_dir_must_be_nonempty_string(self, out_dir):
        assert config_error(minimal_config(out_dir=out_dir)).path == "out_dir"

    def test_out_dir_accepted(self):
        run = validate_config(minimal_config(out_dir="runs/a"))
        assert run.out_dir == "runs/a"


class TestDgpBlock:
    def test_missing_dgp(self):
        obj = minimal_config()
        del obj["dgp"]
        err = config_error(obj)
        assert err.path == "dgp"
        assert "exactly one" in err.message

    def test_both_modes_rejected(self):
        err = config_error(minimal_config(
            dgp={"structural": {}, "reduced": {}}))
        assert err.path == "dgp"

    def test_unknown_dgp_key(self):
        err = config_error(minimal_config(
            dgp={"reduced": {}, "extra": {}}))
        assert err.path == "dgp.extra"

    def test_threshold_and_baseline_conflict(self):
        err = config_error(minimal_config(
            dgp={"structural": {"threshold": 1.0, "baseline_rate": 0.15}}))
        assert err.path == "dgp.structural"
        assert "not both" in err.message

    def test_bad_structural_value_flagged(self):
        err = config_error(minimal_config(
            dgp={"structural": {"alpha": "high"}}))
        assert err.path == "dgp.structural.alpha"

    def test_bad_reduced_gap_flagged(self):
        err = config_error(minimal_config(
            dgp={"reduced": {"group_gaps": {"unheard_of": -0.01}}}))
        assert err.path == "dgp.reduced"

    def test_reduced_icc_forwarded(self):
        run = validate_config(minimal_config(
            dgp={"reduced": {"icc": 0.3, "baseline": 0.2}}))
        assert run.reduced.icc == 0.3
        assert run.reduced.baseline == 0.2


class TestDesignBlock:
    def test_values_forwarded(self):
        run = validate_config(minimal_config(
            design={"n_ads": 300, "n_firms": 150, "n_universities": 8,
                    "resumes_per_ad": 4, "n_occupations": 40}))
        assert run.design.n_ads == 300
        assert run.design.n_firms == 150

    def test_unknown_design_key(self):
        err = config_error(minimal_config(design={"n_adds": 300}))
        assert err.path == "design.n_adds"

    def test_design_int_bounds(self):
        err = config_error(minimal_config(design={"n_ads": 0}))
        assert err.path == "design.n_ads"

    def test_cross_field_violation_lands_on_design(self):
        err = config_error(minimal_config(
            design={"n_ads": 30, "n_firms": 40}))
        assert err.path == "design"

    def test_mixture_entries(self):
        mixture = [{"name": "only", "weight": 1.0,
                    "centers": [0.5, 0.5, 0.5, 0.5, 0.5, 0.5]}]
        run = validate_config(minimal_config(design={"mixture": mixture}))
        assert len(run.design.mixture) == 1
        assert run.design.mixture[0].name == "only"
        assert run.design.mixture[0].spread == 0.08

    def test_mixture_missing_centers(self):
        err = config_error(minimal_config(
            design={"mixture": [{"name": "x", "weight": 1.0}]}))
        assert err.path == "design.mixture[0].centers"

    def test_mixture_bad_component(self):
        err = config_error(minimal_config(
            design={"mixture": [{"name": "x", "weight": -1.0,
                                 "centers": [0.5] * 6}]}))
        assert err.path == "design.mixture[0]"

    def test_mixture_must_be_list(self):
        err = config_error(minimal_config(design={"mixture": {}}))
        assert err.path == "design.mixture"


class TestAnalysisBlock:
    def test_grouping_aliases(self):
        run = validate_config(minimal_config(analysis={"grouping": "pooled"}))
        assert run.analysis.grouping is None
        run = validate_config(minimal_config(analysis={"grouping": "category"}))
        assert run.analysis.grouping == "category"

    def test_bad_grouping(self):
        err = config_error(minimal_config(analysis={"grouping": "firm"}))
        assert err.path == "analysis.grouping"

    def test_cluster_k_sorted_unique(self):
        run = validate_config(minimal_config(
            analysis={"cluster_k": [5, 2, 2, 3]}))
        assert run.analysis.cluster_k == (2, 3, 5)

    @pytest.mark.parametrize("ks", [[0, 2], [2.5], []])
    def test_bad_cluster_k(self, ks):
        err = config_error(minimal_config(analysis={"cluster_k": ks}))
        assert err.path == "analysis.cluster_k"

    def test_bad_contact_split(self):
        err = config_error(minimal_config(
            analysis={"contact_split": "middle"}))
        assert err.path == "analysis.contact_split"


class TestPowerBlock:
    def test_protocol_choices(self):
        run = validate_config(minimal_config(
            power={"protocol": "audit_reference"}))
        assert run.power.protocol == "audit_reference"
        err = config_error(minimal_config(power={"protocol": "three_arm"}))
        assert err.path == "power.protocol"

    def test_replications_minimum(self):
        err = config_error(minimal_config(power={"replications": 50}))
        assert err.path == "power.replications"

    def test_alpha_open_interval(self):
        err = config_error(minimal_config(power={"alpha": 0.0}))
        assert err.path == "power.alpha"

    def test_rates_open_interval(self):
        err = config_error(minimal_config(power={"target_rate": 1.0}))
        assert err.path == "power.target_rate"

    def test_icc_range(self):
        err = config_error(minimal_config(power={"icc": 1.0}))
        assert err.path == "power.icc"

    def test_n_ads_minimum(self):
        err = config_error(minimal_config(power={"n_ads": 10}))
        assert err.path == "power.n_ads"


class TestVerifyBlock:
    def test_draws_minimum(self):
        err = config_error(minimal_config(verify={"draws": 5000}))
        assert err.path == "verify.draws"

    def test_unknown_verify_key(self):
        err = config_error(minimal_config(verify={"samples": 50000}))
        assert err.path == "verify.samples"

    def test_draws_forwarded(self):
        run = validate_config(minimal_config(verify={"draws": 50000}))
        assert run.verify_draws == 50000


class TestLoadConfig:
    def test_loads_valid_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(minimal_config()))
        run = load_config(str(path))
        assert run.master_seed == 42

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc_info:
            load_config(str(tmp_path / "absent.json"))
        assert exc_info.value.path == "$"

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError) as exc_info:
            load_config(str(path))
        assert exc_info.value.path == "$"
        assert "invalid JSON" in exc_info.value.message

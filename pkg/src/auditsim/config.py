"""JSON run configuration: parsing, validation, and typed access.

A run config is one JSON object with a ``master_seed``, a ``design``
block, a ``dgp`` block holding exactly one of ``structural`` or
``reduced``, and optional ``analysis``, ``power``, ``verify`` and
``out_dir`` entries. Validation failures raise :class:`ConfigError`
carrying the dotted path of the offending entry so callers can emit a
machine-readable diagnostic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from . import design, dgp, theory


class ConfigError(ValueError):
    """Invalid configuration, located by a dotted key path."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")

    def to_dict(self):
        return {"error": "config", "path": self.path, "message": self.message}


@dataclass(frozen=True)
class AnalysisConfig:
    """Estimation-battery knobs."""

    grouping: Optional[str] = None          # None (pooled) or "category"
    alpha: float = 1.0
    beta: float = 1.0
    delta: float = 1.0
    cluster_k: tuple = (2, 3, 4, 5, 6, 7, 8)
    cluster_seeds: int = 5
    contact_split: str = "all"              # "all", "low40" or "high40"


@dataclass(frozen=True)
class PowerConfig:
    """Power-stage protocol selection and effort."""

    protocol: str = "two_arm"               # or "audit_reference"
    replications: int = 500
    alpha: float = 0.05
    n_ads: Optional[int] = None
    resumes_per_ad: int = 4
    baseline: float = 0.15
    target_rate: float = 0.225
    icc: float = 0.30


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run configuration."""

    master_seed: int
    design: design.DesignConfig
    dgp_mode: str                           # "structural" or "reduced"
    structural: Optional[theory.ModelParams]
    reduced: Optional[dgp.ReducedForm]
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    verify_draws: int = 1_000_000
    out_dir: Optional[str] = None
    raw: dict = field(default_factory=dict, repr=False)


def _expect_object(value, path):
    if not isinstance(value, dict):
        raise ConfigError(path, "must be a JSON object")
    return value


def _get_int(obj, key, path, default=None, minimum=None, maximum=None):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", "must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}")
    if maximum is not None and v > maximum:
        raise ConfigError(f"{path}.{key}", f"must be <= {maximum}")
    return v


def _get_number(obj, key, path, default=None):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", "must be a number")
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}", "must be finite")
    return float(v)


def _get_str(obj, key, path, default=None, choices=None):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required")
        return default
    v = obj[key]
    if not isinstance(v, str):
        raise ConfigError(f"{path}.{key}", "must be a string")
    if choices is not None and v not in choices:
        raise ConfigError(f"{path}.{key}", f"must be one of {sorted(choices)}")
    return v


def _number_map(obj, key, path):
    if key not in obj:
        return {}
    block = _expect_object(obj[key], f"{path}.{key}")
    out = {}
    for k, v in block.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.{key}.{k}", "must be a number")
        out[str(k)] = float(v)
    return out


def _number_list(obj, key, path, length=None):
    if key not in obj:
        return None
    v = obj[key]
    if not isinstance(v, list) or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise ConfigError(f"{path}.{key}", "must be a list of numbers")
    if length is not None and len(v) != length:
        raise ConfigError(f"{path}.{key}", f"must hold exactly {length} numbers")
    return tuple(float(x) for x in v)


_DESIGN_INTS = ("n_ads", "resumes_per_ad", "n_firms", "n_universities",
                "n_occupations", "n_majors")
_DESIGN_NUMBERS = ("gpa_none_prob", "volunteer_prob", "spanish_prob",
                   "study_abroad_prob", "weight_sigma")
_DESIGN_LISTS = {"group_probs": len(theory.GROUPS),
                 "minor_probs": len(design.MINOR_LEVELS),
                 "internship_probs": len(design.INTERNSHIP_LEVELS),
                 "computer_probs": len(design.COMPUTER_LEVELS),
                 "college_job_probs": len(design.COLLEGE_JOB_LEVELS)}


def _parse_design(obj):
    block = _expect_object(obj.get("design", {}), "design")
    known = (set(_DESIGN_INTS) | set(_DESIGN_NUMBERS) | set(_DESIGN_LISTS)
             | {"group_assignment", "mixture"})
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"design.{sorted(unknown)[0]}", "unknown key")
    kwargs = {}
    for key in _DESIGN_INTS:
        if key in block:
            kwargs[key] = _get_int(block, key, "design", minimum=1)
    for key in _DESIGN_NUMBERS:
        if key in block:
            kwargs[key] = _get_number(block, key, "design")
    for key, length in _DESIGN_LISTS.items():
        got = _number_list(block, key, "design", length)
        if got is not None:
            kwargs[key] = got
    if "group_assignment" in block:
        kwargs["group_assignment"] = _get_str(
            block, "group_assignment", "design",
            choices={"per_resume", "per_ad"})
    if "mixture" in block:
        mix = block["mixture"]
        if not isinstance(mix, list) or not mix:
            raise ConfigError("design.mixture", "must be a non-empty list")
        comps = []
        for i, entry in enumerate(mix):
            entry = _expect_object(entry, f"design.mixture[{i}]")
            name = _get_str(entry, "name", f"design.mixture[{i}]")
            weight = _get_number(entry, "weight", f"design.mixture[{i}]")
            centers = _number_list(entry, "centers", f"design.mixture[{i}]",
                                   len(theory.TASK_FIELDS))
            if centers is None:
                raise ConfigError(f"design.mixture[{i}].centers", "required")
            spread = _get_number(entry, "spread", f"design.mixture[{i}]",
                                 default=0.08)
            try:
                comps.append(design.MixtureComponent(name, weight, centers,
                                                     spread))
            except ValueError as exc:
                raise ConfigError(f"design.mixture[{i}]", str(exc)) from exc
        kwargs["mixture"] = tuple(comps)
    try:
        return design.DesignConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError("design", str(exc)) from exc


def _parse_structural(block):
    block = _expect_object(block, "dgp.structural")
    unknown = set(block) - {"alpha", "beta", "delta", "gamma", "threshold",
                            "baseline_rate", "retention"}
    if unknown:
        raise ConfigError(f"dgp.structural.{sorted(unknown)[0]}", "unknown key")
    kwargs = {}
    for key in ("alpha", "beta", "delta", "gamma"):
        if key in block:
            kwargs[key] = _get_number(block, key, "dgp.structural")
    if "threshold" in block and "baseline_rate" in block:
        raise ConfigError("dgp.structural",
                          "give threshold or baseline_rate, not both")
    if "threshold" in block:
        kwargs["threshold"] = _get_number(block, "threshold", "dgp.structural")
    elif "baseline_rate" in block:
        rate = _get_number(block, "baseline_rate", "dgp.structural")
        try:
            kwargs["threshold"] = theory.default_threshold(rate)
        except ValueError as exc:
            raise ConfigError("dgp.structural.baseline_rate", str(exc)) from exc
    if "retention" in block:
        kwargs["retention"] = _number_map(block, "retention", "dgp.structural")
    try:
        return theory.ModelParams(**kwargs)
    except ValueError as exc:
        raise ConfigError("dgp.structural", str(exc)) from exc


def _parse_reduced(block):
    block = _expect_object(block, "dgp.reduced")
    unknown = set(block) - {"baseline", "group_gaps", "category_gaps",
                            "credential_returns",
                            "minority_low_discretion_bonus",
                            "discretion_gradient", "minority_peer_effect",
                            "icc", "alpha", "beta", "delta"}
    if unknown:
        raise ConfigError(f"dgp.reduced.{sorted(unknown)[0]}", "unknown key")
    kwargs = {}
    for key in ("baseline", "discretion_gradient", "minority_peer_effect",
                "icc", "alpha", "beta", "delta"):
        if key in block:
            kwargs[key] = _get_number(block, key, "dgp.reduced")
    for key in ("group_gaps", "credential_returns",
                "minority_low_discretion_bonus"):
        if key in block:
            kwargs[key] = _number_map(block, key, "dgp.reduced")
    if "category_gaps" in block:
        cats = _expect_object(block["category_gaps"], "dgp.reduced.category_gaps")
        kwargs["category_gaps"] = {
            str(cat): _number_map(cats, cat, "dgp.reduced.category_gaps")
            for cat in cats}
    try:
        return dgp.ReducedForm(**kwargs)
    except ValueError as exc:
        raise ConfigError("dgp.reduced", str(exc)) from exc


def _parse_analysis(obj):
    block = _expect_object(obj.get("analysis", {}), "analysis")
    unknown = set(block) - {"grouping", "alpha", "beta", "delta", "cluster_k",
                            "cluster_seeds", "contact_split"}
    if unknown:
        raise ConfigError(f"analysis.{sorted(unknown)[0]}", "unknown key")
    grouping = None
    if "grouping" in block and block["grouping"] is not None:
        grouping = _get_str(block, "grouping", "analysis",
                            choices={"pooled", "category"})
        if grouping == "pooled":
            grouping = None
    ks = _number_list(block, "cluster_k", "analysis")
    if ks is None:
        ks = AnalysisConfig.cluster_k
    else:
        if any(k != int(k) or k < 1 for k in ks) or len(ks) < 1:
            raise ConfigError("analysis.cluster_k",
                              "must be positive integers")
        ks = tuple(sorted({int(k) for k in ks}))
    return AnalysisConfig(
        grouping=grouping,
        alpha=_get_number(block, "alpha", "analysis", default=1.0),
        beta=_get_number(block, "beta", "analysis", default=1.0),
        delta=_get_number(block, "delta", "analysis", default=1.0),
        cluster_k=ks,
        cluster_seeds=_get_int(block, "cluster_seeds", "analysis", default=5,
                               minimum=1),
        contact_split=_get_str(block, "contact_split", "analysis",
                               default="all",
                               choices={"all", "low40", "high40"}),
    )


def _parse_power(obj):
    block = _expect_object(obj.get("power", {}), "power")
    unknown = set(block) - {"protocol", "replications", "alpha", "n_ads",
                            "resumes_per_ad", "baseline", "target_rate", "icc"}
    if unknown:
        raise ConfigError(f"power.{sorted(unknown)[0]}", "unknown key")
    protocol = _get_str(block, "protocol", "power", default="two_arm",
                        choices={"two_arm", "audit_reference"})
    alpha = _get_number(block, "alpha", "power", default=0.05)
    if not 0.0 < alpha < 1.0:
        raise ConfigError("power.alpha", "must lie in (0, 1)")
    baseline = _get_number(block, "baseline", "power", default=0.15)
    target = _get_number(block, "target_rate", "power", default=0.225)
    for key, v in (("baseline", baseline), ("target_rate", target)):
        if not 0.0 < v < 1.0:
            raise ConfigError(f"power.{key}", "must lie in (0, 1)")
    icc = _get_number(block, "icc", "power", default=0.30)
    if not 0.0 <= icc < 1.0:
        raise ConfigError("power.icc", "must lie in [0, 1)")
    n_ads = None
    if "n_ads" in block:
        n_ads = _get_int(block, "n_ads", "power", minimum=20)
    return PowerConfig(
        protocol=protocol,
        replications=_get_int(block, "replications", "power", default=500,
                              minimum=100),
        alpha=alpha,
        n_ads=n_ads,
        resumes_per_ad=_get_int(block, "resumes_per_ad", "power", default=4,
                                minimum=1),
        baseline=baseline,
        target_rate=target,
        icc=icc,
    )


def validate_config(obj):
    """Validate a parsed JSON object into a :class:`RunConfig`."""
    obj = _expect_object(obj, "$")
    unknown = set(obj) - {"master_seed", "out_dir", "design", "dgp",
                          "analysis", "power", "verify"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level key")
    seed = _get_int(obj, "master_seed", "$", minimum=0,
                    maximum=2 ** 64 - 1)
    out_dir = None
    if "out_dir" in obj:
        out_dir = obj["out_dir"]
        if not isinstance(out_dir, str) or not out_dir:
            raise ConfigError("out_dir", "must be a non-empty string")

    dgp_block = _expect_object(obj.get("dgp", None) or {}, "dgp")
    modes = [m for m in ("structural", "reduced") if m in dgp_block]
    if len(modes) != 1:
        raise ConfigError("dgp",
                          "exactly one of 'structural' or 'reduced' required")
    unknown = set(dgp_block) - {"structural", "reduced"}
    if unknown:
        raise ConfigError(f"dgp.{sorted(unknown)[0]}", "unknown key")
    mode = modes[0]
    structural = reduced = None
    if mode == "structural":
        structural = _parse_structural(dgp_block["structural"])
    else:
        reduced = _parse_reduced(dgp_block["reduced"])

    verify_block = _expect_object(obj.get("verify", {}), "verify")
    unknown = set(verify_block) - {"draws"}
    if unknown:
        raise ConfigError(f"verify.{sorted(unknown)[0]}", "unknown key")
    draws = _get_int(verify_block, "draws", "verify", default=1_000_000,
                     minimum=10_000)

    return RunConfig(
        master_seed=seed,
        design=_parse_design(obj),
        dgp_mode=mode,
        structural=structural,
        reduced=reduced,
        analysis=_parse_analysis(obj),
        power=_parse_power(obj),
        verify_draws=draws,
        out_dir=out_dir,
        raw=obj,
    )


def load_config(path):
    """Read and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("$", f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from exc
    return validate_config(obj)

"""Synthetic correspondence-audit design: ads, occupations and resumes.

Generation is fully vectorized over counter-based per-ad streams (see
:mod:`auditsim.rng`), so a dataset is a pure function of (design config,
master seed): regenerating with the same inputs is byte-identical and no
parallel schedule can change the draw for any resume slot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from . import rng
from .theory import GROUPS, TASK_FIELDS

# Counter fields of the per-ad design stream (64 slots each).
_F_UNIVERSITY = 0
_F_GROUP = 1
_F_NAME = 2
_F_MAJOR = 3
_F_MINOR = 4
_F_GPA = 5
_F_INTERNSHIP = 6
_F_COMPUTER = 7
_F_COLLEGE_JOB = 8
_F_VOLUNTEER = 9
_F_SPANISH = 10
_F_STUDY_ABROAD = 11
_F_FIRM = 20
_F_OCCUPATION = 21

GPA_VALUES = ("3.0", "3.2", "3.4", "3.6", "3.8", "4.0")
INTERNSHIP_LEVELS = ("none", "analytical", "interpersonal")
COMPUTER_LEVELS = ("none", "basic", "data", "programming", "data_programming")
COLLEGE_JOB_LEVELS = ("none", "sales", "university", "restaurant")
MINOR_LEVELS = ("none", "history", "math")

#: Application CSV schema, one row per resume sent.
APPLICATION_COLUMNS = (
    "ad_id", "slot", "firm_id", "occupation_id", "occupation_category",
    *TASK_FIELDS, "employment_weight",
    "group", "applicant_name", "university", "major", "minor", "gpa",
    "internship", "computer_skills", "volunteer", "spanish", "study_abroad",
    "college_job", "callback",
)

_BOOL_COLUMNS = ("volunteer", "spanish", "study_abroad")
_FLOAT_COLUMNS = (*TASK_FIELDS, "employment_weight")
_INT_COLUMNS = ("ad_id", "slot", "firm_id", "occupation_id")


@dataclass(frozen=True)
class MixtureComponent:
    """One occupation archetype: a centroid in task space plus spread."""

    name: str
    weight: float
    centers: tuple
    spread: float = 0.08

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError(f"component {self.name!r} needs positive weight")
        if len(self.centers) != len(TASK_FIELDS):
            raise ValueError(f"component {self.name!r} needs {len(TASK_FIELDS)} centers")
        if any(not 0.0 <= c <= 1.0 for c in self.centers):
            raise ValueError(f"component {self.name!r} centers must lie in [0, 1]")
        if not 0.0 <= self.spread <= 0.5:
            raise ValueError(f"component {self.name!r} spread must lie in [0, 0.5]")


def default_mixture():
    """Four occupation archetypes spanning the task space.

    Centroids follow the familiar split between specialist analytic work,
    technical work with heavy routine-cognitive content, customer-facing
    frontline work and routine support work; weights lean toward the
    latter two the way large ad samples do.
    """
    return (
        MixtureComponent("specialist", 0.0835, (0.90, 0.86, 0.26, 0.12, 0.11, 0.35)),
        MixtureComponent("technical", 0.0964, (0.88, 0.70, 0.68, 0.17, 0.12, 0.40)),
        MixtureComponent("frontline", 0.3041, (0.69, 0.70, 0.17, 0.12, 0.16, 0.80)),
        MixtureComponent("support", 0.5160, (0.48, 0.39, 0.69, 0.28, 0.18, 0.81)),
    )


def _equal_probs(levels):
    return tuple(1.0 / len(levels) for _ in levels)


@dataclass(frozen=True)
class DesignConfig:
    """Knobs of the audit design; defaults mirror a full-scale audit."""

    n_ads: int = 9220
    resumes_per_ad: int = 4
    n_firms: int = 4968
    n_universities: int = 12
    n_occupations: int = 175
    group_probs: tuple = tuple(1.0 / len(GROUPS) for _ in GROUPS)
    group_assignment: str = "per_resume"  # or "per_ad"
    minor_probs: tuple = _equal_probs(MINOR_LEVELS)
    gpa_none_prob: float = 0.25
    internship_probs: tuple = _equal_probs(INTERNSHIP_LEVELS)
    computer_probs: tuple = (0.25, 0.25, 0.25, 0.125, 0.125)
    college_job_probs: tuple = _equal_probs(COLLEGE_JOB_LEVELS)
    volunteer_prob: float = 0.5
    spanish_prob: float = 0.5
    study_abroad_prob: float = 0.5
    n_majors: int = 8
    mixture: tuple = field(default_factory=default_mixture)
    weight_sigma: float = 1.0

    def __post_init__(self):
        if self.n_ads < 1:
            raise ValueError("n_ads must be >= 1")
        if not 1 <= self.resumes_per_ad <= self.n_universities:
            raise ValueError("resumes_per_ad must lie in [1, n_universities] "
                             "(universities are distinct within an ad)")
        if self.n_universities > rng.FIELD:
            raise ValueError(f"n_universities cannot exceed {rng.FIELD}")
        if not 1 <= self.n_firms <= self.n_ads:
            raise ValueError("n_firms must lie in [1, n_ads]")
        if self.n_occupations < 1:
            raise ValueError("n_occupations must be >= 1")
        if self.n_majors < 1:
            raise ValueError("n_majors must be >= 1")
        if self.group_assignment not in ("per_resume", "per_ad"):
            raise ValueError("group_assignment must be 'per_resume' or 'per_ad'")
        for name, probs, k in (
            ("group_probs", self.group_probs, len(GROUPS)),
            ("minor_probs", self.minor_probs, len(MINOR_LEVELS)),
            ("internship_probs", self.internship_probs, len(INTERNSHIP_LEVELS)),
            ("computer_probs", self.computer_probs, len(COMPUTER_LEVELS)),
            ("college_job_probs", self.college_job_probs, len(COLLEGE_JOB_LEVELS)),
        ):
            if len(probs) != k:
                raise ValueError(f"{name} must have {k} entries")
            if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a probability vector")
        for name in ("gpa_none_prob", "volunteer_prob", "spanish_prob",
                     "study_abroad_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.mixture:
            raise ValueError("mixture needs at least one component")
        if not 0.0 < self.weight_sigma <= 5.0:
            raise ValueError("weight_sigma must lie in (0, 5]")

    @property
    def n_applications(self):
        return self.n_ads * self.resumes_per_ad

    @property
    def majors(self):
        return tuple(f"major_{i + 1}" for i in range(self.n_majors))

    @property
    def universities(self):
        return tuple(f"u{i + 1:02d}" for i in range(self.n_universities))


@dataclass
class AuditDataset:
    """Generated audit data: occupation table, ad table, application table.

    ``occupations`` has one row per occupation (task intensities in [0, 1],
    an employment weight and its archetype); ``ads`` one row per posted ad;
    ``apps`` one row per resume sent. ``apps['callback']`` is -1 until a
    callback process fills it.
    """

    occupations: pd.DataFrame
    ads: pd.DataFrame
    apps: pd.DataFrame
    design: Optional[DesignConfig]
    meta: dict

    @property
    def n_ads(self):
        return len(self.ads)

    @property
    def n_applications(self):
        return len(self.apps)

    def has_callbacks(self):
        return bool((self.apps["callback"].to_numpy() >= 0).all())

    def merged(self):
        """Applications joined with their ad- and occupation-level columns."""
        ads = self.ads.merge(self.occupations, on="occupation_id", how="left")
        return self.apps.merge(ads, on="ad_id", how="left", validate="many_to_one")

    def with_callbacks(self, callbacks, meta_update=None):
        """A copy of the dataset with the callback column filled."""
        callbacks = np.asarray(callbacks)
        if callbacks.shape != (len(self.apps),):
            raise ValueError("callbacks must have one entry per application")
        apps = self.apps.copy()
        apps["callback"] = callbacks.astype(np.int64)
        meta = dict(self.meta)
        meta.update(meta_update or {})
        return AuditDataset(occupations=self.occupations, ads=self.ads,
                            apps=apps, design=self.design, meta=meta)

    # -- CSV interchange ----------------------------------------------------

    def to_csv(self, path):
        """Write one row per application (RFC-4180 quoting, LF endings).

        Floats are rendered with ``repr`` (shortest round-trip form), so
        export -> import -> export is byte-identical.
        """
        merged = self.merged()
        cols = {c: merged[c].to_numpy() for c in APPLICATION_COLUMNS}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(APPLICATION_COLUMNS)
            for i in range(len(merged)):
                row = []
                for c in APPLICATION_COLUMNS:
                    v = cols[c][i]
                    if c in _FLOAT_COLUMNS:
                        row.append(repr(float(v)))
                    elif c in _BOOL_COLUMNS:
                        row.append(str(int(v)))
                    elif c == "callback":
                        row.append("" if v < 0 else str(int(v)))
                    else:
                        row.append(str(v))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path, design=None):
        """Rebuild a dataset from its application CSV."""
        df = pd.read_csv(
            path, float_precision="round_trip",
            dtype={c: np.int64 for c in _INT_COLUMNS}
            | {c: np.float64 for c in _FLOAT_COLUMNS}
            | {"group": str, "occupation_category": str},
        )
        missing = [c for c in APPLICATION_COLUMNS if c not in df.columns]
        if missing:
            raise ValueError(f"application CSV missing columns: {missing}")
        for c in _BOOL_COLUMNS:
            df[c] = df[c].astype(np.int64).astype(bool)
        df["callback"] = df["callback"].fillna(-1).astype(np.int64)
        df["gpa"] = df["gpa"].astype(str)

        occ_cols = ["occupation_id", "occupation_category", *TASK_FIELDS,
                    "employment_weight"]
        occupations = (df[occ_cols].drop_duplicates("occupation_id")
                       .sort_values("occupation_id").reset_index(drop=True))
        ad_cols = ["ad_id", "firm_id", "occupation_id"]
        ads = (df[ad_cols].drop_duplicates("ad_id")
               .sort_values("ad_id").reset_index(drop=True))
        app_cols = ["ad_id", "slot", "group", "applicant_name", "university",
                    "major", "minor", "gpa", "internship", "computer_skills",
                    "volunteer", "spanish", "study_abroad", "college_job",
                    "callback"]
        apps = df[app_cols].sort_values(["ad_id", "slot"]).reset_index(drop=True)
        return cls(occupations=occupations, ads=ads, apps=apps, design=design,
                   meta={"source": str(path)})


def _occupation_table(config, master_seed):
    occ_ids = np.arange(config.n_occupations, dtype=np.int64)
    streams = rng.derive(master_seed, "occupation", occ_ids)
    weights = np.array([c.weight for c in config.mixture], dtype=np.float64)
    comp = rng.categorical(streams, rng.field_counters(0, 0), weights / weights.sum())
    centers = np.array([c.centers for c in config.mixture])
    spread = np.array([c.spread for c in config.mixture])
    noise = rng.normal(streams[:, None], rng.field_counters(1, np.arange(len(TASK_FIELDS)))[None, :])
    tasks = np.clip(centers[comp] + spread[comp, None] * noise, 0.0, 1.0)
    emp = np.exp(config.weight_sigma * rng.normal(streams, rng.field_counters(2, 0)))
    names = np.array([c.name for c in config.mixture])
    table = pd.DataFrame({"occupation_id": occ_ids,
                          "occupation_category": names[comp]})
    for j, col in enumerate(TASK_FIELDS):
        table[col] = tasks[:, j]
    table["employment_weight"] = emp
    return table


def generate_dataset(config, master_seed):
    """Generate ads and resumes for one audit wave (callbacks unset)."""
    n_ads, k = config.n_ads, config.resumes_per_ad
    ad_ids = np.arange(n_ads, dtype=np.int64)
    streams = rng.derive(master_seed, "design", ad_ids)

    # Ads: every firm posts at least once, the remainder draw uniformly.
    firm = np.empty(n_ads, dtype=np.int64)
    firm[:config.n_firms] = np.arange(config.n_firms)
    if n_ads > config.n_firms:
        tail = rng.integers(streams[config.n_firms:],
                            rng.field_counters(_F_FIRM, 0), config.n_firms)
        firm[config.n_firms:] = tail
    occupation = rng.integers(streams, rng.field_counters(_F_OCCUPATION, 0),
                              config.n_occupations)
    ads = pd.DataFrame({"ad_id": ad_ids, "firm_id": firm,
                        "occupation_id": occupation})

    slots = np.arange(k, dtype=np.int64)
    col_streams = streams[:, None]

    def per_slot(fld, draw, *args):
        return draw(col_streams, rng.field_counters(fld, slots)[None, :], *args).ravel()

    # Universities: first k columns of a per-ad shuffle, guaranteed distinct.
    perm = rng.shuffle_columns(streams, n_ads, config.n_universities, _F_UNIVERSITY)
    university = np.asarray(config.universities)[perm[:, :k].ravel()]

    if config.group_assignment == "per_ad":
        g_idx = rng.categorical(streams, rng.field_counters(_F_GROUP, 0),
                                config.group_probs)
        group_idx = np.repeat(g_idx, k)
    else:
        group_idx = per_slot(_F_GROUP, rng.categorical, config.group_probs)
    name_idx = per_slot(_F_NAME, rng.integers, 2)
    group = np.asarray(GROUPS)[group_idx]
    applicant_name = np.char.add(np.char.add(group, "_name_"),
                                 (name_idx + 1).astype(str))

    gpa_levels = ("none", *GPA_VALUES)
    gpa_probs = (config.gpa_none_prob,
                 *((1.0 - config.gpa_none_prob) / len(GPA_VALUES),) * len(GPA_VALUES))

    apps = pd.DataFrame({
        "ad_id": np.repeat(ad_ids, k),
        "slot": np.tile(slots, n_ads),
        "group": group,
        "applicant_name": applicant_name,
        "university": university,
        "major": np.asarray(config.majors)[per_slot(_F_MAJOR, rng.integers,
                                                    config.n_majors)],
        "minor": np.asarray(MINOR_LEVELS)[per_slot(_F_MINOR, rng.categorical,
                                                   config.minor_probs)],
        "gpa": np.asarray(gpa_levels)[per_slot(_F_GPA, rng.categorical, gpa_probs)],
        "internship": np.asarray(INTERNSHIP_LEVELS)[per_slot(
            _F_INTERNSHIP, rng.categorical, config.internship_probs)],
        "computer_skills": np.asarray(COMPUTER_LEVELS)[per_slot(
            _F_COMPUTER, rng.categorical, config.computer_probs)],
        "volunteer": per_slot(_F_VOLUNTEER, rng.uniform) < config.volunteer_prob,
        "spanish": per_slot(_F_SPANISH, rng.uniform) < config.spanish_prob,
        "study_abroad": per_slot(_F_STUDY_ABROAD, rng.uniform) < config.study_abroad_prob,
        "college_job": np.asarray(COLLEGE_JOB_LEVELS)[per_slot(
            _F_COLLEGE_JOB, rng.categorical, config.college_job_probs)],
        "callback": np.full(n_ads * k, -1, dtype=np.int64),
    })

    return AuditDataset(
        occupations=_occupation_table(config, master_seed),
        ads=ads,
        apps=apps,
        design=config,
        meta={"master_seed": int(master_seed), "callback_model": None},
    )

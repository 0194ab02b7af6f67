"""Deterministic audit-experiment simulator and estimation toolkit.

The package has three layers. The model layer (:mod:`auditsim.theory`,
:mod:`auditsim.tasks`) evaluates a screening model in which subjective
and objective noise channels depend on a job's task mix, and maps task
intensities to composite indices. The data layer
(:mod:`auditsim.design`, :mod:`auditsim.dgp`) generates synthetic audit
designs and simulates callbacks from either the structural model or a
reduced-form linear probability model with calibrated ad effects. The
estimation layer (:mod:`auditsim.regression`, :mod:`auditsim.analyses`,
:mod:`auditsim.power`) fits fixed-effects linear probability models
with cluster-robust covariance and packages the recovery, decomposition
and power analyses; :mod:`auditsim.verify` certifies the closed-form
math against independent routes, and :mod:`auditsim.cli` wires the
stages into a reproducible artifact pipeline.

All randomness is counter-based: any draw is a pure function of a
master seed and a derivation path, so simulations are reproducible bit
for bit at any parallelism.
"""

from . import (analyses, cli, config, design, dgp, kernels, normal, power,
               regression, report, rng, tasks, theory, verify)
from .analyses import (bp_decomposition, credential_attenuation, gap_table,
                       interference_check)
from .design import AuditDataset, DesignConfig, generate_dataset
from .dgp import (CalibrationError, ReducedForm, balance_check,
                  calibrate_ad_effect, simulate_reduced, simulate_structural)
from .power import (PowerReport, adjusted_n, analytic_power_two_prop,
                    design_effect, mc_power)
from .regression import RegressionSpec, fit, fit_ols, lincom, wald_joint
from .theory import GROUPS, ModelParams, TaskProfile, callback_gap, group_gaps
from .verify import run_verify

__version__ = "0.1.0"

__all__ = [
    "AuditDataset", "CalibrationError", "DesignConfig", "GROUPS",
    "ModelParams", "PowerReport", "ReducedForm", "RegressionSpec",
    "TaskProfile", "adjusted_n", "analyses", "analytic_power_two_prop",
    "balance_check", "bp_decomposition", "calibrate_ad_effect",
    "callback_gap", "cli", "config", "credential_attenuation", "design",
    "design_effect", "dgp", "fit", "fit_ols", "gap_table",
    "generate_dataset", "group_gaps", "interference_check", "kernels",
    "lincom", "mc_power", "normal", "power", "regression", "report", "rng",
    "run_verify", "simulate_reduced", "simulate_structural", "tasks",
    "theory", "verify", "wald_joint", "__version__",
]

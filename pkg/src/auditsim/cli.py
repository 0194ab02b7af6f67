"""Command-line pipeline: simulate, estimate, cluster, power, verify, run.

Every stage is driven by one JSON config and a master seed; all
randomness flows through seeds derived from that master, so rerunning
any command with the same config and seed reproduces its artifacts byte
for byte. Heavy imports happen after argument parsing so ``--threads``
(or the AUDITSIM_THREADS environment variable) can size the kernel
thread pool before the compiled backend loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="auditsim",
        description="Deterministic audit-experiment simulator and "
                    "estimation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "simulate": "generate a dataset with simulated callbacks",
        "estimate": "run the estimation battery on a simulated dataset",
        "cluster": "cluster occupations on task mix and write assignments",
        "power": "run the configured power protocol",
        "verify": "certify the evaluation-model math",
        "run": "full pipeline into a fresh output directory",
        "report": "rebuild text reports from fitted CSV tables",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config master seed")
        p.add_argument("--out", default=None,
                       help="output directory (overrides config out_dir)")
        p.add_argument("--threads", type=int, default=None,
                       help="kernel thread count (default: AUDITSIM_THREADS "
                            "or the backend default)")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress lines")
    return parser


def _apply_threads(threads):
    if threads is None:
        env = os.environ.get("AUDITSIM_THREADS", "").strip()
        if env:
            threads = int(env)
    if threads is None:
        return
    if threads < 1:
        raise ValueError("thread count must be at least 1")
    os.environ.setdefault("NUMBA_NUM_THREADS", str(threads))
    try:
        import numba
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def _say(args, message):
    if not args.quiet:
        print(message)


def _load_config(args, required=True):
    from . import config as config_mod

    if args.config is None:
        if not required:
            return None
        raise config_mod.ConfigError("$", "--config is required")
    cfg = config_mod.load_config(args.config)
    if args.seed is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    return cfg


def _out_dir(args, cfg, required=True):
    out = args.out or (cfg.out_dir if cfg else None)
    if out is None and required:
        from .config import ConfigError
        raise ConfigError("out_dir", "give --out or set out_dir in the config")
    return out


def _simulate_dataset(cfg):
    from . import design, dgp, rng

    dataset = design.generate_dataset(cfg.design, cfg.master_seed)
    callback_seed = rng.derive(cfg.master_seed, "callbacks")
    if cfg.dgp_mode == "structural":
        return dgp.simulate_structural(dataset, cfg.structural, callback_seed)
    return dgp.simulate_reduced(dataset, cfg.reduced, callback_seed)


def _interference_frame(result):
    import numpy as np
    import pandas as pd

    rows = [
        ("peer-minority-joint-f", result.minority_joint.f,
         result.minority_joint.q, result.minority_joint.df,
         np.nan, np.nan, np.nan, result.minority_joint.p),
        ("peer-black-joint-f", result.black_joint.f,
         result.black_joint.q, result.black_joint.df,
         np.nan, np.nan, np.nan, result.black_joint.p),
        ("minority-high-peer-triple", np.nan, np.nan, result.triple.df,
         result.triple.estimate, result.triple.se, result.triple.t,
         result.triple.p),
    ]
    return pd.DataFrame(rows, columns=["test", "f", "q", "df", "estimate",
                                       "se", "t", "p"])


def _estimate_artifacts(data, cfg):
    """All estimation-battery tables keyed by artifact name."""
    from . import analyses, dgp

    a = cfg.analysis
    gaps = analyses.gap_table(data, grouping=a.grouping, alpha=a.alpha,
                              beta=a.beta, delta=a.delta)
    decomposition = analyses.bp_decomposition(
        data, pooled=True, contact_subsample=a.contact_split,
        alpha=a.alpha, beta=a.beta, delta=a.delta)
    attenuation = analyses.credential_attenuation(
        data, alpha=a.alpha, beta=a.beta, delta=a.delta)
    balance = dgp.balance_check(data)

    frames = {
        "gaps": gaps.table,
        "gap_contrasts": gaps.contrasts,
        "gap_model": gaps.fit.table(),
        "decomposition": decomposition.table,
        "attenuation": attenuation.table,
        "balance": balance.correlations.reset_index(names="attribute"),
    }
    if cfg.design.resumes_per_ad >= 2:
        frames["interference"] = _interference_frame(
            analyses.interference_check(data, alpha=a.alpha, beta=a.beta,
                                        delta=a.delta))
    def wald_p(wald):
        return f"{wald.p:.4f}" if wald is not None else "n/a"

    notes = {
        "gaps": (f"group callback gaps relative to the base cell "
                 f"(ad fixed effects, cluster-robust on ads); "
                 f"base category: {gaps.base_category or 'pooled'}"),
        "decomposition": ("callback response to standardized subjective vs "
                          "objective task content by group "
                          f"({decomposition.subsample} ads, "
                          f"n_ads={decomposition.n_ads})"),
        "attenuation": ("credential returns and their minority-by-discretion "
                        f"interactions; positive-block F p="
                        f"{wald_p(attenuation.f_positive)}, placebo-block F p="
                        f"{wald_p(attenuation.f_placebo)}"),
        "balance": (f"attribute-by-group assignment correlations; max |corr| "
                    f"= {balance.max_abs_correlation:.4f}"
                    + ("; FLAGGED" if balance.flagged else "")),
    }
    if "interference" in frames:
        notes["interference"] = ("co-applicant composition tests "
                                 "(no-FE linear probability, cluster-robust)")
    return frames, notes


def _cluster_artifacts(cfg):
    from . import design, rng, tasks

    dataset = design.generate_dataset(cfg.design, cfg.master_seed)
    occ = dataset.occupations
    centiles = tasks.percentile_table(occ)
    x = centiles[list(tasks.TASK_FIELDS)].to_numpy()
    elbow, models = tasks.kmeans_scan(x, cfg.analysis.cluster_k,
                                      rng.derive(cfg.master_seed, "cluster"),
                                      n_restarts=max(16, cfg.analysis.cluster_seeds))
    chosen = elbow.suggested_k or elbow.ks[len(elbow.ks) // 2]
    import pandas as pd
    scan = pd.DataFrame({
        "k": list(elbow.ks),
        "wss": list(elbow.wss),
        "suggested": [int(k == elbow.suggested_k) for k in elbow.ks],
    })
    assign = pd.DataFrame({
        "occupation_id": occ["occupation_id"].to_numpy(),
        "occupation_category": occ["occupation_category"].to_numpy(),
        "cluster": models[chosen].labels,
    })
    return scan, assign, chosen


def _power_report(cfg):
    from . import power as power_mod
    from . import rng

    p = cfg.power
    seed = rng.derive(cfg.master_seed, "power")
    if p.protocol == "audit_reference":
        proto = power_mod.audit_reference_protocol(
            n_ads=p.n_ads or 10800, k=p.resumes_per_ad, baseline=p.baseline,
            target_rate=p.target_rate, icc=p.icc, alpha=p.alpha)
    else:
        proto = power_mod.two_arm_cluster_protocol(
            n_ads=p.n_ads or 500, k=p.resumes_per_ad, p0=p.baseline,
            p1=p.target_rate, icc=p.icc, alpha=p.alpha)
    return power_mod.mc_power(proto, p.replications, master_seed=seed)


def _write_estimates(base_dir, frames, notes):
    from . import report

    for name, frame in sorted(frames.items()):
        report.write_table(os.path.join(base_dir, "fits", f"{name}.csv"), frame)
    for name in sorted(notes):
        if name in frames:
            text = render_report(frames[name], name, notes[name])
            report.write_text(os.path.join(base_dir, "reports", f"{name}.txt"),
                              text)


def render_report(frame, name, note):
    from . import report

    title = name.replace("_", " ")
    return report.render_table(frame, title=title, digits=4) + "\n" + note + "\n"


def cmd_simulate(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    data = _simulate_dataset(cfg)
    os.makedirs(out, exist_ok=True)
    data.to_csv(os.path.join(out, "dataset.csv"))
    from . import report
    report.write_json(os.path.join(out, "simulation.json"), dict(data.meta))
    _say(args, f"wrote {os.path.join(out, 'dataset.csv')} "
               f"({len(data.apps)} applications)")
    return 0


def cmd_estimate(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    path = os.path.join(out, "dataset.csv")
    if not os.path.exists(path):
        raise RuntimeError(f"no dataset at {path}; run simulate first")
    from . import design
    data = design.AuditDataset.from_csv(path, design=cfg.design)
    if not data.has_callbacks():
        raise RuntimeError("dataset has no callbacks to estimate on")
    frames, notes = _estimate_artifacts(data, cfg)
    _write_estimates(out, frames, notes)
    _say(args, f"wrote {len(frames)} fit tables under {out}/fits")
    return 0


def cmd_cluster(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    scan, assign, chosen = _cluster_artifacts(cfg)
    from . import report
    report.write_table(os.path.join(out, "cluster_scan.csv"), scan)
    report.write_table(os.path.join(out, "clusters.csv"), assign)
    _say(args, f"clustered occupations at k={chosen}")
    return 0


def cmd_power(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg, required=False)
    rep = _power_report(cfg)
    from . import report
    if out:
        os.makedirs(out, exist_ok=True)
        report.write_json(os.path.join(out, "power.json"), rep.to_dict())
        report.write_text(os.path.join(out, "power.txt"), report.power_text(rep))
        _say(args, f"wrote {os.path.join(out, 'power.json')}")
    else:
        print(report.power_text(rep), end="")
    return 0


def cmd_verify(args):
    from . import verify as verify_mod
    from . import report, rng

    cfg = _load_config(args, required=False)
    seed = 0
    draws = 1_000_000
    if cfg is not None:
        seed = rng.derive(cfg.master_seed, "verify")
        draws = cfg.verify_draws
    if args.seed is not None and cfg is None:
        seed = args.seed
    rep = verify_mod.run_verify(seed=seed, draws=draws)
    out = _out_dir(args, cfg, required=False)
    if out:
        os.makedirs(out, exist_ok=True)
        report.write_json(os.path.join(out, "verify.json"), rep.to_dict())
    if not args.quiet or not out:
        for line in rep.lines():
            print(line)
    return 0 if rep.passed else 1


def cmd_run(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    from . import report, rng
    from . import verify as verify_mod

    staging = report.StagingDir(out)
    try:
        _say(args, "simulating dataset")
        data = _simulate_dataset(cfg)
        data.to_csv(staging.file("dataset.csv"))
        report.write_json(staging.file("simulation.json"), dict(data.meta))

        _say(args, "running estimation battery")
        frames, notes = _estimate_artifacts(data, cfg)
        _write_estimates(staging.path, frames, notes)

        _say(args, "clustering occupations")
        scan, assign, chosen = _cluster_artifacts(cfg)
        report.write_table(staging.file("cluster_scan.csv"), scan)
        report.write_table(staging.file("clusters.csv"), assign)

        _say(args, "running power protocol")
        power_rep = _power_report(cfg)
        report.write_json(staging.file("power.json"), power_rep.to_dict())
        report.write_text(staging.file("power.txt"),
                          report.power_text(power_rep))

        _say(args, "certifying model math")
        verify_rep = verify_mod.run_verify(
            seed=rng.derive(cfg.master_seed, "verify"), draws=cfg.verify_draws)
        report.write_json(staging.file("verify.json"), verify_rep.to_dict())

        manifest = {
            "master_seed": cfg.master_seed,
            "dgp_mode": cfg.dgp_mode,
            "config": cfg.raw,
            "simulation": dict(data.meta),
            "cluster_k": chosen,
            "verify_passed": verify_rep.passed,
            "artifacts": sorted(
                os.path.relpath(os.path.join(root, f), staging.path)
                for root, _, files in os.walk(staging.path) for f in files),
        }
        manifest["artifacts"].append("manifest.json")
        manifest["artifacts"].sort()
        report.write_json(staging.file("manifest.json"), manifest)
    except BaseException:
        staging.discard()
        raise
    final = staging.publish()
    _say(args, f"run complete: {final}")
    return 0


def cmd_report(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    fits = os.path.join(out, "fits")
    if not os.path.isdir(fits):
        raise RuntimeError(f"no fit tables under {fits}; run estimate first")
    import pandas as pd
    from . import report
    count = 0
    for name in sorted(os.listdir(fits)):
        if not name.endswith(".csv"):
            continue
        stem = name[:-4]
        frame = pd.read_csv(os.path.join(fits, name),
                            float_precision="round_trip")
        text = report.render_table(frame, title=stem.replace("_", " "),
                                   digits=4)
        report.write_text(os.path.join(out, "reports", f"{stem}.txt"), text)
        count += 1
    _say(args, f"rebuilt {count} text reports under {out}/reports")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "cluster": cmd_cluster,
    "power": cmd_power,
    "verify": cmd_verify,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        _apply_threads(args.threads)
        from .config import ConfigError
        try:
            return _COMMANDS[args.command](args)
        except ConfigError as exc:
            sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
            return 2
    except (ValueError, RuntimeError, OSError) as exc:
        sys.stderr.write(json.dumps(
            {"error": "runtime", "message": str(exc)}, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Artifact serialization: stable CSV/JSON writers and text tables.

Every writer here is deterministic: JSON keys are sorted, CSV floats use
their shortest round-trip form, text tables are fixed-width with no
timestamps or environment echoes, and all files end with a single
newline. Artifacts are written to a temporary file in the target
directory and moved into place, so readers never observe a partial
file; whole-directory staging for pipeline runs works the same way at
the directory level.
"""

from __future__ import annotations

import csv
import json
import os
import shutil

import numpy as np
import pandas as pd


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if np.isnan(v) else repr(v)
    return str(value)


def _replace_into(path, write_fn):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    tmp = os.path.join(parent, f".tmp-{os.path.basename(path)}")
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def write_table(path, frame):
    """Write a DataFrame as CSV with round-trip floats and LF endings."""

    def _write(tmp):
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(frame.columns)
            for row in frame.itertuples(index=False):
                writer.writerow([_cell(v) for v in row])

    _replace_into(path, _write)


def _json_default(value):
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_json(path, obj):
    """Write an object as sorted-key JSON with a trailing newline."""

    def _write(tmp):
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False,
                      default=_json_default)
            fh.write("\n")

    _replace_into(path, _write)


def write_text(path, text):
    """Write text verbatim, ensuring a trailing newline."""

    def _write(tmp):
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")

    _replace_into(path, _write)


def _format_number(value, digits):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if np.isnan(v):
            return ""
        return f"{v:.{digits}f}"
    return str(value)


def render_table(frame, title=None, digits=4):
    """Fixed-width text rendering of a DataFrame.

    Numeric cells are rounded to ``digits`` decimals and right-aligned;
    strings are left-aligned. Intended for the human-readable report
    files next to the CSV artifacts.
    """
    columns = list(frame.columns)
    cells = [[_format_number(v, digits) for v in row]
             for row in frame.itertuples(index=False)]
    numeric = [pd.api.types.is_numeric_dtype(frame[c]) for c in columns]
    widths = [max(len(str(c)), *(len(r[i]) for r in cells)) if cells
              else len(str(c)) for i, c in enumerate(columns)]

    def fmt_row(row):
        parts = []
        for i, v in enumerate(row):
            parts.append(v.rjust(widths[i]) if numeric[i] else v.ljust(widths[i]))
        return "  ".join(parts).rstrip()

    lines = []
    if title:
        lines.append(title)
        lines.append("=" * len(title))
    lines.append(fmt_row([str(c) for c in columns]))
    lines.append("  ".join("-" * w for w in widths))
    lines.extend(fmt_row(r) for r in cells)
    return "\n".join(lines) + "\n"


def power_text(report):
    """One-page text summary of a PowerReport."""
    lines = [
        "power analysis",
        "==============",
        f"test:            {report.test}",
        f"alpha:           {report.alpha:g} (two-sided)",
        f"design effect:   {report.design_effect:.4f}",
        f"base n per arm:  {report.base_n}",
        f"adjusted n:      {report.adjusted_n}",
    ]
    if report.analytic_power is not None:
        lines.append(f"analytic power:  {report.analytic_power:.4f}")
    lines.append(f"mc power:        {report.mc_power:.4f} "
                 f"(se {report.mc_se:.4f}, {report.replications} replications, "
                 f"{report.failed} failed)")
    if report.notes:
        lines.append(f"notes:           {report.notes}")
    return "\n".join(lines) + "\n"


class StagingDir:
    """Build an artifact directory aside, then publish it atomically.

    Files are written under ``<final>.staging``; ``publish`` moves the
    tree to the final path, and ``discard`` removes every partial
    output. The final path must not already contain files, so a failed
    run never leaves a half-written artifact set behind.
    """

    def __init__(self, final_path):
        self.final = os.path.abspath(final_path)
        self.path = self.final + ".staging"
        if os.path.isdir(self.final) and os.listdir(self.final):
            raise RuntimeError(
                f"output directory {self.final} already has contents; "
                "point the run at a fresh directory")
        if os.path.exists(self.path):
            shutil.rmtree(self.path)
        os.makedirs(self.path)

    def file(self, *parts):
        return os.path.join(self.path, *parts)

    def publish(self):
        if os.path.isdir(self.final):
            os.rmdir(self.final)
        os.replace(self.path, self.final)
        return self.final

    def discard(self):
        if os.path.exists(self.path):
            shutil.rmtree(self.path)

"""Deterministic file writers for run, sweep and refinement output.

Every file is written to a temporary sibling and renamed into place, so a
reader never sees a half-written file.  Floats are printed in a fixed
scientific format and rows have a fixed order, so identical runs give
identical bytes.  Wall-clock data lives only in the ``metadata`` block of
the JSON summaries.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .diagnostics import ConvergenceReport

PROFILE_HEADER = ("t_days", "x_cm", "theta", "C_alpha", "C_beta", "C_q", "C_g", "phi")
FRONT_HEADER = ("t_days", "s_cm")
COMPARISON_HEADER = ("scenario", "param_value", "s_final_cm", "theta_min_final", "phi_min_final", "runtime_s")
FAILURE_HEADER = ("scenario", "error")
CONVERGENCE_HEADER = ("N", "l2_error", "ratio", "order")


def fmt(value) -> str:
    """Fixed 16-significant-digit text; empty for None."""
    if value is None:
        return ""
    value = float(value)
    if value == 0.0:
        value = 0.0  # drop the sign of negative zero
    return format(value, ".15e")


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def profiles_csv(result) -> str:
    x = result.x
    phi = result.phi
    rows = []
    for k, t in enumerate(result.t):
        cols = (result.theta[k], result.C[0, k], result.C[1, k], result.C[2, k], result.C[3, k], phi[k])
        for i in range(x.size):
            rows.append([fmt(t), fmt(x[i])] + [fmt(c[i]) for c in cols])
    return _csv_text(PROFILE_HEADER, rows)


def front_csv(result) -> str:
    return _csv_text(FRONT_HEADER, ([fmt(t), fmt(s)] for t, s in zip(result.front.t, result.front.s)))


def _clean(obj):
    """JSON-safe copy with non-finite floats mapped to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def metadata(**extra) -> dict:
    return {
        "created_utc": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "rewet_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        **extra,
    }


def summary_dict(result) -> dict:
    """Scalar metrics of one run; volatile data is kept under ``metadata``."""
    data = result.summary()
    data.pop("scenario", None)
    trace = data.pop("trace")
    wall = trace.pop("wall_time", None)
    data["trace"] = trace
    data["parameters"] = result.params.as_dict()
    data["metadata"] = metadata(scenario=result.id, runtime_s=result.runtime, integrator_wall_s=wall)
    return _clean(data)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def write_run(result, out_dir) -> dict:
    """Write profiles.csv, front.csv and summary.json for one scenario."""
    out = Path(out_dir)
    return {
        "profiles": atomic_write(out / "profiles.csv", profiles_csv(result)),
        "front": atomic_write(out / "front.csv", front_csv(result)),
        "summary": atomic_write(out / "summary.json", _json(summary_dict(result))),
    }


def comparison_csv(campaign) -> str:
    rows = []
    for r in campaign:
        rows.append([
            r.id, fmt(r.param_value), fmt(r.s_final),
            fmt(r.theta[-1].min()), fmt(r.phi[-1].min()), format(r.runtime, ".3f"),
        ])
    return _csv_text(COMPARISON_HEADER, rows)


def failures_csv(campaign) -> str:
    return _csv_text(FAILURE_HEADER, ([sid, campaign.failures[sid]] for sid in campaign.order
                                      if sid in campaign.failures))


def write_campaign(campaign, out_dir, name: str = "campaign", write_runs: bool = True) -> dict:
    """Per-scenario bundles plus the comparison table, written after all runs finish."""
    out = Path(out_dir)
    paths = {}
    if write_runs:
        for r in campaign:
            write_run(r, out / r.id)
    paths["comparison"] = atomic_write(out / "comparison.csv", comparison_csv(campaign))
    paths["failures"] = atomic_write(out / "failures.csv", failures_csv(campaign))
    report = {
        "name": name,
        "scenarios": [
            {"id": sid, "status": "ok" if sid in campaign.results else "failed",
             "reference": bool(campaign.results[sid].is_reference) if sid in campaign.results else None,
             "error": campaign.failures.get(sid)}
            for sid in campaign.order
        ],
        "failures": {sid: campaign.failures[sid] for sid in campaign.order if sid in campaign.failures},
        "metadata": metadata(),
    }
    paths["summary"] = atomic_write(out / "campaign.json", _json(report))
    return paths


def convergence_csv(report: ConvergenceReport) -> str:
    rows = ([str(n), fmt(e), fmt(r), fmt(o)]
            for n, e, r, o in zip(report.Ns, report.errors, report.ratios, report.orders))
    return _csv_text(CONVERGENCE_HEADER, rows)


def write_convergence(report: ConvergenceReport, out_dir, runtime: Optional[float] = None) -> Path:
    out = Path(out_dir)
    path = atomic_write(out / "convergence.csv", convergence_csv(report))
    atomic_write(out / "convergence.json", _json(_clean({
        "Ns": report.Ns, "errors": report.errors, "ratios": report.ratios, "orders": report.orders,
        "metadata": metadata(runtime_s=runtime),
    })))
    return path

"""Text and CSV renderings of evaluation reports.

Each pipeline gets two rows, the mean over repeats and the standard
deviation, with error, sensitivity, specificity and AUC as percentages.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

from biofuse.evaluation import METRICS, EvalReport
from biofuse.io import csv_text, atomic_write, write_json

HEADER = ("Error", "SN", "SP", "AUC")


def _pct(x: float) -> str:
    return "n/a" if not math.isfinite(x) else f"{100 * x:.2f}%"


def parse_pct(cell: str) -> float:
    """Inverse of the table formatting; NaN for ``n/a``."""
    return float("nan") if cell == "n/a" else float(cell.rstrip("%")) / 100


def report_rows(report: EvalReport) -> list[list[str]]:
    label = report.pipeline_id
    if report.flags:
        label += " [flagged]"
    mean = [label, "mean"] + [_pct(report.mean(m)) for m in METRICS]
    std = ["", "std"] + [_pct(report.std(m)) for m in METRICS]
    return [mean, std]


def render_table(reports: Sequence[EvalReport], title: str | None = None) -> str:
    rows = [["Pipeline", ""] + list(HEADER)]
    for r in reports:
        rows.extend(report_rows(r))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = [title] if title else []
    for row in rows:
        lines.append("  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip())
    return "\n".join(lines)


def roc_csv(report: EvalReport) -> str:
    rows = ([str(rep), repr(fpr), repr(tpr)] for rep, pts in enumerate(report.roc) for fpr, tpr in pts)
    return csv_text(["repeat", "fpr", "tpr"], rows)


def emit_report_tables(reports: Sequence[EvalReport], out_dir=None,
                       groups: Sequence[tuple[str, Sequence[str]]] | None = None) -> str:
    """Render mean/std rows per pipeline; optionally write machine files.

    ``groups`` splits the output into titled tables of pipeline ids.  With
    ``out_dir`` set, writes ``tables.txt``, ``tables.json`` and one
    ``roc/<pipeline>.csv`` per report.  Reports with a degenerate repeat
    (empty ROC) are marked ``[flagged]`` rather than dropped.
    """
    if not reports:
        raise ValueError("no reports to render")
    by_id = {r.pipeline_id: r for r in reports}
    if groups is None:
        groups = [(None, [r.pipeline_id for r in reports])]
    text = "\n\n".join(render_table([by_id[i] for i in ids], title) for title, ids in groups) + "\n"
    if out_dir is not None:
        out = Path(out_dir)
        atomic_write(out / "tables.txt", text)
        summary = {
            r.pipeline_id: {
                "aggregate": {m: {k: (v if math.isfinite(v) else None) for k, v in agg.items()}
                              for m, agg in r.aggregate().items()},
                "flags": r.flags,
                "n_repeats": r.n_repeats,
            }
            for r in reports
        }
        write_json(out / "tables.json", {"groups": [[t, list(ids)] for t, ids in groups], "pipelines": summary})
        for r in reports:
            atomic_write(out / "roc" / f"{r.pipeline_id}.csv", roc_csv(r))
    return text

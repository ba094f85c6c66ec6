"""The two-table experiment grid on synthetic data.

Table 1 crosses five base models with three inputs (spectral peaks,
panel, both merged).  Table 2 holds the model-combination pipelines and
the t-test filtered merge.  Every combination row is compared with the
best merged pipeline by the corrected resampled t-test on per-split AUC.
"""

from __future__ import annotations

import hashlib
import logging
import platform
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path
from typing import Sequence

from biofuse.errors import ConfigInvalid
from biofuse.evaluation import EvalReport, corrected_t_test
from biofuse.experiment import ExperimentConfig, config_hash, run_config
from biofuse.io import SCHEMA_VERSION, write_json, write_labels_csv, write_spectra_csv, write_table_csv
from biofuse.report import emit_report_tables
from biofuse.synth import SynthConfig, generate

logger = logging.getLogger(__name__)

MODELS = ("cart", "nb", "logreg", "rf", "svm")
SOURCES = {"A": "spectral", "B": "panel", "MERGED": "merged"}

# preprocessing matched to the generator's narrow peaks
SUITE_PREPROCESS = {"smooth_sigma": 1.5, "match_bandwidth": 15.0}
SUITE_NEIGHBORHOOD = 2

COMPOSITION_ID = "svmA_rfB_nb"
MERGED_RF_ID = "merged_rf"


def table1_specs() -> list[dict]:
    return [{"id": f"{name}_{kind}", "source": src, "model": {"kind": kind}}
            for src, name in SOURCES.items() for kind in MODELS]


def table2_specs(score_mode: str = "out_of_fold") -> list[dict]:
    return [
        {"id": COMPOSITION_ID, "fusion": {
            "strategy": "composition", "base": {"A": {"kind": "svm"}, "B": {"kind": "rf"}},
            "second_level": {"kind": "nb"}, "score_mode": score_mode}},
        {"id": "svmA_into_panel_rf", "fusion": {
            "strategy": "inclusion", "base": {"A": {"kind": "svm"}}, "target": {"kind": "rf"},
            "score_mode": score_mode}},
        {"id": "rfB_into_spectral_svm", "fusion": {
            "strategy": "inclusion", "base": {"B": {"kind": "rf"}}, "target": {"kind": "svm"},
            "score_mode": score_mode}},
        {"id": "ttest50_merged_rf", "source": "MERGED", "ttest_k": 50, "model": {"kind": "rf"}},
    ]


def suite_experiment(n_repeats: int = 40, seed: int = 0, score_mode: str = "out_of_fold") -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "inputs": {"spectra": "data/spectra.csv", "panel": "data/panel.csv", "labels": "data/labels.csv"},
        "preprocess": dict(SUITE_PREPROCESS),
        "peaks": {"neighborhood": SUITE_NEIGHBORHOOD},
        "split": {"train_fraction": 0.7, "n_repeats": n_repeats, "seed": seed, "stratified": True},
        "pipelines": table1_specs() + table2_specs(score_mode),
    }


def versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba"):
        out[pkg] = metadata.version(pkg)
    try:
        out["biofuse"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["biofuse"] = "unknown"
    return out


def compare_all(reports: dict[str, EvalReport], metric: str = "auc") -> list[dict]:
    """Each Table 2 row against the best merged pipeline, plus the
    composition row against merged RF and the Table 2 rows pairwise."""
    merged = [r for k, r in reports.items() if k.startswith("merged_")]
    best = max(merged, key=lambda r: (r.mean(metric), r.pipeline_id))
    combo = [k for k in reports if k not in {s["id"] for s in table1_specs()}]
    pairs = [(k, best.pipeline_id) for k in combo]
    if (COMPOSITION_ID, MERGED_RF_ID) not in pairs and COMPOSITION_ID in reports:
        pairs.append((COMPOSITION_ID, MERGED_RF_ID))
    pairs += [(a, b) for i, a in enumerate(combo) for b in combo[i + 1:]]
    out = []
    for a, b in pairs:
        res = corrected_t_test(reports[a], reports[b], metric)
        out.append({"a": a, "b": b, "metric": metric, **res.to_dict()})
    return out


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class SuiteResult:
    reports: dict[str, EvalReport]
    comparisons: list[dict]
    tables: str
    excluded: list[str]


def run_suite(seed: int, out_dir, n_repeats: int = 40, synth: dict | None = None,
              score_mode: str = "out_of_fold", n_jobs: int | None = None,
              only: Sequence[str] | None = None) -> SuiteResult:
    """Generate data, evaluate the grid, write reports, tables and a manifest.

    Output layout under ``out_dir``: ``data/`` (generated inputs),
    ``experiment.json``, ``reports/<id>.json``, ``tables.txt``,
    ``tables.json``, ``roc/<id>.csv``, ``comparisons.json`` and
    ``manifest.json``.  ``only`` restricts the grid to the listed pipeline
    ids (it must keep at least one merged pipeline for the comparisons).
    """
    out = Path(out_dir)
    synth_cfg = SynthConfig.from_dict({**(synth or {}), "seed": seed})
    data = generate(synth_cfg)
    write_spectra_csv(out / "data" / "spectra.csv", data.spectra)
    write_table_csv(out / "data" / "panel.csv", data.panel)
    write_labels_csv(out / "data" / "labels.csv", data.panel.sample_ids, data.labels)
    write_json(out / "data" / "truth.json", data.truth)

    exp_dict = suite_experiment(n_repeats, seed, score_mode)
    if only is not None:
        unknown = set(only) - {p["id"] for p in exp_dict["pipelines"]}
        if unknown:
            raise ConfigInvalid(f"unknown suite pipelines: {sorted(unknown)}")
        exp_dict["pipelines"] = [p for p in exp_dict["pipelines"] if p["id"] in set(only)]
    write_json(out / "experiment.json", exp_dict)
    cfg = ExperimentConfig.from_dict(exp_dict, out)
    result = run_config(cfg, n_jobs)
    reports = {r.pipeline_id: r for r in result.reports}
    for r in result.reports:
        write_json(out / "reports" / f"{r.pipeline_id}.json", r.to_dict())

    t1 = [s["id"] for s in table1_specs()]
    groups = [(f"Table 1 analogue ({SOURCES[src]})", [i for i in t1 if i.startswith(SOURCES[src] + "_")])
              for src in SOURCES]
    groups.append(("Table 2 analogue", [s["id"] for s in table2_specs(score_mode)]))
    groups = [(title, [i for i in ids if i in reports]) for title, ids in groups]
    groups = [g for g in groups if g[1]]
    tables = emit_report_tables(result.reports, out, groups)
    if n_repeats >= 2:
        comparisons = compare_all(reports)
    else:
        logger.warning("a single split allows no resampled t-test; comparisons skipped")
        comparisons = []
    write_json(out / "comparisons.json", {"comparisons": comparisons})

    outputs = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    write_json(out / "manifest.json", {
        "schema_version": SCHEMA_VERSION,
        "command": ["paper-suite", "--seed", str(seed), "--repeats", str(n_repeats)],
        "pipelines": [p["id"] for p in exp_dict["pipelines"]],
        "seeds": {"synth": seed, "split": seed},
        "synth_config": synth_cfg.to_dict(),
        "experiment_config_hash": config_hash(cfg.to_dict()),
        "plan_fingerprint": result.plan.fingerprint,
        "excluded": result.excluded,
        "versions": versions(),
        "outputs": {str(p.relative_to(out)): _digest(p) for p in outputs},
    })
    return SuiteResult(reports, comparisons, tables, result.excluded)

"""``biofuse`` command-line front end.

Exit codes: 0 success, 1 usage error, 2 data/config/IO error, 3 numerical
failure (non-convergence escalated by ``--strict``).  Errors go to stderr
as ``E:<code>: message``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from biofuse.errors import BiofuseError, DidNotConverge, FormatError
from biofuse.evaluation import METRICS, EvalReport, corrected_t_test
from biofuse.experiment import ExperimentConfig, run_config
from biofuse.io import (
    read_json, read_labels_csv, read_spectra_csv, write_json, write_labels_csv,
    write_spectra_csv, write_table_csv,
)
from biofuse.peaks import PeakModel, build_peak_model, extract_features, mean_profile
from biofuse.report import emit_report_tables
from biofuse.spectra import PipelineConfig, preprocess_batch
from biofuse.synth import SynthConfig, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUM = 0, 1, 2, 3

log = logging.getLogger("biofuse")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"E:USAGE: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fail_unconverged(reports, strict: bool) -> None:
    bad = [r.pipeline_id for r in reports if "did_not_converge" in r.flags]
    if bad:
        msg = f"training did not converge in {', '.join(bad)}"
        if strict:
            raise DidNotConverge(msg)
        log.warning(msg)


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_dict(read_json(args.config)) if args.config else SynthConfig()
    if args.seed is not None:
        cfg = SynthConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    data = generate(cfg)
    out = Path(args.out_dir)
    write_spectra_csv(out / "spectra.csv", data.spectra)
    write_table_csv(out / "panel.csv", data.panel)
    write_labels_csv(out / "labels.csv", data.panel.sample_ids, data.labels)
    write_json(out / "truth.json", data.truth)
    print(f"wrote {len(data.spectra)} samples to {out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = PipelineConfig.from_dict(read_json(args.config)) if args.config else PipelineConfig()
    spectra = read_spectra_csv(args.inp)
    result = preprocess_batch(spectra, cfg)
    write_spectra_csv(args.out, result.spectra)
    if args.qc_report:
        write_json(args.qc_report, {
            "sd_limit": cfg.qc_sd_limit,
            "tic_target": result.tic_target,
            "excluded": [{"sample_id": s, "z": result.zscores[s]} for s in result.excluded],
            "zscores": result.zscores,
        })
    print(f"kept {len(result.spectra)} of {len(spectra)} spectra")
    return EXIT_OK


def cmd_peaks(args) -> int:
    spectra = read_spectra_csv(args.inp)
    labels = read_labels_csv(args.labels) if args.labels else None
    if args.use_model:
        pm = PeakModel.from_dict(read_json(args.use_model))
    else:
        training = spectra if labels is None else [s for s in spectra if s.sample_id in labels]
        if not training:
            raise FormatError("no spectrum has a label; nothing to learn peaks from")
        pm = build_peak_model(mean_profile(training), args.neighborhood)
    y = None if labels is None else [labels.get(s.sample_id, 0) for s in spectra]
    d = extract_features(spectra, pm, y)
    write_table_csv(args.out, d)
    if args.model and not args.use_model:
        write_json(args.model, pm.to_dict())
    print(f"{len(pm)} peak features for {d.n_samples} samples")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    result = run_config(cfg, args.jobs)
    write_json(args.out, result.to_dict(cfg))
    tables_dir = args.tables_dir or cfg.outputs.get("tables_dir")
    print(emit_report_tables(result.reports, tables_dir), end="")
    _fail_unconverged(result.reports, args.strict)
    return EXIT_OK


def _load_report(path, pipeline_id: str | None) -> EvalReport:
    data = read_json(path)
    if "reports" in data:
        reports = {r["pipeline_id"]: r for r in data["reports"]}
        if pipeline_id is None:
            if len(reports) != 1:
                raise FormatError(f"{path} holds {len(reports)} reports; pick one with --a-id/--b-id")
            pipeline_id = next(iter(reports))
        if pipeline_id not in reports:
            raise FormatError(f"{path} has no report {pipeline_id!r}")
        return EvalReport.from_dict(reports[pipeline_id])
    if "pipeline_id" not in data:
        raise FormatError(f"{path} is not an evaluation report")
    return EvalReport.from_dict(data)


def cmd_compare(args) -> int:
    a = _load_report(args.a, args.a_id)
    b = _load_report(args.b, args.b_id)
    res = corrected_t_test(a, b, args.metric, alpha=args.alpha)
    if args.json:
        print(json.dumps({"a": a.pipeline_id, "b": b.pipeline_id, "metric": args.metric, **res.to_dict()}))
    else:
        verdict = "significant" if res.significant else "not significant"
        print(f"{a.pipeline_id} vs {b.pipeline_id} on {args.metric}: mean diff {res.mean_diff:+.4f}, "
              f"t = {res.t:.4f}, p = {res.p:.4g} ({verdict} at {args.alpha})")
    return EXIT_OK


def cmd_paper_suite(args) -> int:
    from biofuse.suite import run_suite

    synth = read_json(args.synth_config) if args.synth_config else None
    result = run_suite(args.seed, args.out_dir, n_repeats=args.repeats, synth=synth,
                       score_mode=args.score_mode, n_jobs=args.jobs)
    print(result.tables, end="")
    print("\nComparisons (corrected resampled t-test, AUC)")
    for c in result.comparisons:
        print(f"  {c['a']} vs {c['b']}: t = {float(c['t']):.3f}, p = {c['p']:.4g}")
    _fail_unconverged(result.reports.values(), args.strict)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="biofuse", description="Two-source biomarker classification: preprocessing, "
                "peak features, base models, fusion strategies and resampled evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic two-source study")
    s.add_argument("--config", help="SynthConfig JSON (defaults if omitted)")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--out-dir", required=True, help="writes spectra.csv, panel.csv, labels.csv, truth.json")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="QC, baseline, smoothing, TIC normalization, alignment")
    s.add_argument("--in", dest="inp", required=True, help="raw spectra CSV (mz,<id1>,...)")
    s.add_argument("--config", help="preprocessing config JSON (defaults if omitted)")
    s.add_argument("--out", required=True, help="preprocessed spectra CSV")
    s.add_argument("--qc-report", help="JSON listing excluded samples and TIC z-scores")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("peaks", help="learn a peak model and extract windowed peak features")
    s.add_argument("--in", dest="inp", required=True, help="preprocessed spectra CSV")
    s.add_argument("--labels", help="labels CSV; only labeled samples train the peak model")
    s.add_argument("--out", required=True, help="features CSV (sample_id,peak_<mz>,...)")
    s.add_argument("--model", help="where to write the learned peak model JSON")
    s.add_argument("--use-model", help="apply an existing peak model instead of learning one")
    s.add_argument("--neighborhood", type=int, default=5, help="half-width of the feature window (default 5)")
    s.set_defaults(func=cmd_peaks)

    s = sub.add_parser("evaluate", help="run an experiment config over repeated random splits")
    s.add_argument("--config", required=True, help="experiment JSON")
    s.add_argument("--out", required=True, help="report JSON with per-repeat metrics and ROC points")
    s.add_argument("--tables-dir", help="also write tables.txt, tables.json and roc/*.csv here")
    s.add_argument("--jobs", type=int, help="worker processes (default: BIOFUSE_THREADS or 1)")
    s.add_argument("--strict", action="store_true", help="exit 3 if any model fails to converge")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare", help="corrected resampled paired t-test between two reports")
    s.add_argument("--a", required=True, help="report JSON")
    s.add_argument("--b", required=True, help="report JSON")
    s.add_argument("--a-id", help="pipeline id inside --a when it holds several reports")
    s.add_argument("--b-id", help="pipeline id inside --b when it holds several reports")
    s.add_argument("--metric", default="auc", choices=METRICS)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--json", action="store_true", help="print the result as JSON")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("paper-suite", help="generate data and run the full two-table experiment grid")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--repeats", type=int, default=40, help="number of 70/30 splits (default 40)")
    s.add_argument("--synth-config", help="SynthConfig overrides JSON")
    s.add_argument("--score-mode", default="out_of_fold", choices=["out_of_fold", "in_sample"],
                   help="how level-one scores for training rows are produced")
    s.add_argument("--jobs", type=int, help="worker processes (default: BIOFUSE_THREADS or 1)")
    s.add_argument("--strict", action="store_true", help="exit 3 if any model fails to converge")
    s.set_defaults(func=cmd_paper_suite)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage errors 1
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("E:USAGE: a command is required", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BiofuseError as exc:
        print(f"E:{exc.code}: {exc}", file=sys.stderr)
        return EXIT_NUM if isinstance(exc, DidNotConverge) else EXIT_DATA
    except OSError as exc:
        print(f"E:IO: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

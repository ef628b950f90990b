"""Command line entry point: ``ctcpipe detect|calibrate|generate|report``.

Exit codes: 0 clean, 1 fatal (config / IO / nothing to do), 2 finished
with per-sample stage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, build_config, read_json_object, read_params_file
from .decision import Semantics, Uncalibratable, calibrate_thresholds
from .pipeline import EvaluationError, Outcome, evaluate_batch, run_batch, top_verdicts
from .storage import (
    MANIFEST,
    discover_samples,
    iter_jsonl,
    read_manifest_labels,
    read_results,
    result_line,
    write_report,
    write_sample_dir,
)
from .synthgen import (
    PRESETS,
    BatchParams,
    InfeasibleScene,
    NoiseSpec,
    calibration_records,
    generate,
    generate_batch,
    spec_from_json,
)

log = logging.getLogger("ctcpipe")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


def _semantics_arg(v: str) -> str:
    try:
        return Semantics.parse(v).value
    except ValueError:
        raise argparse.ArgumentTypeError("expected exclusionary or paper-literal") from None


def _dims_arg(v: str) -> tuple[int, int]:
    try:
        w, h = (int(p) for p in v.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected WIDTHxHEIGHT") from None
    return w, h


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_FATAL


def format_report(report, top=(), bad_lines=()) -> str:
    lines = [f"{report.n_samples} samples"]
    if report.n_samples:
        lines += [
            f"  no CK detected:    {report.n_no_ck}",
            f"  no DAPI detected:  {report.n_no_dapi}",
            f"  fully evaluated:   {report.n_evaluated}",
            f"  predicted positive {report.n_predicted_positive} / negative {report.n_predicted_negative}",
        ]
    if report.n_errors:
        lines.append(f"  stage errors:      {report.n_errors} ({', '.join(report.error_ids[:5])})")
    if report.accuracy is not None:
        lines.append(f"accuracy {100 * report.accuracy:.2f}% ({report.n_correct}/{report.n_samples})")
    if report.stage3_accuracy is not None:
        lines.append(
            f"stage3 accuracy {100 * report.stage3_accuracy:.2f}% "
            f"({report.n_stage3_correct}/{report.n_evaluated})"
        )
    if top:
        lines.append("most confident CTC verdicts:")
        for v in top:
            b = v.breakdown
            lines.append(
                f"  {v.candidate_id}  confidence {b.confidence:.4f}  "
                f"p(CK|C) {b.p_ck_given_c:.3f}  p(CD45|C) {b.p_cd45_given_c:.3f}"
            )
    for lineno, why in bad_lines:
        lines.append(f"warning: skipped corrupt line {lineno}: {why}")
    return "\n".join(lines)


# -- detect -----------------------------------------------------------------


def _manifest_defaults(input_dir: Path) -> dict:
    # a generated dataset suggests its own crop padding
    try:
        data = json.loads((input_dir / MANIFEST).read_text())
        return {"padding": int(data["recommended_padding"])}
    except (OSError, ValueError, KeyError, TypeError):
        return {}


def cmd_detect(args: argparse.Namespace) -> int:
    try:
        file_cfg = read_json_object(args.config, "config") if args.config else {}
        params_cfg = read_params_file(args.params) if args.params else {}
        cfg = build_config(
            _manifest_defaults(Path(args.input_dir)),
            file_cfg,
            params_cfg,
            {
                "workers": args.workers,
                "semantics": args.semantics,
                "r1": args.r1,
                "r2": args.r2,
                "microns_per_pixel": args.microns_per_pixel,
                "padding": args.padding,
                "min_contrast": args.min_contrast,
                "min_separation": args.min_separation,
            },
        )
    except ConfigError as e:
        for p in e.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_FATAL

    input_dir = Path(args.input_dir)
    sources = discover_samples(input_dir)
    if not sources:
        return _fail(f"no samples found in {input_dir}")

    labels = None
    try:
        if args.labels:
            labels = {s["sample_id"]: bool(s["label"]) for s in read_json_object(args.labels, "labels")["samples"]}
        else:
            labels = read_manifest_labels(input_dir)
    except (KeyError, TypeError, ValueError) as e:
        return _fail(f"cannot read labels: {e}")
    ids = {s.sample_id for s in sources}
    if labels is not None and set(labels) != ids:
        log.warning("labels do not cover exactly the samples found; accuracy not reported")
        labels = None

    out_path = Path(args.output)
    report_path = Path(args.report) if args.report else out_path.with_suffix(".report.json")
    results = run_batch(sources, cfg.bindings(), cfg.decision_params(), cfg.pipeline_config(), cfg.workers)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as fh:
            for r in results:
                fh.write(result_line(r, labels[r.sample_id] if labels else None) + "\n")
        report = evaluate_batch(results, labels)
        write_report(report_path, report)
    except OSError as e:
        return _fail(str(e))

    print(format_report(report))
    print(f"results: {out_path}\nreport:  {report_path}")
    return EXIT_PARTIAL if any(r.outcome is Outcome.ERROR for r in results) else EXIT_OK


# -- calibrate --------------------------------------------------------------


def _load_records(path: Path) -> list[tuple[float, float, bool]]:
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        if isinstance(data, dict) and "samples" in data:
            return calibration_records(data)
        if isinstance(data, list):
            return [(d["p_ck_given_c"], d["p_cd45_given_c"], bool(d["label"])) for d in data]
        raise ValueError("JSON input must be a synthgen manifest or a list of records")
    return [(d["p_ck_given_c"], d["p_cd45_given_c"], bool(d["label"])) for d in iter_jsonl(path)]


def cmd_calibrate(args: argparse.Namespace) -> int:
    try:
        records = _load_records(Path(args.records))
    except (OSError, ValueError, KeyError, TypeError) as e:
        return _fail(f"cannot read labeled records: {e}")
    try:
        res = calibrate_thresholds(records, args.grid_step, args.semantics)
    except Uncalibratable as e:
        return _fail(f"uncalibratable: {e}")
    except ValueError as e:
        return _fail(str(e))
    doc = {**res.params.to_dict(), "f1": res.f1, "grid_step": res.grid_step, "n_records": len(records)}
    try:
        Path(args.output).write_text(json.dumps(doc, indent=2) + "\n")
    except OSError as e:
        return _fail(str(e))
    print(f"r1={res.params.r1:.2f} r2={res.params.r2:.2f} F1={res.f1:.4f} ({len(records)} records) -> {args.output}")
    return EXIT_OK


# -- generate ---------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    out = Path(args.output_dir)
    try:
        if args.spec:
            data = read_json_object(args.spec, "spec")
            if "dims" in data and ("ck_blobs" in data or "dapi_blobs" in data or "cd45_blobs" in data):
                spec = spec_from_json(json.dumps(data))
                x, gt = generate(spec)
                write_sample_dir(out / spec.sample_id, x)
                manifest = {
                    "seed": spec.seed,
                    "n": 1,
                    "n_positive": int(gt.is_positive),
                    "samples": [{"sample_id": spec.sample_id, "label": gt.is_positive, "kind": "custom",
                                 "dapi": [{"ck_overlap": t.ck_overlap, "cd45_overlap": t.cd45_overlap,
                                           "is_ctc": t.is_ctc, "label": t.label} for t in gt.dapi]}],
                }
                (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
                print(f"wrote 1 sample to {out}")
                return EXIT_OK
            n = data.pop("n", args.n)
            n_pos = data.pop("n_positive", args.positives or 0)
            seed = data.pop("seed", args.seed)
            if "noise" in data:
                data["noise"] = NoiseSpec(**data["noise"])
            for key in ("dims", "ck_radius", "dapi_radius"):
                if key in data:
                    data[key] = tuple(data[key])
            bp = BatchParams(**data)
        else:
            preset = PRESETS[args.preset] if args.preset else {"n": args.n or 10, "n_positive": args.positives or 0}
            n = args.n if args.n is not None else preset["n"]
            n_pos = args.positives if args.positives is not None else preset["n_positive"]
            seed = args.seed
            kw = {}
            if args.dims:
                kw["dims"] = args.dims
            if args.noise_amplitude:
                kw["noise"] = NoiseSpec("gaussian", args.noise_amplitude)
            bp = BatchParams(**kw)
        if n is None:
            return _fail("batch size not given (use --n, --preset or a spec file)")
        manifest = generate_batch(n, out, seed=seed, n_positive=n_pos, bp=bp)
    except InfeasibleScene as e:
        return _fail(f"infeasible spec: {e}")
    except ConfigError as e:
        return _fail(str(e))
    except (TypeError, KeyError) as e:
        return _fail(f"invalid spec: {e}")
    except OSError as e:
        return _fail(str(e))
    print(
        f"wrote {manifest['n']} samples ({manifest['n_positive']} positive) to {out}; "
        f"suggested crop padding {manifest['recommended_padding']}"
    )
    return EXIT_OK


# -- report -----------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    try:
        parsed = read_results(args.results)
    except OSError as e:
        return _fail(str(e))
    for lineno, why in parsed.bad_lines:
        log.warning("line %d: %s", lineno, why)
    if not parsed.results:
        print("0 samples")
        for lineno, why in parsed.bad_lines:
            print(f"warning: skipped corrupt line {lineno}: {why}")
        return EXIT_OK
    try:
        report = evaluate_batch(parsed.results, parsed.labels)
    except EvaluationError as e:
        return _fail(str(e))
    print(format_report(report, top_verdicts(parsed.results, args.top), parsed.bad_lines))
    return EXIT_OK


# -- wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctcpipe", description="Three-stage CTC detection pipeline")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="run the pipeline over a directory of samples")
    d.add_argument("input_dir")
    d.add_argument("-o", "--output", default="results.jsonl")
    d.add_argument("--report", help="BatchReport path (default: <output>.report.json)")
    d.add_argument("--config")
    d.add_argument("--params", help="params file written by 'calibrate'")
    d.add_argument("--labels", help="manifest with per-sample labels (default: <input_dir>/manifest.json)")
    d.add_argument("--workers", type=int)
    d.add_argument("--semantics", type=_semantics_arg)
    d.add_argument("--r1", type=float)
    d.add_argument("--r2", type=float)
    d.add_argument("--microns-per-pixel", type=float)
    d.add_argument("--padding", type=int)
    d.add_argument("--min-contrast", type=float)
    d.add_argument("--min-separation", type=float)
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("calibrate", help="grid-search r1/r2 on labeled overlap records")
    c.add_argument("records", help="synthgen manifest.json or JSON-lines records")
    c.add_argument("--grid-step", type=float, default=0.01)
    c.add_argument("--semantics", type=_semantics_arg, default="exclusionary")
    c.add_argument("-o", "--output", default="params.json")
    c.set_defaults(func=cmd_calibrate)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("output_dir")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--spec", help="JSON scene spec or batch parameters")
    g.add_argument("--n", type=int)
    g.add_argument("--positives", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dims", type=_dims_arg)
    g.add_argument("--noise-amplitude", type=int)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("report", help="summarize a results file")
    r.add_argument("results")
    r.add_argument("--top", type=int, default=5)
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("CTCPIPE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``rssicount <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import detect, features, lda, pipeline, synth
from .errors import RssiCountError
from .trace import read_trace, write_trace


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--output-dir", type=Path, default=Path("."), help="directory for output files")


def _detector_flags(p: argparse.ArgumentParser, pairing: bool = False) -> None:
    p.add_argument("--method", choices=detect.METHODS, default="std", help="movement detector")
    p.add_argument("--window", type=int, default=detect.DEFAULT_WINDOW, help="sliding window size n")
    p.add_argument("--prob-threshold", type=float, default=detect.PROB_THRESHOLD)
    p.add_argument("--std-threshold", type=float, default=detect.STD_THRESHOLD)
    p.add_argument("--min-duration", type=int, default=detect.DEFAULT_MIN_DURATION)
    p.add_argument("--merge-gap", type=int, default=detect.DEFAULT_MERGE_GAP)
    if pairing:
        p.add_argument("--pairing-window", type=int, default=detect.DEFAULT_PAIRING_WINDOW)


def _detector_config(args) -> detect.DetectorConfig:
    return detect.DetectorConfig(
        method=args.method,
        window=args.window,
        prob_threshold=args.prob_threshold,
        std_threshold=args.std_threshold,
        min_duration=args.min_duration,
        merge_gap=args.merge_gap,
        pairing_window=getattr(args, "pairing_window", detect.DEFAULT_PAIRING_WINDOW),
    )


def _out(args, name: str) -> Path:
    args.output_dir.mkdir(parents=True, exist_ok=True)
    return args.output_dir / name


def _receivers(text: str | None):
    return tuple(r.strip() for r in text.split(",")) if text else None


def cmd_synth(args) -> int:
    cfg = synth.SynthConfig(
        n_samples=max(args.n_samples, 2),
        baseline_rssi_dbm=args.baseline,
        quiet_sigma=args.quiet_sigma,
        active_sigma_base=args.active_sigma,
        sigma_per_person=args.sigma_per_person,
        duration_base=args.duration_base,
        duration_per_person=args.duration_per_person,
        rng_seed=args.seed,
        interval_ms=args.interval_ms,
        loss_prob=args.loss_prob,
    )
    if args.scenario:
        events = synth.read_scenario(args.scenario)
        n = args.n_samples
    else:
        if args.groups:
            sizes = [int(s) for s in args.groups.split(",")]
        else:
            rng = np.random.default_rng(args.seed)
            sizes = rng.permutation(np.repeat(pipeline.GROUPS, args.per_group)).tolist()
        events, needed = synth.layout_events(cfg, sizes, gap=args.gap)
        n = max(args.n_samples, needed)
    cfg = dataclasses.replace(cfg, n_samples=n)
    trace, truth = synth.generate(cfg, events)
    write_trace(trace, _out(args, "trace.csv"))
    synth.write_truth(truth, _out(args, "truth.csv"))
    synth.write_scenario(events, _out(args, "scenario.csv"))
    print(f"wrote {len(trace)} samples, {len(truth)} crossings to {args.output_dir}")
    return 0


def cmd_detect(args) -> int:
    trace = read_trace(args.trace)
    cfg = _detector_config(args)
    rids = _receivers(args.receivers) or trace.receiver_ids
    for rid in rids:
        if rid not in trace.streams:
            raise RssiCountError(f"receiver {rid!r} not in trace")
        stats, decisions, events = detect.detect_stream(trace[rid], cfg)
        _out(args, f"decisions_{rid}.csv").write_text(stats.to_csv(decisions), encoding="utf-8")
        _out(args, f"events_{rid}.csv").write_text(detect.write_events_csv(events), encoding="utf-8")
        print(f"{rid}: {len(events)} events")
    return 0


def cmd_fuse(args) -> int:
    a = detect.read_events_csv(Path(args.events_a).read_text(encoding="utf-8"))
    b = detect.read_events_csv(Path(args.events_b).read_text(encoding="utf-8"))
    res = detect.fuse_receivers(a, b, args.pairing_window)
    _out(args, "pairs.csv").write_text(detect.write_pairs_csv(res.pairs), encoding="utf-8")
    _out(args, "discarded.csv").write_text(detect.write_events_csv(res.discarded), encoding="utf-8")
    print(f"{len(res.pairs)} pairs, {len(res.discarded)} false positives discarded")
    return 0


def cmd_features(args) -> int:
    pairs = detect.read_pairs_csv(Path(args.pairs).read_text(encoding="utf-8"))
    labels = [None] * len(pairs)
    if args.truth:
        labels = pipeline.label_pairs(pairs, synth.read_truth(args.truth))
    vecs = [features.extract(p, lab) for p, lab in zip(pairs, labels)]
    if args.truth and args.drop_unmatched:
        vecs = [v for v in vecs if v.label is not None]
    features.write_features(vecs, _out(args, "features.csv"))
    print(f"{len(vecs)} feature vectors")
    return 0


def cmd_train(args) -> int:
    data = features.read_features(args.features)
    model = lda.fit(data)
    lda.save_model(model, _out(args, args.model_name))
    X, y = features.as_matrix(data)
    report = lda.format_tables(model, X, y)
    _out(args, "training_report.txt").write_text(report, encoding="utf-8")
    for name, text in lda.tables_csv(model, X, y).items():
        _out(args, f"table_{name}.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(report)
    return 0


def cmd_classify(args) -> int:
    model = lda.load_model(args.model)
    data = features.read_features(args.features)
    X, y = features.as_matrix(data)
    preds = lda.classify_many(model, X) if len(data) else np.zeros(0, dtype=np.int64)
    lines = ["index,label,predicted"]
    for i, (lab, pr) in enumerate(zip(y.tolist(), preds.tolist())):
        lines.append(f"{i},{'' if lab < 0 else lab},{pr}")
    _out(args, "predictions.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    labeled = y >= 0
    if labeled.any():
        cm = np.zeros((6, 6), dtype=np.int64)
        for a, p in zip(y[labeled], preds[labeled]):
            cm[a, p] += 1
        ev = pipeline.Evaluation(cm, tuple(range(6)))
        print(f"accuracy {ev.group_accuracy:.4f} over {int(labeled.sum())} labeled vectors")
        print(f"head-count accuracy {ev.head_count_accuracy:.4f}")
    else:
        print(f"classified {len(data)} vectors")
    return 0


def cmd_count(args) -> int:
    trace = read_trace(args.trace)
    model = lda.load_model(args.model, expect_p=len(features.FEATURE_NAMES))
    cfg = _detector_config(args)
    truth = synth.read_truth(args.truth) if args.truth else None
    period_ms = int(args.period_s * 1000) if args.period_s else None
    if args.pairs:
        pairs = [tuple(p.split(":")) for p in args.pairs.split(",")]
        zone = pipeline.run_zone(trace, model, pairs, cfg, truth, period_ms)
        reports = zone.pair_reports
        text = "".join(r.to_text() + "\n" for r in reports.values())
        text += f"Combined: {'-'.join(zone.combined)}\n"
        jsonl = "".join(r.to_jsonl() for r in reports.values())
        csv_text = zone.combined_report.to_csv()
    else:
        report = pipeline.run_count(trace, model, cfg, _receivers(args.receivers), truth, period_ms)
        text, jsonl, csv_text = report.to_text(), report.to_jsonl(), report.to_csv()
    _out(args, "count_report.txt").write_text(text, encoding="utf-8")
    _out(args, "count_report.jsonl").write_text(jsonl, encoding="utf-8")
    _out(args, "count_events.csv").write_text(csv_text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    trace = read_trace(args.trace)
    truth = synth.read_truth(args.truth)
    windows = [int(w) for w in args.windows.split(",")]
    res = detect.window_sweep(
        trace, truth, windows, args.method, args.prob_threshold, args.std_threshold, _receivers(args.receivers)
    )
    lines = ["window,error_rate,errors,scored,coverage"]
    for r in res.rows:
        lines.append(f"{r.window},{r.error_rate:.6f},{r.errors},{r.scored},{r.coverage:.4f}")
    text = "\n".join(lines) + "\n"
    _out(args, "sweep.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    print(f"best window: {res.best_window}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rssicount", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic trace")
    _common(p)
    p.add_argument("--scenario", help="event CSV: start_sample,group_size,delay_r2,duration_r1,duration_r2")
    p.add_argument("--groups", help="comma-separated group sizes laid out back to back")
    p.add_argument("--per-group", type=int, default=50, help="events per group size when no scenario/groups given")
    p.add_argument("--gap", type=int, default=60, help="quiet samples between laid-out events")
    p.add_argument("--n-samples", type=int, default=0)
    p.add_argument("--baseline", type=int, default=-60)
    p.add_argument("--quiet-sigma", type=float, default=0.5)
    p.add_argument("--active-sigma", type=float, default=4.0)
    p.add_argument("--sigma-per-person", type=float, default=1.0)
    p.add_argument("--duration-base", type=int, default=20)
    p.add_argument("--duration-per-person", type=int, default=8)
    p.add_argument("--interval-ms", type=int, default=150)
    p.add_argument("--loss-prob", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="per-receiver window stats, decisions and events")
    _common(p)
    p.add_argument("trace")
    p.add_argument("--receivers", help="comma-separated receiver ids (default all)")
    _detector_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("fuse", help="pair events from two receivers, dropping unconfirmed ones")
    _common(p)
    p.add_argument("events_a")
    p.add_argument("events_b")
    p.add_argument("--pairing-window", type=int, default=detect.DEFAULT_PAIRING_WINDOW)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("features", help="feature vectors from paired events")
    _common(p)
    p.add_argument("pairs")
    p.add_argument("--truth", help="ground-truth CSV used to label vectors")
    p.add_argument("--drop-unmatched", action="store_true", help="with --truth, drop vectors matching no crossing")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="fit discriminant functions on a feature CSV")
    _common(p)
    p.add_argument("features")
    p.add_argument("--model-name", default="model.lda")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="predict group sizes for a feature CSV")
    _common(p)
    p.add_argument("model")
    p.add_argument("features")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("count", help="end-to-end count from a trace and a model")
    _common(p)
    p.add_argument("trace")
    p.add_argument("model")
    p.add_argument("--receivers", help="receiver pair, e.g. R1,R2 (default first two)")
    p.add_argument("--pairs", help="several pairs of one zone, e.g. R1:R2,R3:R2")
    p.add_argument("--truth", help="ground-truth CSV for evaluation")
    p.add_argument("--period-s", type=float, default=None, help="report head counts per period of this length")
    _detector_flags(p, pairing=True)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("sweep", help="detection error rate per window size")
    _common(p)
    p.add_argument("trace")
    p.add_argument("truth")
    p.add_argument("--windows", default="2,4,6,8,10,12,15,20,25,30")
    p.add_argument("--receivers")
    p.add_argument("--method", choices=detect.METHODS, default="std")
    p.add_argument("--prob-threshold", type=float, default=detect.PROB_THRESHOLD)
    p.add_argument("--std-threshold", type=float, default=detect.STD_THRESHOLD)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RssiCountError, OSError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"rssicount {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackKind, PoisonPlan, PopInjectionParams, flip_labels, poison_corpus, write_attack_manifest
from .corpus import (
    Label,
    LabeledExample,
    SplitSpec,
    SynthParams,
    build_split,
    extract_corpus_features,
    generate_synthetic_corpus,
    parse_protocol,
    read_feature_csv,
    write_feature_csv,
    write_protocol,
)
from .errors import PopforgeError
from .evaluator import EvalReport, emit_report, evaluate, load_report
from .experiment import DATA_ROOT_ENV, PRESETS, ExperimentConfig, derive_seed, preset, run_experiment
from .learner import load_model, save_model, smote, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threshold(text: str):
    if text == "auto":
        return "auto"
    try:
        t = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("threshold must be a number in [0, 1] or 'auto'") from None
    if not 0.0 <= t <= 1.0:
        raise argparse.ArgumentTypeError("threshold must lie in [0, 1]")
    return t


def _fraction(text: str) -> float:
    f = float(text)
    if not 0.0 <= f <= 1.0:
        raise argparse.ArgumentTypeError("fraction must lie in [0, 1]")
    return f


def _gamma(text: str):
    return text if text == "1/d" else float(text)


def _base_config(args) -> ExperimentConfig:
    """Config from ``--preset`` and/or ``--config``; the file wins over the preset."""
    cfg = preset(args.preset) if getattr(args, "preset", None) else ExperimentConfig()
    if getattr(args, "config", None):
        overrides = json.loads(Path(args.config).read_text())
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth_corpus(args) -> int:
    corpus = generate_synthetic_corpus(args.out, args.n_real, args.n_spoof, args.seed,
                                       SynthParams(duration_s=args.duration), prefix=args.prefix)
    print(f"wrote {len(corpus.entries)} clips to {corpus.audio_root}")
    print(f"protocol: {corpus.protocol}")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _base_config(args)
    entries = parse_protocol(args.protocol)
    split = build_split(entries, SplitSpec(args.split, args.n, args.seed))
    feats = extract_corpus_features(args.audio_root, split, cfg.feature_params(), jobs=args.jobs or cfg.jobs)
    write_feature_csv(args.out, feats)
    print(f"{feats.X.shape[0]} feature rows, {len(feats.skipped)} clips skipped -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _base_config(args).with_overrides(
        seed=args.seed, smote_k=args.smote_k, folds=args.folds,
        C_values=args.C, gamma_values=args.gamma,
    )
    feats = read_feature_csv(args.features)
    X, y = feats.X, feats.y
    counts = np.bincount(y, minlength=2)
    if counts[0] != counts[1] and cfg.smote_k > 0:
        X, y = smote(X, y, k=cfg.smote_k, seed=derive_seed(cfg.seed, "smote"))
    model = train(X, y, cfg.grid())
    save_model(model, args.out)
    print(f"C={model.C:g} gamma={model.gamma:g} cv balanced accuracy {model.cv_score:.4f} -> {args.out}")
    return EXIT_OK


def cmd_attack(args) -> int:
    kind = AttackKind(args.kind.replace("-", "_"))
    entries = parse_protocol(args.protocol)
    target = None if args.target == "any" else Label[args.target.upper()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if kind == AttackKind.LABEL_FLIP:
        flipped, manifest = flip_labels([LabeledExample(s, l) for s, l in entries], args.fraction, args.seed, target)
        write_protocol(out / "protocol.txt", [(ex.source_id, ex.label) for ex in flipped])
        plan = PoisonPlan(kind, args.fraction, args.seed, target)
        write_attack_manifest(out / "attack_manifest.csv", manifest, plan)
        print(f"flipped {len(manifest)} labels -> {out / 'protocol.txt'}")
    else:
        plan = PoisonPlan(kind, args.fraction, args.seed, target, PopInjectionParams(args.amplitude, args.frequency))
        res = poison_corpus(args.audio_root, entries, plan, out)
        print(f"poisoned {len(res.poisoned_ids)} clips -> {res.audio_root}")
    return EXIT_OK


def _print_summary(report: EvalReport) -> None:
    r, c = report.rates, report.counts

    def pct(v):
        return "n/a" if v is None else f"{100 * v:6.2f}%"

    print(f"threshold {report.threshold:.2f}  (auto: {report.auto_threshold:.2f})")
    print(f"TP={c.tp} TN={c.tn} FP={c.fp} FN={c.fn}  skipped={report.skipped['count']} (scored SPOOF)")
    print(f"TPR {pct(r.tpr)}  TNR {pct(r.tnr)}  FPR {pct(r.fpr)}  FNR {pct(r.fnr)}")
    print(f"accuracy {pct(r.accuracy)}  ASR {pct(r.asr)}")


def cmd_eval(args) -> int:
    model = load_model(args.model)
    feats = read_feature_csv(args.features)
    probs = model.predict_proba(feats.X)
    absent = [int(lab) for _, lab, reason in feats.skipped if reason != "missing"]
    report = evaluate(feats.y, probs, args.threshold, absent_labels=absent)
    emit_report(report, args.out)
    _print_summary(report)
    return EXIT_OK


def cmd_run(args) -> int:
    if not args.preset and not args.config:
        raise UsageError("run needs --preset or --config")
    cfg = _base_config(args).with_overrides(
        seed=args.seed, threshold=args.threshold, jobs=args.jobs, data_root=args.data_root,
    )
    out = args.out or cfg.out_dir or f"runs/{cfg.name}"
    report = run_experiment(cfg, out)
    print(f"{cfg.name}: report written to {Path(out) / 'report.json'}")
    _print_summary(report)
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_report(args.report)
    if args.out:
        emit_report(report, args.out)
    _print_summary(report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="popforge", description="Pop-noise liveness detection and poisoning experiments.")
    p.add_argument("--version", action="version", version=f"popforge {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("synth-corpus", help="generate a synthetic REAL/SPOOF corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--n-real", type=int, default=20)
    s.add_argument("--n-spoof", type=int, default=80)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=2.0, help="clip length in seconds")
    s.add_argument("--prefix", default="SYN")
    s.set_defaults(func=cmd_synth_corpus)

    s = sub.add_parser("extract", help="extract per-clip features into a CSV cache")
    s.add_argument("--protocol", required=True)
    s.add_argument("--audio-root", required=True)
    s.add_argument("--out", required=True, help="feature CSV path")
    s.add_argument("--split", choices=["full", "even"], default="full")
    s.add_argument("--n", type=int, default=None, help="per-class count for --split even")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--config", help="JSON config supplying detector/filterbank parameters")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="SMOTE + grid-searched SVM + Platt scaling")
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True, help="model JSON path")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--smote-k", type=int, default=None, help="0 disables SMOTE")
    s.add_argument("--folds", type=int, default=None)
    s.add_argument("--C", type=float, nargs="+", default=None)
    s.add_argument("--gamma", type=_gamma, nargs="+", default=None, help="values or '1/d'")
    s.add_argument("--config", help="JSON config supplying grid parameters")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("attack", help="poison a training set")
    asub = s.add_subparsers(dest="kind", metavar="KIND", required=True)
    for name, default_target in (("label-flip", "any"), ("synthetic-pop", "spoof")):
        a = asub.add_parser(name)
        a.add_argument("--protocol", required=True)
        if name == "synthetic-pop":
            a.add_argument("--audio-root", required=True)
            a.add_argument("--amplitude", type=float, default=0.5)
            a.add_argument("--frequency", type=float, default=90.0)
        a.add_argument("--fraction", type=_fraction, default=0.2)
        a.add_argument("--seed", type=int, default=0)
        a.add_argument("--target", choices=["any", "real", "spoof"], default=default_target)
        a.add_argument("--out", required=True)
        a.set_defaults(func=cmd_attack)

    s = sub.add_parser("eval", help="score a feature CSV with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True, help="report directory")
    s.add_argument("--threshold", type=_threshold, default=0.5)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("run", help="run a full experiment")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--config", help="JSON experiment config (overrides the preset)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--data-root", default=None, help=f"ASVspoof 2019 LA root (fallback: ${DATA_ROOT_ENV})")
    s.add_argument("--threshold", type=_threshold, default=None)
    s.add_argument("--jobs", type=int, default=None)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="summarise a report.json and optionally re-render its files")
    s.add_argument("--report", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"popforge: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PopforgeError, OSError, ValueError, KeyError) as e:
        print(f"popforge: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Confusion metrics, threshold sweeps and report files.

SPOOF is the positive class: TPR is the share of spoofs rejected, FNR the
share of spoofs accepted as REAL (which is also the attack success rate).
A clip is predicted REAL when its probability is at or above the threshold.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyEval, LengthMismatch

REPORT_SCHEMA = "popforge-report/1"
HIST_BINS = 50
DEFAULT_GRID = tuple(round(0.01 * i, 2) for i in range(101))

REAL, SPOOF = 1, 0


@dataclass(frozen=True)
class Counts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class Rates:
    """None marks a rate whose denominator is zero."""

    tpr: float | None
    tnr: float | None
    fpr: float | None
    fnr: float | None
    accuracy: float
    asr: float | None

    @property
    def balanced_accuracy(self) -> float | None:
        vals = [v for v in (self.tpr, self.tnr) if v is not None]
        return sum(vals) / len(vals) if vals else None


def confusion(labels, probs, threshold: float, absent_labels=()) -> Counts:
    """Counts at ``threshold``.

    ``absent_labels`` are the true labels of clips that produced no features;
    they are always predicted SPOOF.
    """
    labels = np.asarray(labels).astype(np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    if labels.shape != probs.shape:
        raise LengthMismatch(f"{labels.size} labels vs {probs.size} probabilities")
    pred_real = probs >= threshold
    is_real = labels == REAL
    absent = np.asarray(absent_labels).astype(np.int64)
    return Counts(
        tp=int(np.sum(~is_real & ~pred_real) + np.sum(absent == SPOOF)),
        tn=int(np.sum(is_real & pred_real)),
        fp=int(np.sum(is_real & ~pred_real) + np.sum(absent == REAL)),
        fn=int(np.sum(~is_real & pred_real)),
    )


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def metrics(counts: Counts) -> Rates:
    if counts.total == 0:
        raise EmptyEval("no examples to score")
    fnr = _ratio(counts.fn, counts.tp + counts.fn)
    return Rates(
        tpr=_ratio(counts.tp, counts.tp + counts.fn),
        tnr=_ratio(counts.tn, counts.tn + counts.fp),
        fpr=_ratio(counts.fp, counts.tn + counts.fp),
        fnr=fnr,
        accuracy=(counts.tp + counts.tn) / counts.total,
        asr=fnr,
    )


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    counts: Counts
    rates: Rates


def threshold_sweep(labels, probs, grid=DEFAULT_GRID, absent_labels=()) -> tuple[list[SweepRow], float]:
    """Rates at every grid threshold and the one with the best balanced accuracy.

    Ties go to the lowest threshold.
    """
    grid = [float(t) for t in grid]
    if not grid:
        raise ValueError("threshold grid is empty")
    rows = []
    best_t, best_ba = None, -np.inf
    for t in sorted(grid):
        c = confusion(labels, probs, t, absent_labels)
        r = metrics(c)
        rows.append(SweepRow(t, c, r))
        ba = r.balanced_accuracy if r.balanced_accuracy is not None else -np.inf
        if ba > best_ba:
            best_t, best_ba = t, ba
    return rows, best_t


def histogram(probs, bins: int = HIST_BINS) -> np.ndarray:
    counts, _ = np.histogram(np.asarray(probs, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    return counts


@dataclass
class EvalReport:
    counts: Counts
    rates: Rates
    threshold: float
    auto_threshold: float
    auto_counts: Counts
    auto_rates: Rates
    sweep: list
    hist_real: list
    hist_spoof: list
    n_eval: int
    skipped: dict
    meta: dict = field(default_factory=dict)
    schema: str = REPORT_SCHEMA

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep"] = [
            {"threshold": r.threshold, "counts": asdict(r.counts), "rates": asdict(r.rates)} for r in self.sweep
        ]
        d["bin_edges"] = np.linspace(0.0, 1.0, len(self.hist_real) + 1).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d.pop("bin_edges", None)
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        for key in ("counts", "auto_counts"):
            d[key] = Counts(**d[key])
        for key in ("rates", "auto_rates"):
            d[key] = Rates(**d[key])
        d["sweep"] = [SweepRow(r["threshold"], Counts(**r["counts"]), Rates(**r["rates"])) for r in d["sweep"]]
        return cls(**d)


def evaluate(labels, probs, threshold="auto", absent_labels=(), grid=DEFAULT_GRID, bins: int = HIST_BINS, meta=None) -> EvalReport:
    """Score probabilities at a fixed threshold (or ``"auto"``) and build the report.

    The balanced-accuracy-optimal grid threshold is always reported alongside.
    """
    labels = np.asarray(labels).astype(np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    absent = np.asarray(absent_labels).astype(np.int64)
    sweep, auto_t = threshold_sweep(labels, probs, grid, absent)
    t = auto_t if threshold == "auto" else float(threshold)
    counts = confusion(labels, probs, t, absent)
    auto_counts = confusion(labels, probs, auto_t, absent)
    return EvalReport(
        counts=counts,
        rates=metrics(counts),
        threshold=t,
        auto_threshold=auto_t,
        auto_counts=auto_counts,
        auto_rates=metrics(auto_counts),
        sweep=sweep,
        hist_real=histogram(probs[labels == REAL], bins).tolist(),
        hist_spoof=histogram(probs[labels == SPOOF], bins).tolist(),
        n_eval=int(labels.size + absent.size),
        skipped={
            "count": int(absent.size),
            "real": int(np.sum(absent == REAL)),
            "spoof": int(np.sum(absent == SPOOF)),
            "forced_class": "spoof",
        },
        meta=dict(meta or {}),
    )


def _fmt(v) -> str:
    return "" if v is None else repr(v)


def emit_report(report: EvalReport, out_dir) -> dict[str, Path]:
    """Write report.json, sweep.csv, hist_real.csv, hist_spoof.csv and hist.svg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["report"] = out / "report.json"
    paths["report"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")

    paths["sweep"] = out / "sweep.csv"
    with paths["sweep"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "tp", "tn", "fp", "fn", "tpr", "tnr", "fpr", "fnr", "accuracy", "balanced_accuracy"])
        for r in report.sweep:
            c, m = r.counts, r.rates
            w.writerow([repr(r.threshold), c.tp, c.tn, c.fp, c.fn, _fmt(m.tpr), _fmt(m.tnr), _fmt(m.fpr),
                        _fmt(m.fnr), repr(m.accuracy), _fmt(m.balanced_accuracy)])

    edges = np.linspace(0.0, 1.0, len(report.hist_real) + 1)
    for name, counts in (("hist_real", report.hist_real), ("hist_spoof", report.hist_spoof)):
        paths[name] = out / f"{name}.csv"
        with paths[name].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])

    paths["svg"] = render_histogram_svg(report, out / "hist.svg")
    return paths


def render_histogram_svg(report: EvalReport, path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "popforge"
    edges = np.linspace(0.0, 1.0, len(report.hist_real) + 1)
    centers = (edges[:-1] + edges[1:]) / 2
    width = edges[1] - edges[0]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(centers, report.hist_real, width=width, alpha=0.6, label="real", color="tab:green")
    ax.bar(centers, report.hist_spoof, width=width, alpha=0.6, label="spoof", color="tab:red")
    ax.axvline(report.threshold, color="k", linestyle="--", label=f"threshold {report.threshold:.2f}")
    ax.set_xlabel("P(real)")
    ax.set_ylabel("clips")
    ax.set_xlim(0, 1)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))

"""Experiment configuration, presets and the end-to-end pipeline.

A run goes: (optional poisoning) -> training features -> SMOTE -> SVM ->
evaluation features -> scoring -> report.  Everything lands in one output
directory, and every random choice draws from a sub-seed derived from the
master seed and the stage name.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AttackKind, PoisonPlan, PopInjectionParams, flip_labels, poison_corpus
from .corpus import (
    FeatureParams,
    Label,
    LabeledExample,
    SplitSpec,
    SynthParams,
    build_split,
    extract_corpus_features,
    generate_synthetic_corpus,
    parse_protocol,
    write_feature_csv,
    write_manifest,
)
from .errors import PopforgeError, StageError
from .evaluator import EvalReport, emit_report, evaluate
from .learner import GridSpec, save_model, smote, train
from .pop_detect import PopDetectParams

logger = logging.getLogger(__name__)

DATA_ROOT_ENV = "POPFORGE_DATA_ROOT"

ASVSPOOF_LAYOUT = {
    "train_audio": "ASVspoof2019_LA_train/flac",
    "eval_audio": "ASVspoof2019_LA_eval/flac",
    "train_protocol": "ASVspoof2019_LA_cm_protocols/ASVspoof2019.LA.cm.train.trn.txt",
    "eval_protocol": "ASVspoof2019_LA_cm_protocols/ASVspoof2019.LA.cm.eval.trl.txt",
}


def derive_seed(master: int, stage: str) -> int:
    """63-bit sub-seed from ``sha256("<master>/<stage>")``."""
    digest = hashlib.sha256(f"{int(master)}/{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class ExperimentConfig:
    """Flat experiment description; round-trips through JSON unchanged."""

    name: str = "custom"
    dataset: str = "synthetic"  # "synthetic" | "asvspoof"
    data_root: str | None = None
    train_audio: str | None = None
    eval_audio: str | None = None
    train_protocol: str | None = None
    eval_protocol: str | None = None
    synth_train_real: int = 200
    synth_train_spoof: int = 800
    synth_eval_real: int = 100
    synth_eval_spoof: int = 400
    synth_duration_s: float = 2.0
    split_mode: str = "even"
    split_n: int | None = None
    attack: str | None = None  # "label_flip" | "synthetic_pop"
    attack_fraction: float = 0.2
    attack_target: str | None = None  # "real" | "spoof" | "any"; None picks the attack's default
    pop_amplitude: float = 0.5
    pop_frequency_hz: float = 90.0
    frame_len: int = 1024
    hop: int = 256
    cutoff_hz: float = 100.0
    z_threshold: float = 2.0
    merge_gap_frames: int = 4
    min_len_frames: int = 2
    n_channels: int = 32
    f_lo: float = 50.0
    f_hi: float = 8000.0
    flank_ms: float = 50.0
    extended_features: bool = False
    C_values: list = field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])
    gamma_values: list = field(default_factory=lambda: [0.01, 0.1, "1/d", 1.0])
    folds: int = 5
    smote_k: int = 5
    threshold: str | float = 0.5  # a number, or "auto"
    seed: int = 0
    jobs: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.dataset not in ("synthetic", "asvspoof"):
            raise ValueError(f"dataset must be 'synthetic' or 'asvspoof', got {self.dataset!r}")
        if self.attack is not None:
            AttackKind(self.attack)
        if self.threshold != "auto":
            self.threshold = float(self.threshold)
            if not 0.0 <= self.threshold <= 1.0:
                raise ValueError("threshold must lie in [0, 1]")
        SplitSpec(self.split_mode, self.split_n)

    # -- derived parameter objects ---------------------------------------
    def pop_params(self) -> PopDetectParams:
        return PopDetectParams(self.frame_len, self.hop, self.cutoff_hz, self.z_threshold,
                               self.merge_gap_frames, self.min_len_frames)

    def feature_params(self) -> FeatureParams:
        return FeatureParams(self.pop_params(), self.n_channels, self.f_lo, self.f_hi,
                             self.flank_ms, self.extended_features)

    def grid(self) -> GridSpec:
        return GridSpec(tuple(self.C_values), tuple(self.gamma_values), self.folds, derive_seed(self.seed, "cv"))

    def poison_plan(self) -> PoisonPlan | None:
        if self.attack is None:
            return None
        kind = AttackKind(self.attack)
        target = self.attack_target or ("any" if kind == AttackKind.LABEL_FLIP else "spoof")
        return PoisonPlan(
            kind=kind,
            fraction=self.attack_fraction,
            seed=derive_seed(self.seed, "attack"),
            target_class=None if target == "any" else Label[target.upper()],
            injection=PopInjectionParams(self.pop_amplitude, self.pop_frequency_hz),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return ExperimentConfig.from_dict({**self.to_dict(), **kw})


def _asv(name, **kw) -> ExperimentConfig:
    return ExperimentConfig(name=name, dataset="asvspoof", **kw)


def _syn(name, **kw) -> ExperimentConfig:
    return ExperimentConfig(name=name, dataset="synthetic", **kw)


# ASVspoof presets score at the thresholds chosen for each reference experiment;
# the synthetic twins all score at 0.5 so they compare directly.
PRESETS: dict[str, ExperimentConfig] = {
    "full": _asv("full", split_mode="full", threshold=0.61),
    "even-train": _asv("even-train", split_mode="even", split_n=2580, threshold=0.5),
    "flip-20": _asv("flip-20", split_mode="even", split_n=2580, attack="label_flip", threshold=0.48),
    "synthpop-20": _asv("synthpop-20", split_mode="even", split_n=2580, attack="synthetic_pop", threshold=0.5),
    "full-synthetic": _syn("full-synthetic", split_mode="full"),
    "even-train-synthetic": _syn("even-train-synthetic", split_mode="even"),
    "flip-20-synthetic": _syn("flip-20-synthetic", split_mode="even", attack="label_flip"),
    "synthpop-20-synthetic": _syn("synthpop-20-synthetic", split_mode="even", attack="synthetic_pop"),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.from_dict(PRESETS[name].to_dict())
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class _Data:
    train_audio: Path
    eval_audio: Path
    train_entries: list
    eval_entries: list


class _stage:
    """Context manager tagging any error with the pipeline stage it came from."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, (PopforgeError, OSError, ValueError)):
            raise StageError(self.name, exc) from exc
        return False


def _resolve_asvspoof(cfg: ExperimentConfig) -> dict:
    root = cfg.data_root or os.environ.get(DATA_ROOT_ENV)
    paths = {}
    for key, rel in ASVSPOOF_LAYOUT.items():
        explicit = getattr(cfg, key)
        if explicit:
            paths[key] = Path(explicit)
        elif root:
            paths[key] = Path(root) / rel
        else:
            raise PopforgeError(f"no dataset root: pass --data-root or set {DATA_ROOT_ENV}")
    for key, p in paths.items():
        if not p.exists():
            raise FileNotFoundError(f"{key}: {p} does not exist")
    return paths


def _load_data(cfg: ExperimentConfig, out: Path) -> _Data:
    if cfg.dataset == "asvspoof":
        p = _resolve_asvspoof(cfg)
        return _Data(p["train_audio"], p["eval_audio"], parse_protocol(p["train_protocol"]),
                     parse_protocol(p["eval_protocol"]))
    synth = SynthParams(duration_s=cfg.synth_duration_s)
    pop = cfg.pop_params()
    tr = generate_synthetic_corpus(out / "corpus" / "train", cfg.synth_train_real, cfg.synth_train_spoof,
                                   derive_seed(cfg.seed, "corpus-train"), synth, prefix="TRN", pop_params=pop)
    ev = generate_synthetic_corpus(out / "corpus" / "eval", cfg.synth_eval_real, cfg.synth_eval_spoof,
                                   derive_seed(cfg.seed, "corpus-eval"), synth, prefix="EVL", pop_params=pop)
    return _Data(tr.audio_root, ev.audio_root, parse_protocol(tr.protocol), parse_protocol(ev.protocol))


def _class_means(X, y) -> dict:
    return {
        name: (X[y == lab].mean(axis=0).tolist() if np.any(y == lab) else None)
        for name, lab in (("real", 1), ("spoof", 0))
    }


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> EvalReport:
    """Run the whole pipeline and write every artefact under the output directory."""
    out = Path(out_dir or cfg.out_dir or f"runs/{cfg.name}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    fparams = cfg.feature_params()

    with _stage("data"):
        data = _load_data(cfg, out)

    with _stage("split"):
        split = build_split(data.train_entries, SplitSpec(cfg.split_mode, cfg.split_n, derive_seed(cfg.seed, "split")))

    plan = cfg.poison_plan()
    train_audio, poisoned = data.train_audio, []
    with _stage("attack"):
        if plan is not None and plan.kind == AttackKind.LABEL_FLIP:
            examples = [LabeledExample(sid, lab) for sid, lab in split]
            flipped, poisoned = flip_labels(examples, plan.fraction, plan.seed, plan.target_class)
            split = [(ex.source_id, ex.label) for ex in flipped]
        elif plan is not None:
            res = poison_corpus(data.train_audio, split, plan, out / "poisoned")
            train_audio, poisoned = res.audio_root, list(res.poisoned_ids)
        write_manifest(out / "manifest.csv", split, poisoned)

    with _stage("extract-train"):
        tr = extract_corpus_features(train_audio, split, fparams, jobs=cfg.jobs)
        write_feature_csv(out / "features_train.csv", tr)

    with _stage("smote"):
        counts = np.bincount(tr.y, minlength=2)
        if counts[0] != counts[1]:
            X_fit, y_fit = smote(tr.X, tr.y, k=cfg.smote_k, seed=derive_seed(cfg.seed, "smote"))
        else:
            X_fit, y_fit = tr.X, tr.y

    with _stage("train"):
        model = train(X_fit, y_fit, cfg.grid())
        save_model(model, out / "model.json")

    with _stage("extract-eval"):
        ev = extract_corpus_features(data.eval_audio, data.eval_entries, fparams, jobs=cfg.jobs)
        write_feature_csv(out / "features_eval.csv", ev)

    with _stage("score"):
        probs = model.predict_proba(ev.X)
        absent = [int(lab) for _, lab, reason in ev.skipped if reason != "missing"]
        missing = sum(1 for *_, reason in ev.skipped if reason == "missing")
        poisoned_set = set(poisoned)
        meta = {
            "experiment": cfg.name,
            "dataset": cfg.dataset,
            "seed": cfg.seed,
            "threshold_mode": "auto" if cfg.threshold == "auto" else "fixed",
            "attack": cfg.attack,
            "attack_fraction": cfg.attack_fraction if cfg.attack else None,
            "n_poisoned": len(poisoned),
            "n_poisoned_with_features": sum(1 for sid in tr.ids if sid in poisoned_set),
            "train_split": {"real": sum(1 for _, l in split if l == Label.REAL),
                            "spoof": sum(1 for _, l in split if l == Label.SPOOF)},
            "train_rows": {"real": int(np.sum(tr.y == 1)), "spoof": int(np.sum(tr.y == 0))},
            "train_rows_after_smote": {"real": int(np.sum(y_fit == 1)), "spoof": int(np.sum(y_fit == 0))},
            "train_skipped": len(tr.skipped),
            "eval_missing": missing,
            "model": {"C": model.C, "gamma": model.gamma, "cv_balanced_accuracy": model.cv_score,
                      "n_support": int(model.support_vectors.shape[0]),
                      "platt": [model.platt_a, model.platt_b]},
            "feature_means_train": _class_means(tr.X, tr.y),
            "feature_means_eval": _class_means(ev.X, ev.y),
        }
        report = evaluate(ev.y, probs, cfg.threshold, absent_labels=absent, meta=meta)

    with _stage("report"):
        emit_report(report, out)
    return report

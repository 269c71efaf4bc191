"""popforge: pop-noise liveness detection and training-set poisoning attacks on it.

Pipeline pieces, bottom-up::

    audio_io    -> AudioClip, load_audio, resample
    pop_detect  -> lowband_energy, detect_pops
    gfcc        -> make_bank, extract_features
    corpus      -> parse_protocol, build_split, extract_corpus_features, synthetic corpora
    learner     -> smote, train, predict_proba
    attacks     -> flip_labels, synthesize_pop, poison_corpus
    evaluator   -> confusion, metrics, evaluate, emit_report
    experiment  -> ExperimentConfig, presets, run_experiment
"""

from .attacks import AttackKind, PoisonPlan, PopInjectionParams, flip_labels, poison_corpus, synthesize_pop
from .audio_io import AudioClip, load_audio, resample, save_wav
from .corpus import (
    FeatureParams,
    Label,
    LabeledExample,
    SplitSpec,
    build_split,
    clip_features,
    extract_corpus_features,
    generate_synthetic_corpus,
    parse_protocol,
)
from .evaluator import EvalReport, confusion, emit_report, evaluate, metrics, threshold_sweep
from .experiment import PRESETS, ExperimentConfig, derive_seed, preset, run_experiment
from .gfcc import FeatureVector, GammatoneBank, extract_features, make_bank, segment_log_energies
from .learner import GridSpec, TrainedDetector, load_model, predict_proba, save_model, smote, train
from .pop_detect import PopDetectParams, PopSegment, detect_pops, find_pops, lowband_energy

__version__ = "0.1.0"

"""Protocol parsing, split construction, corpus-wide feature extraction and
the synthetic desk-scale corpus."""

from __future__ import annotations

import csv
import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import butter, sosfilt

from .audio_io import CANONICAL_SR, AudioClip, load_audio, resample, resolve_audio_path, save_wav
from .errors import (
    EmptyCorpus,
    InsufficientClassCount,
    MalformedLine,
    PopforgeError,
    UnknownLabelToken,
)
from .gfcc import FeatureVector, extract_features, make_bank
from .pop_detect import PopDetectParams, find_pops

logger = logging.getLogger(__name__)


class Label(enum.IntEnum):
    SPOOF = 0
    REAL = 1

    def flipped(self) -> "Label":
        return Label(1 - self)


@dataclass(frozen=True)
class LabeledExample:
    source_id: str
    label: Label
    features: FeatureVector | None = None


@dataclass(frozen=True)
class ProtocolSchema:
    """Column layout of a whitespace-separated protocol file (0-based columns)."""

    id_col: int = 1
    label_col: int = 4
    real_token: str = "bonafide"
    spoof_token: str = "spoof"
    n_cols: int = 5


ASVSPOOF_LA = ProtocolSchema()


def parse_protocol(path, schema: ProtocolSchema = ASVSPOOF_LA) -> list[tuple[str, Label]]:
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            cols = line.split()
            if not cols:
                continue
            if len(cols) != schema.n_cols:
                raise MalformedLine(path, lineno, line.rstrip("\n"))
            token = cols[schema.label_col]
            if token == schema.real_token:
                label = Label.REAL
            elif token == schema.spoof_token:
                label = Label.SPOOF
            else:
                raise UnknownLabelToken(f"{path}:{lineno}: label token {token!r}")
            entries.append((cols[schema.id_col], label))
    return entries


def write_protocol(path, entries: Iterable[tuple[str, Label]], speaker: str = "SYN") -> Path:
    """Write entries in the ASVspoof LA layout: ``speaker id - - bonafide|spoof``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for sid, label in entries:
            token = ASVSPOOF_LA.real_token if label == Label.REAL else ASVSPOOF_LA.spoof_token
            fh.write(f"{speaker} {sid} - - {token}\n")
    return path


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "full"  # "full" | "even"
    n: int | None = None  # per class for "even"; None takes the smaller class size
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("full", "even"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.n is not None and self.n < 1:
            raise ValueError("n must be positive")


def build_split(entries: Sequence[tuple[str, Label]], spec: SplitSpec) -> list[tuple[str, Label]]:
    """Seeded shuffle (``full``) or balanced subsample then shuffle (``even``).

    Entries are sorted by source id first so the result does not depend on the
    order the caller enumerated them in.
    """
    ids = [sid for sid, _ in entries]
    if len(set(ids)) != len(ids):
        raise PopforgeError("duplicate source ids in split entries")
    ordered = sorted(entries, key=lambda e: e[0])
    rng = np.random.default_rng(spec.seed)
    if spec.mode == "full":
        return [ordered[i] for i in rng.permutation(len(ordered))]

    real = [e for e in ordered if e[1] == Label.REAL]
    spoof = [e for e in ordered if e[1] == Label.SPOOF]
    n = spec.n if spec.n is not None else min(len(real), len(spoof))
    if n > len(real) or n > len(spoof) or n == 0:
        raise InsufficientClassCount(f"even({n}) needs {n} per class; have {len(real)} real, {len(spoof)} spoof")
    picked = [real[i] for i in np.sort(rng.choice(len(real), n, replace=False))]
    picked += [spoof[i] for i in np.sort(rng.choice(len(spoof), n, replace=False))]
    return [picked[i] for i in rng.permutation(len(picked))]


# ---------------------------------------------------------------------------
# feature extraction over a split
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureParams:
    pop: PopDetectParams = field(default_factory=PopDetectParams)
    n_channels: int = 32
    f_lo: float = 50.0
    f_hi: float = 8000.0
    flank_ms: float = 50.0
    extended: bool = False
    sample_rate: int = CANONICAL_SR

    @property
    def n_features(self) -> int:
        return 3 + (self.n_channels if self.extended else 0)


def clip_features(clip: AudioClip, params: FeatureParams = FeatureParams()) -> FeatureVector | None:
    """Pop detection followed by gammatone features for one clip."""
    clip = resample(clip, params.sample_rate)
    if len(clip) < params.pop.frame_len:
        return None
    pops = find_pops(clip, params.pop)
    if not pops:
        return None
    bank = make_bank(params.sample_rate, params.n_channels, params.f_lo, params.f_hi)
    return extract_features(clip, pops, bank, params.flank_ms, params.pop, params.extended)


def _file_features(job):
    path, params = job
    if path is None:
        return "missing", None
    try:
        fv = clip_features(load_audio(path), params)
    except PopforgeError as exc:
        logger.warning("skipping %s: %s", path, exc)
        return "unreadable", None
    return ("ok", fv) if fv is not None else ("no_pops", None)


@dataclass
class CorpusFeatures:
    X: np.ndarray
    y: np.ndarray
    ids: list[str]
    skipped: list[tuple[str, Label, str]]  # (source_id, label, reason)


def extract_corpus_features(
    audio_root, split: Sequence[tuple[str, Label]], params: FeatureParams = FeatureParams(), jobs: int = 1
) -> CorpusFeatures:
    """Feature rows for every split entry whose file exists and has pops.

    Rows keep split order.  Raises :class:`EmptyCorpus` when nothing survives.
    """
    root = Path(audio_root)
    if not root.is_dir():
        raise FileNotFoundError(f"audio root {root} does not exist")
    jobs_in = [(resolve_audio_path(root, sid), params) for sid, _ in split]
    if jobs > 1 and len(jobs_in) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_file_features, jobs_in, chunksize=16))
    else:
        results = [_file_features(j) for j in jobs_in]

    rows, labels, ids, skipped = [], [], [], []
    for (sid, label), (status, fv) in zip(split, results):
        if status == "ok":
            rows.append(fv.as_array())
            labels.append(int(label))
            ids.append(sid)
        else:
            skipped.append((sid, Label(label), status))
    if not rows:
        raise EmptyCorpus(skipped)
    return CorpusFeatures(np.vstack(rows), np.asarray(labels, dtype=np.int64), ids, skipped)


def write_feature_csv(path, feats: CorpusFeatures, n_channels: int = 0) -> Path:
    """Feature cache plus a ``skipped.txt`` sidecar in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    extra = feats.X.shape[1] - 3
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_id", "label"] + FeatureVector.names(extra))
        for sid, lab, row in zip(feats.ids, feats.y, feats.X):
            w.writerow([sid, Label(lab).name.lower()] + [repr(float(v)) for v in row])
    with skipped_path(path).open("w") as fh:
        for sid, lab, reason in feats.skipped:
            fh.write(f"{sid} {Label(lab).name.lower()} {reason}\n")
    return path


def skipped_path(feature_csv) -> Path:
    p = Path(feature_csv)
    return p.with_name("skipped.txt") if p.name == "features.csv" else p.with_name(p.stem + ".skipped.txt")


def read_feature_csv(path) -> CorpusFeatures:
    path = Path(path)
    ids, labels, rows = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:5] != ["source_id", "label", "gfcc_mean", "delta1", "delta2"]:
            raise PopforgeError(f"{path}: unexpected feature header {header}")
        for rec in reader:
            ids.append(rec[0])
            labels.append(int(Label[rec[1].upper()]))
            rows.append([float(v) for v in rec[2:]])
    skipped = []
    sp = skipped_path(path)
    if sp.is_file():
        for line in sp.read_text().splitlines():
            if line.strip():
                sid, lab, reason = line.split()
                skipped.append((sid, Label[lab.upper()], reason))
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header) - 2)
    return CorpusFeatures(X, np.asarray(labels, dtype=np.int64), ids, skipped)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthParams:
    duration_s: float = 2.0
    sample_rate: int = CANONICAL_SR
    floor_dbfs: float = -30.0
    n_pops: tuple[int, int] = (2, 4)
    pop_hz: tuple[float, float] = (40.0, 90.0)
    pop_peak: tuple[float, float] = (0.25, 0.5)
    pop_attack_ms: tuple[float, float] = (1.0, 4.0)
    pop_decay_ms: tuple[float, float] = (15.0, 30.0)
    vowel_dbfs: float = -24.0
    replay_highpass_hz: float = 150.0
    replay_lowpass_hz: float = 4000.0
    max_redraws: int = 20


@dataclass(frozen=True)
class SyntheticCorpus:
    root: Path
    audio_root: Path
    protocol: Path
    manifest: Path
    entries: tuple[tuple[str, Label], ...]


def colored_noise(rng: np.random.Generator, n: int, exponent: float = 1.0) -> np.ndarray:
    """Unit-RMS noise with power spectrum proportional to 1/f**exponent."""
    spec = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    f = np.fft.rfftfreq(n)
    f[0] = f[1]
    x = np.fft.irfft(spec / f ** (exponent / 2), n)
    return x / np.sqrt(np.mean(x**2))


def _db(dbfs: float) -> float:
    return 10.0 ** (dbfs / 20.0)


def _pop_burst(rng, p: SynthParams) -> np.ndarray:
    """Low-frequency burst: fast linear attack, exponential decay."""
    sr = p.sample_rate
    attack = rng.uniform(*p.pop_attack_ms) / 1000.0
    decay = rng.uniform(*p.pop_decay_ms) / 1000.0
    n = int((attack + 5 * decay) * sr)
    t = np.arange(n) / sr
    env = np.where(t < attack, t / attack, np.exp(-(t - attack) / decay))
    f = rng.uniform(*p.pop_hz)
    return rng.uniform(*p.pop_peak) * env * np.sin(2 * np.pi * f * t)


def _vowel(rng, n: int, p: SynthParams) -> np.ndarray:
    """Harmonic complex (f0 130-220 Hz) under a raised-cosine syllable envelope."""
    t = np.arange(n) / p.sample_rate
    f0 = rng.uniform(130.0, 220.0)
    k = np.arange(2, int(3000 / f0) + 1)  # start at 2*f0: keep the fundamental out of the pop band
    amps = 1.0 / k
    tone = np.sin(2 * np.pi * f0 * np.outer(t, k) + rng.uniform(0, 2 * np.pi, k.size)) @ amps
    env = np.sin(np.pi * np.arange(n) / n) ** 2
    x = tone * env
    return x / np.sqrt(np.mean(x**2) + 1e-20) * _db(p.vowel_dbfs)


def _utterance(rng, p: SynthParams) -> np.ndarray:
    """Dry utterance: plosive bursts, each followed by a vowel.  No noise bed."""
    n = int(p.duration_s * p.sample_rate)
    x = np.zeros(n)
    n_pops = int(rng.integers(p.n_pops[0], p.n_pops[1] + 1))
    slot = n // n_pops
    for k in range(n_pops):
        burst = _pop_burst(rng, p)
        vowel_len = int(rng.uniform(0.15, 0.25) * p.sample_rate)
        margin = int(0.1 * p.sample_rate)
        span = slot - burst.size - margin
        start = k * slot + margin // 2 + int(rng.integers(0, max(1, span)))
        end = min(n, start + burst.size)
        x[start:end] += burst[: end - start]
        v_start = start + int(0.01 * p.sample_rate)
        v_end = min(n, v_start + vowel_len)
        x[v_start:v_end] += _vowel(rng, v_end - v_start, p)
    return x


def _replay_channel(x: np.ndarray, p: SynthParams) -> np.ndarray:
    """Loudspeaker playback: high-pass below the pop band, soften transients."""
    hp = butter(2, p.replay_highpass_hz, "highpass", fs=p.sample_rate, output="sos")
    lp = butter(2, p.replay_lowpass_hz, "lowpass", fs=p.sample_rate, output="sos")
    return sosfilt(lp, sosfilt(hp, x))


def synth_clip(rng: np.random.Generator, label: Label, p: SynthParams = SynthParams(), source_id: str = "") -> AudioClip:
    """One synthetic clip.  SPOOF runs the utterance through the replay channel
    before the recording noise bed is added."""
    n = int(p.duration_s * p.sample_rate)
    x = _utterance(rng, p)
    if label == Label.SPOOF:
        x = _replay_channel(x, p)
    x = x + _db(p.floor_dbfs) * colored_noise(rng, n)
    peak = np.max(np.abs(x))
    if peak > 0.99:
        x *= 0.99 / peak
    return AudioClip(x, p.sample_rate, source_id)


def generate_synthetic_corpus(
    out_dir,
    n_real: int,
    n_spoof: int,
    seed: int,
    params: SynthParams = SynthParams(),
    prefix: str = "SYN",
    pop_params: PopDetectParams = PopDetectParams(),
) -> SyntheticCorpus:
    """Write ``n_real + n_spoof`` WAV clips, a protocol file and a manifest.

    Layout: ``out_dir/wav/<id>.wav``, ``out_dir/protocol.txt``,
    ``out_dir/manifest.csv``.  A REAL draw in which the detector finds no pop
    is redrawn.
    """
    if n_real < 1 or n_spoof < 1:
        raise ValueError("n_real and n_spoof must be at least 1")
    out = Path(out_dir)
    wav_dir = out / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)

    labels = [Label.REAL] * n_real + [Label.SPOOF] * n_spoof
    order = np.random.default_rng([seed, 1]).permutation(len(labels))
    children = np.random.SeedSequence(seed).spawn(len(labels))
    entries = []
    for idx, pos in enumerate(order):
        label = labels[pos]
        sid = f"{prefix}_{idx:06d}"
        rng = np.random.default_rng(children[idx])
        for _ in range(params.max_redraws):
            clip = synth_clip(rng, label, params, sid)
            if label == Label.SPOOF or find_pops(clip, pop_params):
                break
        else:
            raise PopforgeError(f"{sid}: no detectable pop after {params.max_redraws} draws")
        save_wav(clip, wav_dir / f"{sid}.wav")
        entries.append((sid, label))

    protocol = write_protocol(out / "protocol.txt", entries)
    manifest = write_manifest(out / "manifest.csv", entries)
    return SyntheticCorpus(out, wav_dir, protocol, manifest, tuple(entries))


def write_manifest(path, entries: Iterable[tuple[str, Label]], poisoned: Iterable[str] = ()) -> Path:
    """Corpus manifest ``source_id,label,poisoned``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    poisoned = set(poisoned)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_id", "label", "poisoned"])
        for sid, label in entries:
            w.writerow([sid, Label(label).name.lower(), str(sid in poisoned).lower()])
    return path

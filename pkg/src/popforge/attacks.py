"""Training-set poisoning: random label flipping and SyntheticPop injection.

SyntheticPop adds a low-frequency sine over the whole clip and peak-normalises
the sum, so spoofed audio carries pop-band energy.  It is a clean-label
attack: labels are untouched, only waveforms of the target class change.
"""

from __future__ import annotations

import csv
import enum
import math
import os
import shutil
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import soundfile as sf

from .audio_io import AudioClip, load_audio, resolve_audio_path
from .corpus import Label, LabeledExample
from .errors import PopforgeError


class AttackKind(str, enum.Enum):
    LABEL_FLIP = "label_flip"
    SYNTHETIC_POP = "synthetic_pop"


class DegenerateSumWarning(UserWarning):
    """a + P was identically zero; the clip was returned unchanged."""


@dataclass(frozen=True)
class PopInjectionParams:
    amplitude: float = 0.5
    frequency_hz: float = 90.0

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.frequency_hz <= 0:
            raise ValueError("frequency_hz must be positive")

    def describe(self) -> str:
        return f"A={self.amplitude:g};f={self.frequency_hz:g}"


@dataclass(frozen=True)
class PoisonPlan:
    kind: AttackKind
    fraction: float
    seed: int
    target_class: Label | None = Label.SPOOF  # None: draw from every class
    injection: PopInjectionParams = PopInjectionParams()

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        object.__setattr__(self, "kind", AttackKind(self.kind))


def n_poisoned(fraction: float, population: int) -> int:
    # tolerate 0.2 * 5160 = 1031.9999... style rounding
    return int(math.floor(fraction * population + 1e-9))


def choose_targets(ids: Sequence[str], fraction: float, seed: int) -> list[str]:
    """``floor(fraction * len(ids))`` ids drawn without replacement, in input order."""
    k = n_poisoned(fraction, len(ids))
    picked = np.sort(np.random.default_rng(seed).choice(len(ids), k, replace=False))
    return [ids[i] for i in picked]


# ---------------------------------------------------------------------------
# label flipping
# ---------------------------------------------------------------------------


def flip_labels(
    split: Sequence[LabeledExample], fraction: float, seed: int, target_class: Label | None = None
) -> tuple[list[LabeledExample], list[str]]:
    """Negate the labels of a random ``fraction`` of the split.

    By default the draw covers the whole split; ``target_class`` restricts it
    to one class (the count is then taken over that class).
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    pool = [ex.source_id for ex in split if target_class is None or ex.label == target_class]
    manifest = choose_targets(pool, fraction, seed)
    return apply_label_flips(split, manifest), manifest


def apply_label_flips(split: Sequence[LabeledExample], manifest: Sequence[str]) -> list[LabeledExample]:
    chosen = set(manifest)
    return [replace(ex, label=Label(ex.label).flipped()) if ex.source_id in chosen else ex for ex in split]


# ---------------------------------------------------------------------------
# SyntheticPop
# ---------------------------------------------------------------------------


def synthesize_pop(clip: AudioClip, params: PopInjectionParams = PopInjectionParams()) -> AudioClip:
    """Return ``(a + P) / max|a + P|`` with ``P(t_i) = A sin(2 pi f t_i)``, ``t_i = i / sr``."""
    if params.frequency_hz >= clip.sample_rate / 2:
        raise ValueError(f"frequency {params.frequency_hz} Hz is not below Nyquist")
    t = np.arange(len(clip)) / clip.sample_rate
    poisoned = clip.samples + params.amplitude * np.sin(2 * np.pi * params.frequency_hz * t)
    peak = np.max(np.abs(poisoned))
    if peak == 0.0:
        warnings.warn(f"{clip.source_id or 'clip'}: a + P is identically zero", DegenerateSumWarning, stacklevel=2)
        return clip
    return AudioClip(poisoned / peak, clip.sample_rate, clip.source_id)


@dataclass(frozen=True)
class PoisonResult:
    audio_root: Path
    manifest_path: Path
    poisoned_ids: tuple[str, ...]


def _link_or_copy(src: Path, dst: Path) -> None:
    try:
        os.link(src, dst)
    except OSError:
        shutil.copy2(src, dst)


def poison_corpus(
    audio_root, split: Sequence[tuple[str, Label]], plan: PoisonPlan, out_dir
) -> PoisonResult:
    """Write a SyntheticPop overlay of ``audio_root`` under ``out_dir``.

    Every file referenced by the split is mirrored into ``out_dir/audio``:
    targets are rewritten through :func:`synthesize_pop` (16-bit PCM, same
    container), everything else is hard-linked or copied byte for byte.
    """
    if plan.kind != AttackKind.SYNTHETIC_POP:
        raise ValueError("poison_corpus handles SYNTHETIC_POP; use flip_labels for label flipping")
    src_root = Path(audio_root)
    out = Path(out_dir)
    overlay = out / "audio"
    overlay.mkdir(parents=True, exist_ok=True)

    pool = [sid for sid, lab in split if plan.target_class is None or lab == plan.target_class]
    targets = choose_targets(pool, plan.fraction, plan.seed)
    target_set = set(targets)

    for sid, _ in split:
        src = resolve_audio_path(src_root, sid)
        if src is None:
            if sid in target_set:
                raise PopforgeError(f"target file for {sid} not found under {src_root}")
            continue
        dst = overlay / src.name
        if dst.exists():
            dst.unlink()
        if sid in target_set:
            poisoned = synthesize_pop(load_audio(src), plan.injection)
            sf.write(str(dst), poisoned.samples, poisoned.sample_rate, subtype="PCM_16", format=src.suffix[1:].upper())
        else:
            _link_or_copy(src, dst)

    manifest = write_attack_manifest(out / "attack_manifest.csv", targets, plan)
    return PoisonResult(overlay, manifest, tuple(targets))


def write_attack_manifest(path, ids: Sequence[str], plan: PoisonPlan) -> Path:
    """Manifest CSV ``source_id,attack,params``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = plan.injection.describe() if plan.kind == AttackKind.SYNTHETIC_POP else f"fraction={plan.fraction:g}"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_id", "attack", "params"])
        for sid in ids:
            w.writerow([sid, plan.kind.value, params])
    return path


def read_attack_manifest(path) -> list[str]:
    with open(path, newline="") as fh:
        return [row["source_id"] for row in csv.DictReader(fh)]

"""Audio decoding, resampling and WAV writing.

Everything downstream works on :class:`AudioClip`, a mono float64 buffer in
[-1, 1] plus its sample rate.  The canonical rate is 16 kHz.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from .errors import AudioFileNotFound, EmptyAudio, UnsupportedFormat

logger = logging.getLogger(__name__)

CANONICAL_SR = 16000
SUPPORTED_SUFFIXES = (".wav", ".flac")
_PEAK_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {x.shape}")
        if x.size == 0:
            raise EmptyAudio(f"clip {self.source_id!r} has no samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        peak = float(np.max(np.abs(x)))
        if not np.isfinite(peak) or peak > 1.0 + _PEAK_TOL:
            raise ValueError(f"samples exceed full scale (peak {peak:.6g})")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples, sample_rate=None) -> "AudioClip":
        return AudioClip(samples, sample_rate or self.sample_rate, self.source_id)


def load_audio(path) -> AudioClip:
    """Read a WAV or FLAC file into a mono clip.

    Channels are averaged.  Integer PCM is scaled by the decoder; float files
    whose peak exceeds full scale are divided by that peak.
    """
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise UnsupportedFormat(f"{path.name}: only WAV and FLAC are supported")
    if not path.is_file():
        raise AudioFileNotFound(str(path))
    try:
        data, sr = sf.read(str(path), dtype="float64", always_2d=True)
    except RuntimeError as exc:  # libsndfile decode failures
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    if data.shape[0] == 0:
        raise EmptyAudio(str(path))
    mono = data.mean(axis=1)
    peak = np.max(np.abs(mono))
    if peak > 1.0:
        mono = mono / peak
    return AudioClip(mono, sr, source_id=path.stem)


def save_wav(clip: AudioClip, path) -> Path:
    """Write ``clip`` as 16-bit PCM (format inferred from the suffix; FLAC also works)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), clip.samples, clip.sample_rate, subtype="PCM_16")
    return path


def resample(clip: AudioClip, target_sr: int = CANONICAL_SR) -> AudioClip:
    """Polyphase resampling to ``target_sr``; identity when the rates already match."""
    if target_sr <= 0:
        raise ValueError(f"target_sr must be positive, got {target_sr}")
    if clip.sample_rate == target_sr:
        return clip
    g = gcd(clip.sample_rate, int(target_sr))
    up, down = int(target_sr) // g, clip.sample_rate // g
    y = resample_poly(clip.samples, up, down)
    # anti-alias filter ripple can overshoot full scale on near-clipping input
    peak = np.max(np.abs(y))
    if peak > 1.0:
        y = y / peak
    return AudioClip(y, target_sr, clip.source_id)


def resolve_audio_path(root, source_id: str, suffixes=(".flac", ".wav")) -> Path | None:
    """``root/source_id + suffix`` for the first suffix that exists, else None."""
    root = Path(root)
    for suffix in suffixes:
        candidate = root / f"{source_id}{suffix}"
        if candidate.is_file():
            return candidate
    return None

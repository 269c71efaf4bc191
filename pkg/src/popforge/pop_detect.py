"""Pop-noise localization from short-time low-band energy.

Frame ``k`` covers samples ``[k * hop, k * hop + frame_len)``; frames never
extend past the clip, so no padding artefacts enter the statistics.  Each frame
is Hann windowed and the energy of every STFT bin whose centre frequency is at
or below ``cutoff_hz`` is summed.  A frame is a pop candidate
when its energy exceeds ``mean + z_threshold * std`` of the clip's own energy
series, so detection does not depend on recording level.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import CANONICAL_SR, AudioClip
from .errors import ClipTooShort


@dataclass(frozen=True)
class PopDetectParams:
    frame_len: int = 1024
    hop: int = 256
    cutoff_hz: float = 100.0
    z_threshold: float = 2.0
    merge_gap_frames: int = 4
    min_len_frames: int = 2

    def __post_init__(self):
        if not (self.frame_len >= self.hop > 0):
            raise ValueError("need frame_len >= hop > 0")
        if self.cutoff_hz <= 0:
            raise ValueError("cutoff_hz must be positive")
        if self.min_len_frames < 1 or self.merge_gap_frames < 0:
            raise ValueError("min_len_frames >= 1 and merge_gap_frames >= 0 required")


@dataclass(frozen=True)
class PopSegment:
    start_frame: int
    end_frame: int  # inclusive
    start_s: float  # start of the first frame
    end_s: float  # end of the last frame
    peak_energy: float

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame + 1


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Frames of ``x`` along the last axis, shape ``(..., n_frames, frame_len)``.

    Returns a read-only view.
    """
    return sliding_window_view(x, frame_len, axis=-1)[..., ::hop, :]


def n_frames_for(n_samples: int, frame_len: int, hop: int) -> int:
    return 1 + (n_samples - frame_len) // hop


def frame_times(n_frames: int, hop: int, sample_rate: int) -> np.ndarray:
    """Start time of each frame in seconds."""
    return np.arange(n_frames) * hop / sample_rate


def lowband_bins(params: PopDetectParams, sample_rate: int) -> np.ndarray:
    freqs = np.fft.rfftfreq(params.frame_len, d=1.0 / sample_rate)
    return np.flatnonzero(freqs <= params.cutoff_hz)


def lowband_energy(clip: AudioClip, params: PopDetectParams = PopDetectParams()) -> np.ndarray:
    """Per-frame sum of |STFT|^2 over bins at or below ``params.cutoff_hz``."""
    if len(clip) < params.frame_len:
        raise ClipTooShort(
            f"{clip.source_id or 'clip'}: {len(clip)} samples < frame_len {params.frame_len}"
        )
    frames = frame_signal(clip.samples, params.frame_len, params.hop)
    spec = np.fft.rfft(frames * np.hanning(params.frame_len), axis=-1)
    bins = lowband_bins(params, clip.sample_rate)
    return np.sum(np.abs(spec[:, bins]) ** 2, axis=-1)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) index pairs of the True runs in ``mask``."""
    edges = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def detect_pops(
    energies,
    params: PopDetectParams = PopDetectParams(),
    sample_rate: int = CANONICAL_SR,
) -> list[PopSegment]:
    """Threshold, merge and length-filter the energy series into pop segments.

    Runs separated by at most ``merge_gap_frames`` unmarked frames are joined
    (the gap frames become part of the segment).  Merged runs shorter than
    ``min_len_frames`` are dropped.  A zero-variance series yields nothing.
    """
    e = np.asarray(energies, dtype=np.float64)
    if e.ndim != 1 or e.size == 0:
        raise ValueError("energies must be a non-empty 1-D sequence")
    sigma = e.std()
    if sigma == 0.0:
        return []
    runs = _runs(e > e.mean() + params.z_threshold * sigma)

    merged: list[list[int]] = []
    for start, end in runs:
        if merged and start - merged[-1][1] - 1 <= params.merge_gap_frames:
            merged[-1][1] = end
        else:
            merged.append([start, end])

    segments = []
    for start, end in merged:
        if end - start + 1 < params.min_len_frames:
            continue
        segments.append(
            PopSegment(
                start_frame=start,
                end_frame=end,
                start_s=start * params.hop / sample_rate,
                end_s=(end * params.hop + params.frame_len) / sample_rate,
                peak_energy=float(e[start : end + 1].max()),
            )
        )
    return segments


def find_pops(clip: AudioClip, params: PopDetectParams = PopDetectParams()) -> list[PopSegment]:
    return detect_pops(lowband_energy(clip, params), params, clip.sample_rate)


def dump_energy_csv(path, energies, params: PopDetectParams, sample_rate: int) -> Path:
    """Debug dump with columns ``frame_index,time_s,lowband_energy``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    times = frame_times(len(energies), params.hop, sample_rate)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "time_s", "lowband_energy"])
        for i, (t, e) in enumerate(zip(times, energies)):
            w.writerow([i, repr(float(t)), repr(float(e))])
    return path

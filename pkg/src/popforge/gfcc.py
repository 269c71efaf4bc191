"""Gammatone filterbank features over detected pop segments.

A clip is reduced to three numbers:

* ``gfcc_mean`` -- mean log energy inside the pop segments,
* ``delta1``    -- segment log energy minus the surrounding background
  (the flanks on either side of the segment),
* ``delta2``    -- mean absolute frame-to-frame change of the log energies
  across segment and flanks.

No DCT is applied.  With ``extended=True`` the per-channel mean log energies
inside the segments are appended.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .audio_io import AudioClip
from .errors import EmptyWindow, InvalidBand
from .pop_detect import PopDetectParams, PopSegment, frame_signal

EPS = 1e-10
GAMMATONE_ORDER = 4
# impulse responses are cut where 2*pi*b*t reaches this value (envelope < 1e-6 of peak)
_IR_DECAY = 25.0


def erb_rate(f):
    """ERB-rate (Cams) of frequency ``f`` in Hz (Glasberg & Moore)."""
    return 21.4 * np.log10(4.37 * np.asarray(f, dtype=np.float64) / 1000.0 + 1.0)


def erb_rate_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) * 1000.0 / 4.37


def erb_bandwidth(f):
    return 24.7 * (4.37 * np.asarray(f, dtype=np.float64) / 1000.0 + 1.0)


@dataclass(frozen=True, eq=False)
class GammatoneBank:
    center_hz: np.ndarray
    sample_rate: int
    order: int = GAMMATONE_ORDER

    @property
    def n_channels(self) -> int:
        return self.center_hz.size

    def impulse_responses(self) -> list[np.ndarray]:
        return [gammatone_ir(f, self.sample_rate, self.order) for f in self.center_hz]


def make_bank(sample_rate: int = 16000, n_channels: int = 32, f_lo: float = 50.0, f_hi: float = 8000.0) -> GammatoneBank:
    """Gammatone bank with centres equally spaced on the ERB-rate scale from ``f_lo`` to ``f_hi``."""
    if not (0 < f_lo < f_hi <= sample_rate / 2):
        raise InvalidBand(f"need 0 < f_lo < f_hi <= {sample_rate / 2}, got ({f_lo}, {f_hi})")
    if n_channels < 2:
        raise InvalidBand("n_channels must be at least 2")
    centers = erb_rate_to_hz(np.linspace(erb_rate(f_lo), erb_rate(f_hi), n_channels))
    # pin the endpoints exactly; the round trip through log10 is off by an ulp or two
    centers[0], centers[-1] = f_lo, f_hi
    centers.setflags(write=False)
    return GammatoneBank(centers, int(sample_rate))


def gammatone_ir(fc: float, sample_rate: int, order: int = GAMMATONE_ORDER) -> np.ndarray:
    """Causal FIR gammatone t^(n-1) exp(-2 pi b t) cos(2 pi fc t), unit gain at ``fc``."""
    b = 1.019 * float(erb_bandwidth(fc))
    n = int(np.ceil(_IR_DECAY / (2 * np.pi * b) * sample_rate)) + 1
    t = np.arange(n) / sample_rate
    g = t ** (order - 1) * np.exp(-2 * np.pi * b * t) * np.cos(2 * np.pi * fc * t)
    gain = np.abs(np.sum(g * np.exp(-2j * np.pi * fc * t)))
    return g / gain


def filter_clip(samples: np.ndarray, bank: GammatoneBank) -> np.ndarray:
    """Gammatone outputs, shape ``(n_channels, n_samples)``."""
    x = np.asarray(samples, dtype=np.float64)
    return np.stack([fftconvolve(x, h)[: x.size] for h in bank.impulse_responses()])


def channel_log_energies(
    clip: AudioClip, bank: GammatoneBank, params: PopDetectParams = PopDetectParams()
) -> np.ndarray:
    """log(energy + EPS) per frame and channel, shape ``(n_frames, n_channels)``.

    Frame energy is the Hann-weighted mean power of the filter output, using
    the same centred framing as the pop detector.
    """
    if clip.sample_rate != bank.sample_rate:
        raise ValueError(f"clip at {clip.sample_rate} Hz, bank at {bank.sample_rate} Hz")
    y = filter_clip(clip.samples, bank)
    w2 = np.hanning(params.frame_len) ** 2
    power = frame_signal(y * y, params.frame_len, params.hop) @ (w2 / w2.sum())
    return np.log(power.T + EPS)


def flank_frames(flank_ms: float, params: PopDetectParams, sample_rate: int) -> int:
    return max(1, int(round(flank_ms / 1000.0 * sample_rate / params.hop)))


def segment_window(seg: PopSegment, n_frames: int, n_flank: int) -> tuple[int, int]:
    """Half-open frame range of the segment padded by ``n_flank`` frames, clamped to the clip."""
    lo = max(0, seg.start_frame - n_flank)
    hi = min(n_frames, seg.end_frame + 1 + n_flank)
    return lo, hi


def segment_log_energies(
    clip: AudioClip,
    seg: PopSegment,
    bank: GammatoneBank,
    flank_ms: float = 50.0,
    params: PopDetectParams = PopDetectParams(),
) -> np.ndarray:
    """Log-energy matrix ``(frames_in_window, n_channels)`` for one padded segment."""
    log_e = channel_log_energies(clip, bank, params)
    lo, hi = segment_window(seg, log_e.shape[0], flank_frames(flank_ms, params, clip.sample_rate))
    if hi <= lo:
        raise EmptyWindow(f"segment {seg.start_frame}-{seg.end_frame} lies outside the clip")
    return log_e[lo:hi]


def window_stats(window: np.ndarray, seg_lo: int, seg_hi: int) -> tuple[float, float, float] | None:
    """(m, delta1, delta2) for one window; rows ``seg_lo:seg_hi`` are the segment.

    Returns None when the window has no background rows on either side.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim == 1:
        window = window[:, None]
    inside = window[seg_lo:seg_hi]
    background = np.concatenate([window[:seg_lo], window[seg_hi:]])
    if inside.shape[0] == 0 or background.shape[0] == 0:
        return None
    m = inside.mean()
    d1 = m - background.mean()
    d2 = np.abs(np.diff(window, axis=0)).mean() if window.shape[0] > 1 else 0.0
    return float(m), float(d1), float(d2)


@dataclass(frozen=True)
class FeatureVector:
    gfcc_mean: float
    delta1: float
    delta2: float
    channel_means: tuple[float, ...] = ()

    def as_array(self) -> np.ndarray:
        return np.array([self.gfcc_mean, self.delta1, self.delta2, *self.channel_means])

    @staticmethod
    def names(n_channels: int = 0) -> list[str]:
        return ["gfcc_mean", "delta1", "delta2"] + [f"ch{c:02d}" for c in range(n_channels)]


def extract_features(
    clip: AudioClip,
    pops: list[PopSegment],
    bank: GammatoneBank,
    flank_ms: float = 50.0,
    params: PopDetectParams = PopDetectParams(),
    extended: bool = False,
) -> FeatureVector | None:
    """Average the per-segment statistics over all pops of a clip.

    None means no usable pop (no segments, or none with background context).
    """
    if not pops:
        return None
    log_e = channel_log_energies(clip, bank, params)
    n_flank = flank_frames(flank_ms, params, clip.sample_rate)
    stats, chans = [], []
    for seg in pops:
        lo, hi = segment_window(seg, log_e.shape[0], n_flank)
        s = window_stats(log_e[lo:hi], seg.start_frame - lo, seg.end_frame + 1 - lo)
        if s is None:
            continue
        stats.append(s)
        chans.append(log_e[seg.start_frame : seg.end_frame + 1].mean(axis=0))
    if not stats:
        return None
    m, d1, d2 = np.mean(stats, axis=0)
    extra = tuple(np.mean(chans, axis=0).tolist()) if extended else ()
    return FeatureVector(float(m), float(d1), float(d2), extra)

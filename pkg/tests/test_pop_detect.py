import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popforge.audio_io import AudioClip
from popforge.errors import ClipTooShort
from popforge.pop_detect import (
    PopDetectParams,
    detect_pops,
    dump_energy_csv,
    find_pops,
    lowband_energy,
    n_frames_for,
)

from conftest import SR, planted_burst_clip, tone

P = PopDetectParams()


def dft_frame_energies(x, p=P, sr=SR):
    """Direct per-frame DFT oracle: (low-band energy, total energy)."""
    n = n_frames_for(len(x), p.frame_len, p.hop)
    w = np.hanning(p.frame_len)
    k = np.arange(p.frame_len // 2 + 1)
    basis = np.exp(-2j * np.pi * np.outer(k, np.arange(p.frame_len)) / p.frame_len)
    low = k * sr / p.frame_len <= p.cutoff_hz
    lo, tot = np.empty(n), np.empty(n)
    for i in range(n):
        spec = np.abs(basis @ (x[i * p.hop : i * p.hop + p.frame_len] * w)) ** 2
        lo[i], tot[i] = spec[low].sum(), spec.sum()
    return lo, tot


def oracle_segments(e, p=P):
    """Brute-force threshold / merge / drop with plain loops."""
    e = list(e)
    mu = sum(e) / len(e)
    sd = (sum((v - mu) ** 2 for v in e) / len(e)) ** 0.5
    if sd == 0:
        return []
    marked = [v > mu + p.z_threshold * sd for v in e]
    runs, i = [], 0
    while i < len(marked):
        if marked[i]:
            j = i
            while j + 1 < len(marked) and marked[j + 1]:
                j += 1
            runs.append([i, j])
            i = j + 1
        else:
            i += 1
    merged = []
    for r in runs:
        if merged and r[0] - merged[-1][1] - 1 <= p.merge_gap_frames:
            merged[-1][1] = r[1]
        else:
            merged.append(r)
    return [(a, b) for a, b in merged if b - a + 1 >= p.min_len_frames]


def test_silence_gives_zero_energy():
    e = lowband_energy(AudioClip(np.zeros(SR), SR))
    assert np.all(e == 0.0)
    assert detect_pops(e) == []


def test_energy_matches_dft_oracle(rng):
    x = 0.3 * rng.standard_normal(6000).clip(-3, 3) / 3
    lo, _ = dft_frame_energies(x)
    np.testing.assert_allclose(lowband_energy(AudioClip(x, SR)), lo, rtol=1e-9, atol=1e-12)


def test_1khz_tone_has_no_lowband_energy():
    x = tone(1000).samples
    e = lowband_energy(AudioClip(x, SR))
    _, tot = dft_frame_energies(x)
    assert np.all(e < 1e-4 * tot)


def test_90hz_tone_is_lowband():
    x = tone(90).samples
    e = lowband_energy(AudioClip(x, SR))
    _, tot = dft_frame_energies(x)
    assert np.all(e / tot > 0.9)


def test_short_clip_raises():
    with pytest.raises(ClipTooShort):
        lowband_energy(AudioClip(np.zeros(1000), SR))


def test_zero_energies_no_pops():
    assert detect_pops(np.zeros(50)) == []


def test_single_burst(rng):
    clip = planted_burst_clip(rng, [0.5])
    e = lowband_energy(clip)
    segs = detect_pops(e)
    assert [(s.start_frame, s.end_frame) for s in segs] == oracle_segments(e)
    assert len(segs) == 1
    assert segs[0].start_s < 0.6 and segs[0].end_s > 0.5


def test_two_bursts(rng):
    clip = planted_burst_clip(rng, [0.4, 1.0])
    e = lowband_energy(clip)
    segs = detect_pops(e)
    assert [(s.start_frame, s.end_frame) for s in segs] == oracle_segments(e)
    assert len(segs) == 2


def test_merge_and_min_length():
    e = np.zeros(100)
    e[[10, 11, 15, 16, 40, 60, 61, 67, 68]] = 10.0
    segs = detect_pops(e)
    # 10-11 and 15-16 merge (gap 3); lone 40 is dropped; 60-61 and 67-68 stay apart (gap 5)
    assert [(s.start_frame, s.end_frame) for s in segs] == [(10, 16), (60, 61), (67, 68)]
    assert segs[0].start_s == 10 * 256 / SR
    assert segs[0].end_s == (16 * 256 + 1024) / SR


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=120))
def test_detector_matches_oracle(values):
    e = np.array(values)
    got = [(s.start_frame, s.end_frame) for s in detect_pops(e)]
    assert got == oracle_segments(e)
    # disjoint and sorted
    assert all(a[1] < b[0] for a, b in zip(got, got[1:]))


def test_scale_invariance(rng):
    clip = planted_burst_clip(rng, [0.3, 1.2])
    base = find_pops(clip)
    for c in (0.01, 0.25, 0.9):
        scaled = find_pops(AudioClip(clip.samples * c, SR))
        assert [(s.start_frame, s.end_frame) for s in scaled] == [(s.start_frame, s.end_frame) for s in base]


def test_deterministic(rng):
    clip = planted_burst_clip(rng, [0.7])
    assert find_pops(clip) == find_pops(clip)


def test_energy_csv(tmp_path):
    p = dump_energy_csv(tmp_path / "e.csv", [1.0, 2.0], P, SR)
    lines = p.read_text().splitlines()
    assert lines[0] == "frame_index,time_s,lowband_energy"
    assert lines[2] == "1,0.016,2.0"

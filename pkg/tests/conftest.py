import re

import numpy as np
import pytest

from popforge.audio_io import AudioClip

SR = 16000


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tone(freq, seconds=1.0, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(int(seconds * sr)) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def noise_floor(rng, n, dbfs=-30.0):
    return 10 ** (dbfs / 20) * rng.standard_normal(n) / np.sqrt(2)


def planted_burst_clip(rng, starts_s, burst_s=0.1, over_db=20.0, seconds=2.0, freq=60.0, sr=SR):
    """Noise floor at -30 dBFS plus sustained low-frequency bursts ``over_db`` above it."""
    n = int(seconds * sr)
    x = noise_floor(rng, n)
    floor_rms = np.sqrt(np.mean(x**2))
    amp = floor_rms * 10 ** (over_db / 20) * np.sqrt(2)
    for s in starts_s:
        i0, i1 = int(s * sr), int((s + burst_s) * sr)
        t = np.arange(i1 - i0) / sr
        x[i0:i1] += amp * np.sin(2 * np.pi * freq * t)
    x /= max(1.0, np.max(np.abs(x)) / 0.99)
    return AudioClip(x, sr)


def make_mini_asvspoof(root, n_real=12, n_spoof=24, seed=0):
    """A tiny tree in the ASVspoof 2019 LA directory layout, FLAC audio."""
    import soundfile as sf

    from popforge.audio_io import load_audio
    from popforge.corpus import generate_synthetic_corpus, write_protocol
    from popforge.experiment import ASVSPOOF_LAYOUT

    for part, tag, offset in (("train", "T", 0), ("eval", "E", 1)):
        syn = generate_synthetic_corpus(root / f"_syn_{part}", n_real, n_spoof, seed + offset, prefix=f"LA_{tag}")
        flac_dir = root / ASVSPOOF_LAYOUT[f"{part}_audio"]
        flac_dir.mkdir(parents=True, exist_ok=True)
        for sid, _ in syn.entries:
            clip = load_audio(syn.audio_root / f"{sid}.wav")
            sf.write(flac_dir / f"{sid}.flac", clip.samples, clip.sample_rate, subtype="PCM_16")
        write_protocol(root / ASVSPOOF_LAYOUT[f"{part}_protocol"], syn.entries, speaker="LA_0079")
    return root


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        m = re.match(r".*test_acceptance\.py::test_c(\d+)([a-z]?)_", report.nodeid)
        if m is None:
            return
        crit = m.group(1) + m.group(2)
    props = dict(report.user_properties)
    budget = props.get("budget_s")
    duration = props.get("elapsed_s", report.duration)
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    ACCEPTANCE_RESULTS.append((crit, status, duration, budget))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit, status, dur, budget in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        limit = f" (budget {budget:g} s)" if budget else ""
        terminalreporter.write_line(f"criterion {crit:<4} {status}  {dur:7.2f} s{limit}")

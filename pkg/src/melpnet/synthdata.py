"""Deterministic synthetic speech and noise for tests and demo corpora.

Utterances are formant-synthesized: an impulse-train-plus-noise source with
a smooth F0 contour drives a slowly morphing cascade of second-order
resonators. Nothing here aims for naturalness; the point is signals with
speech-like spectral envelopes, voicing structure, and level dynamics that
are reproducible from a seed.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .audio_io import AudioSignal, write_wav

FS = 8000


def _resonator(freq_hz: float, bw_hz: float):
    """Denominator of a 2nd-order all-pole resonator at (freq, bandwidth)."""
    r = np.exp(-np.pi * bw_hz / FS)
    theta = 2.0 * np.pi * freq_hz / FS
    return np.array([1.0, -2.0 * r * np.cos(theta), r * r])


def _formant_filter(x: np.ndarray, formants, bandwidths) -> np.ndarray:
    y = x
    for f, bw in zip(formants, bandwidths):
        y = lfilter([1.0], _resonator(f, bw), y)
    return y


def _draw_formants(rng):
    return np.array([rng.uniform(300, 800),
                     rng.uniform(900, 2200),
                     rng.uniform(2300, 3000),
                     rng.uniform(3100, 3700)])


def _voiced_segment(rng, n: int) -> np.ndarray:
    """Impulse excitation with drifting F0 through morphing formants."""
    f0_base = rng.uniform(80.0, 220.0)
    drift = rng.uniform(-0.15, 0.15)
    wobble = rng.uniform(0.0, 0.08)
    exc = np.zeros(n + 200)
    pos = 0
    t = 0.0
    while pos < n:
        frac = pos / n
        f0 = f0_base * (1.0 + drift * frac + wobble * np.sin(2 * np.pi * 3.0 * t))
        period = int(round(FS / f0))
        exc[pos] = 1.0
        pos += max(period, 20)
        t += period / FS
    exc = exc[:n] + 0.02 * rng.standard_normal(n)
    # Glottal-ish tilt, then two formant sets morphed across the segment.
    exc = lfilter([1.0], [1.0, -0.7], exc)
    fa, fb = _draw_formants(rng), _draw_formants(rng)
    bw = rng.uniform(80, 250, 4)
    ya = _formant_filter(exc, fa, bw)
    yb = _formant_filter(exc, fb, bw)
    mix = np.linspace(0.0, 1.0, n)
    return (1.0 - mix) * ya + mix * yb


def _unvoiced_segment(rng, n: int) -> np.ndarray:
    noise = rng.standard_normal(n)
    center = rng.uniform(1500, 3500)
    return _formant_filter(noise, [center], [rng.uniform(400, 900)]) * 0.25


def _envelope(rng, n: int) -> np.ndarray:
    attack = min(int(rng.uniform(0.01, 0.05) * FS), n // 3)
    decay = min(int(rng.uniform(0.02, 0.08) * FS), n // 3)
    env = np.ones(n)
    env[:attack] = np.linspace(0.0, 1.0, attack)
    env[n - decay:] = np.linspace(1.0, 0.0, decay)
    return env


def make_utterance(seed: int, duration_s: float | None = None) -> AudioSignal:
    """One synthetic utterance, fully determined by the seed."""
    rng = np.random.default_rng(seed)
    if duration_s is None:
        duration_s = rng.uniform(1.4, 2.4)
    n_total = int(duration_s * FS)
    parts = []
    total = 0
    while total < n_total:
        voiced = rng.random() < 0.65
        if voiced:
            n = int(rng.uniform(0.15, 0.5) * FS)
        else:
            n = int(rng.uniform(0.06, 0.2) * FS)
        n = min(n, n_total - total)
        if n < 400:
            parts.append(np.zeros(n))
            total += n
            continue
        seg = _voiced_segment(rng, n) if voiced else _unvoiced_segment(rng, n)
        rms = np.sqrt(np.mean(seg**2))
        if rms > 0:
            level = rng.uniform(0.05, 0.2) if not voiced else rng.uniform(0.1, 0.3)
            seg = seg * (level / rms)
        parts.append(seg * _envelope(rng, n))
        # short silence between segments
        gap = np.zeros(int(rng.uniform(0.0, 0.05) * FS))
        parts.append(gap)
        total += n + len(gap)
    x = np.concatenate(parts)[:n_total]
    peak = np.abs(x).max()
    if peak > 0.95:
        x = x * (0.95 / peak)
    return AudioSignal(x, FS)


def make_noise(kind: str, seed: int, n_samples: int) -> AudioSignal:
    """Deterministic noise: 'white' or 'babble' (speech-shaped, modulated)."""
    rng = np.random.default_rng(seed)
    if kind == "white":
        x = rng.standard_normal(n_samples)
    elif kind == "babble":
        # Superpose several crude talkers; their sum keeps speech-like
        # spectra and level modulation without being intelligible.
        acc = np.zeros(n_samples)
        for k in range(6):
            talker = make_utterance(int(rng.integers(0, 2**31)),
                                    duration_s=n_samples / FS + 0.1)
            acc += talker.samples[:n_samples]
        x = acc
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    x = x / max(np.abs(x).max(), 1e-9) * 0.5
    return AudioSignal(x, FS)


def write_corpus(speech_dir, noise_dir, n_utterances: int,
                 seed_base: int = 0) -> None:
    """Materialize a WAV corpus for the mixing manifest machinery."""
    from pathlib import Path
    sp = Path(speech_dir)
    nz = Path(noise_dir)
    sp.mkdir(parents=True, exist_ok=True)
    nz.mkdir(parents=True, exist_ok=True)
    for i in range(n_utterances):
        write_wav(make_utterance(seed_base + i), sp / f"utt{i:04d}.wav")
    write_wav(make_noise("white", seed_base + 10_000, 6 * FS),
              nz / "white.wav")
    write_wav(make_noise("babble", seed_base + 20_000, 6 * FS),
              nz / "babble.wav")

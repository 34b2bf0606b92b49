"""WAV input/output, deterministic SNR mixing, and corpus manifests.

All codec paths work on mono 8 kHz float signals in [-1, 1]. WAV files are
plain RIFF PCM 16-bit mono; anything else is rejected with a distinct error.
"""

from __future__ import annotations

import warnings
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    SampleRateError,
    ShapeMismatchError,
    WavChannelError,
    WavFormatError,
    ZeroPowerError,
)

PCM_SCALE = 32768.0


@dataclass
class AudioSignal:
    """Mono audio: float samples in [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise WavChannelError("AudioSignal requires a 1-D sample array")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ShapeMismatchError("AudioSignal samples must be finite")

    def __len__(self):
        return len(self.samples)

    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class MixSpec:
    """One corpus mixing job: which files, at what SNR, with what seed."""

    speech_path: str
    noise_path: str
    snr_db: float
    seed: int


def read_wav(path, expected_rate_hz: int | None = None) -> AudioSignal:
    """Read a PCM 16-bit mono WAV file, scaling samples by 1/32768."""
    with wave.open(str(path), "rb") as wav:
        if wav.getnchannels() != 1:
            raise WavChannelError(
                f"{path}: expected mono, got {wav.getnchannels()} channels")
        if wav.getsampwidth() != 2 or wav.getcomptype() != "NONE":
            raise WavFormatError(
                f"{path}: expected uncompressed PCM 16-bit samples")
        rate = wav.getframerate()
        if expected_rate_hz is not None and rate != expected_rate_hz:
            raise SampleRateError(
                f"{path}: sample rate {rate} Hz, expected {expected_rate_hz} Hz")
        raw = wav.readframes(wav.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return AudioSignal(samples, rate)


def write_wav(signal: AudioSignal, path) -> None:
    """Write a PCM 16-bit mono WAV file; out-of-range samples clip with a warning."""
    x = np.asarray(signal.samples, dtype=np.float64)
    if x.size and (x.max() > 1.0 or x.min() < -1.0):
        warnings.warn(f"{path}: samples outside [-1, 1] clipped on write")
        x = np.clip(x, -1.0, 1.0)
    # 1.0 maps to 32767: full scale saturates the int16 range rather than wrap.
    pcm = np.clip(np.round(x * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(signal.sample_rate_hz)
        wav.writeframes(pcm.tobytes())


def scaled_noise_segment(speech: AudioSignal, noise: AudioSignal,
                         snr_db: float, seed: int) -> np.ndarray:
    """Pick a seeded noise segment and scale it for the requested SNR.

    The segment starts at a seeded offset into the noise recording and wraps
    around if the end is reached, so any non-empty noise file can cover any
    utterance length. Powers are mean squares over the full utterance.
    """
    if speech.sample_rate_hz != noise.sample_rate_hz:
        raise SampleRateError("speech and noise sample rates differ")
    if not np.isfinite(snr_db):
        raise ZeroPowerError("snr_db must be finite")
    n_speech, n_noise = len(speech), len(noise)
    if n_speech == 0 or n_noise == 0:
        raise ZeroPowerError("empty signal in mix")

    rng = np.random.default_rng(seed)
    offset = int(rng.integers(0, n_noise))
    idx = (offset + np.arange(n_speech)) % n_noise
    segment = noise.samples[idx]

    p_speech = float(np.mean(speech.samples**2))
    p_noise = float(np.mean(segment**2))
    if p_speech <= 0.0 or p_noise <= 0.0:
        raise ZeroPowerError("zero-power speech or noise: SNR undefined")
    gain = np.sqrt(p_speech / (p_noise * 10.0 ** (snr_db / 10.0)))
    return gain * segment


def mix_at_snr(speech: AudioSignal, noise: AudioSignal,
               snr_db: float, seed: int) -> AudioSignal:
    """Mix noise into speech at an exact SNR, deterministically per seed."""
    segment = scaled_noise_segment(speech, noise, snr_db, seed)
    return AudioSignal(speech.samples + segment, speech.sample_rate_hz)


def _list_wavs(directory) -> list[Path]:
    files = sorted(p for p in Path(directory).iterdir()
                   if p.is_file() and p.suffix.lower() == ".wav")
    if not files:
        raise ZeroPowerError(f"{directory}: no .wav files found")
    return files


def build_manifest(speech_dir, noise_dir, snr_list, seed_base: int = 0) -> list[MixSpec]:
    """Cross product of speech files, noise files, and SNRs with stable seeds.

    Entries are ordered (speech, noise, snr) with sorted file listings, so the
    same inputs always produce the same manifest byte for byte.
    """
    specs = []
    idx = 0
    for speech in _list_wavs(speech_dir):
        for noise in _list_wavs(noise_dir):
            for snr in snr_list:
                specs.append(MixSpec(str(speech), str(noise), float(snr),
                                     seed_base + idx))
                idx += 1
    return specs


def write_manifest(specs, path) -> None:
    """One tab-separated line per entry: speech, noise, snr_db, seed."""
    with open(path, "w", encoding="utf-8") as f:
        for s in specs:
            f.write(f"{s.speech_path}\t{s.noise_path}\t{s.snr_db:g}\t{s.seed}\n")


def read_manifest(path) -> list[MixSpec]:
    specs = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ShapeMismatchError(
                    f"{path}:{line_no}: expected 4 tab-separated fields")
            specs.append(MixSpec(parts[0], parts[1], float(parts[2]), int(parts[3])))
    return specs

"""Objective codec evaluation: frame-parameter distances, spectral
distortion, intelligibility, and the operation-count ledger.

The reference for every variant is the coded clean-speech parameter
sequence (quantize/dequantize of clean analysis), so quantization
distortion sits on both sides of each comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bitstream
from .analysis import analyze_utterance
from .audio_io import AudioSignal, mix_at_snr, read_wav
from .errors import ShapeMismatchError, UnstableFilterError
from .features import refine, unrefine
from .frame import FrameInvariantError, SAMPLE_RATE_HZ
from .lpc import lpc_power_spectrum, lsf_to_lpc
from .network import PRESETS, enhance_sequence
from .stoi import stoi
from .synthesis import synthesize

VARIANTS = ("clean", "noisy", "irm", "param-enc", "param-dec")
FRAMES_PER_SECOND = 1.0 / bitstream.FRAME_SECONDS  # 44.44...
FFT_FLOPS = 3078  # cost of one 256-point transform in the ledger


# --- frame-parameter metrics -------------------------------------------------

def _check_lengths(ref, test):
    ref, test = list(ref), list(test)
    if len(ref) != len(test):
        raise ShapeMismatchError(
            f"frame count mismatch: {len(ref)} vs {len(test)}")
    if not ref:
        raise ShapeMismatchError("empty frame sequences")
    return ref, test


def vuv_error(ref, test) -> float:
    """Percent of frames whose band-1 voicing decision differs."""
    ref, test = _check_lengths(ref, test)
    diff = sum(1 for r, t in zip(ref, test) if r.voiced != t.voiced)
    return 100.0 * diff / len(ref)


def gain_rmse(ref, test) -> float:
    ref, test = _check_lengths(ref, test)
    err = np.array([r.gain_db - t.gain_db for r, t in zip(ref, test)])
    return float(np.sqrt(np.mean(err ** 2)))


def f0_rmse(ref, test):
    """RMSE in Hz over frames voiced in BOTH; None when there are none."""
    ref, test = _check_lengths(ref, test)
    errs = [SAMPLE_RATE_HZ / r.pitch_samples - SAMPLE_RATE_HZ / t.pitch_samples
            for r, t in zip(ref, test) if r.voiced and t.voiced]
    if not errs:
        return None
    return float(np.sqrt(np.mean(np.square(errs))))


def spectral_envelope_db(lsf, n_points: int = 512) -> np.ndarray:
    """LSF -> all-pole power envelope in dB on a uniform [0, pi) grid."""
    power = lpc_power_spectrum(lsf_to_lpc(np.asarray(lsf)), n_points)
    return 10.0 * np.log10(power)


def lsd(ref_lsf, test_lsf, n_points: int = 512, return_skipped=False):
    """Mean over frames of the RMS log-spectral difference in dB.

    Frames whose LSF vectors do not convert to a usable envelope are
    skipped and counted instead of poisoning the average.
    """
    ref_lsf = np.asarray(ref_lsf, dtype=np.float64)
    test_lsf = np.asarray(test_lsf, dtype=np.float64)
    if ref_lsf.shape != test_lsf.shape or ref_lsf.ndim != 2:
        raise ShapeMismatchError("LSF sequences must share (N, order) shape")
    vals = []
    skipped = 0
    for r, t in zip(ref_lsf, test_lsf):
        try:
            d = spectral_envelope_db(r, n_points) \
                - spectral_envelope_db(t, n_points)
        except (UnstableFilterError, FrameInvariantError):
            skipped += 1
            continue
        if not np.all(np.isfinite(d)):
            skipped += 1
            continue
        vals.append(np.sqrt(np.mean(d ** 2)))
    if not vals:
        raise ShapeMismatchError("no usable frames for LSD")
    out = float(np.mean(vals))
    return (out, skipped) if return_skipped else out


def lsf_matrix(frames) -> np.ndarray:
    return np.array([f.lsf for f in frames])


# --- FLOPs ledger ------------------------------------------------------------

@dataclass(frozen=True)
class FlopsBreakdown:
    layers: tuple            # (label, flops per frame), network only
    fft_flops_per_frame: float
    frames_per_second: float = FRAMES_PER_SECOND

    @property
    def per_frame(self) -> float:
        return sum(f for _, f in self.layers) + self.fft_flops_per_frame

    @property
    def total_flops(self) -> float:
        return self.per_frame * self.frames_per_second

    @property
    def total_mflops(self) -> float:
        return self.total_flops / 1e6


def count_flops(specs, pipeline: str = "param") -> FlopsBreakdown:
    """2 FLOPs per multiply-add of the weight matrices; biases and
    activations ignored. The mask pipeline adds a forward and an inverse
    256-point transform each frame."""
    if isinstance(specs, str):
        specs = PRESETS[specs]
    if pipeline not in ("param", "irm"):
        raise ShapeMismatchError(f"unknown pipeline {pipeline!r}")
    layers = []
    for i, s in enumerate(specs):
        if s.kind == "gru":
            macs = 3 * (s.in_dim + s.out_dim) * s.out_dim
        else:
            macs = s.in_dim * s.out_dim
        layers.append((f"{i}:{s.kind}:{s.in_dim}x{s.out_dim}", 2.0 * macs))
    fft = 2.0 * FFT_FLOPS if pipeline == "irm" else 0.0
    return FlopsBreakdown(tuple(layers), fft)


# --- end-to-end evaluation ---------------------------------------------------

@dataclass
class ConditionResult:
    noise: str
    snr_db: float
    n_utterances: int
    vuv_error_pct: float
    gain_rmse_db: float
    f0_rmse_hz: float      # None when no commonly voiced frame exists
    lsd_db: float
    stoi: float


@dataclass
class MetricReport:
    variant: str
    rows: list
    overall: ConditionResult
    skipped_frames: int = 0


class _Pool:
    """Frame-pooled accumulators so RMS metrics aggregate correctly."""

    def __init__(self):
        self.n_frames = 0
        self.vuv_diff = 0
        self.gain_sq = 0.0
        self.gain_n = 0
        self.f0_sq = 0.0
        self.f0_n = 0
        self.lsd_sum = 0.0
        self.lsd_n = 0
        self.stoi_scores = []
        self.n_utts = 0
        self.skipped = 0

    def add(self, ref, test, stoi_score):
        self.n_utts += 1
        self.n_frames += len(ref)
        self.vuv_diff += sum(1 for r, t in zip(ref, test)
                             if r.voiced != t.voiced)
        for r, t in zip(ref, test):
            e = r.gain_db - t.gain_db
            self.gain_sq += float(e @ e)
            self.gain_n += 2
            if r.voiced and t.voiced:
                d = SAMPLE_RATE_HZ / r.pitch_samples \
                    - SAMPLE_RATE_HZ / t.pitch_samples
                self.f0_sq += d * d
                self.f0_n += 1
        val, skip = lsd(lsf_matrix(ref), lsf_matrix(test),
                        return_skipped=True)
        kept = len(ref) - skip
        self.lsd_sum += val * kept
        self.lsd_n += kept
        self.skipped += skip
        self.stoi_scores.append(stoi_score)

    @classmethod
    def merged(cls, pools) -> "_Pool":
        out = cls()
        for p in pools:
            out.n_utts += p.n_utts
            out.n_frames += p.n_frames
            out.vuv_diff += p.vuv_diff
            out.gain_sq += p.gain_sq
            out.gain_n += p.gain_n
            out.f0_sq += p.f0_sq
            out.f0_n += p.f0_n
            out.lsd_sum += p.lsd_sum
            out.lsd_n += p.lsd_n
            out.skipped += p.skipped
            out.stoi_scores.extend(p.stoi_scores)
        return out

    def result(self, noise, snr_db) -> ConditionResult:
        return ConditionResult(
            noise=noise, snr_db=snr_db, n_utterances=self.n_utts,
            vuv_error_pct=100.0 * self.vuv_diff / self.n_frames,
            gain_rmse_db=float(np.sqrt(self.gain_sq / self.gain_n)),
            f0_rmse_hz=(float(np.sqrt(self.f0_sq / self.f0_n))
                        if self.f0_n else None),
            lsd_db=self.lsd_sum / self.lsd_n,
            stoi=float(np.mean(self.stoi_scores)))


def coded_frames(frames):
    """Push parameters through the 54-bit lattice and back."""
    return [bitstream.dequantize(bitstream.quantize(f)) for f in frames]


def variant_frames(variant: str, clean: AudioSignal, mixed: AudioSignal,
                   weights=None):
    """Parameter sequence produced by one system shape on one utterance."""
    if variant == "clean":
        return coded_frames(analyze_utterance(clean))
    if variant == "noisy":
        return coded_frames(analyze_utterance(mixed))
    if variant == "param-enc":
        # enhancement before quantization, at the transmitter
        feats = refine(analyze_utterance(mixed))
        enhanced = unrefine(enhance_sequence(weights, feats))
        return coded_frames(enhanced)
    if variant == "param-dec":
        # the receiver only ever sees decoded parameters
        decoded = coded_frames(analyze_utterance(mixed))
        enhanced = enhance_sequence(weights, refine(decoded))
        return unrefine(enhanced)
    if variant == "irm":
        from .irm import enhance_irm
        cleaned = AudioSignal(enhance_irm(weights, mixed.samples),
                              mixed.sample_rate_hz)
        return coded_frames(analyze_utterance(cleaned))
    raise ShapeMismatchError(f"unknown variant {variant!r}")


def evaluate(variant: str, mix_specs, weights=None, seed: int = 0,
             compute_stoi: bool = True) -> MetricReport:
    """Run one system shape over a mixing manifest and pool the metrics
    per (noise, SNR) condition. The synthesis seed is shared between the
    reference and test decodes so excitation noise cancels."""
    if variant not in VARIANTS:
        raise ShapeMismatchError(f"unknown variant {variant!r}")
    if variant != "clean" and variant != "noisy" and weights is None:
        raise ShapeMismatchError(f"variant {variant!r} needs trained weights")
    specs = list(mix_specs)
    if not specs:
        raise ShapeMismatchError("empty evaluation manifest")
    pools = {}
    cache = {}
    for ms in specs:
        if ms.speech_path not in cache:
            cache[ms.speech_path] = read_wav(ms.speech_path)
        clean = cache[ms.speech_path]
        if ms.noise_path not in cache:
            cache[ms.noise_path] = read_wav(ms.noise_path)
        noise = cache[ms.noise_path]
        mixed = mix_at_snr(clean, noise, ms.snr_db, seed=ms.seed)
        ref = coded_frames(analyze_utterance(clean))
        test = variant_frames(variant, clean, mixed, weights)
        if compute_stoi:
            ref_wav = synthesize(ref, seed=seed)
            test_wav = synthesize(test, seed=seed)
            score = stoi(ref_wav.samples, test_wav.samples)
        else:
            score = float("nan")
        key = (_noise_name(ms.noise_path), float(ms.snr_db))
        pools.setdefault(key, _Pool()).add(ref, test, score)
    rows = [pools[k].result(k[0], k[1]) for k in sorted(pools)]
    total = _Pool.merged(pools.values())
    return MetricReport(variant=variant, rows=rows,
                        overall=total.result("all", float("nan")),
                        skipped_frames=total.skipped)


def _noise_name(path) -> str:
    import os
    return os.path.splitext(os.path.basename(str(path)))[0]

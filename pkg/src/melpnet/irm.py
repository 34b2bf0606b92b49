"""Mask-based enhancement front end: 256-point STFT at the codec's frame
rate, log-power features, ratio masks, and the GRU mask predictor.

The hop (180) exceeds half the frame (128), so no windowed COLA exists;
analysis is rectangular and synthesis cross-fades linearly over the
76-sample overlap, which reconstructs exactly when neighbouring frames
agree (unit mask).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .features import apply_norm

LOG_POWER_EPS = 1e-10


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 256
    hop: int = 180
    fft_size: int = 256

    @property
    def overlap(self) -> int:
        return self.frame_len - self.hop

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len <= self.fft_size:
            raise ShapeMismatchError("bad stft geometry")


DEFAULT_STFT = StftConfig()


def _frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = max(1, -(-len(x) // cfg.hop))  # ceil, at least one frame
    padded = np.zeros(cfg.hop * (n_frames - 1) + cfg.frame_len)
    padded[:len(x)] = x
    idx = np.arange(cfg.frame_len)[None, :] \
        + cfg.hop * np.arange(n_frames)[:, None]
    return padded[idx]


def stft(signal, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """(n,) -> (n_frames, bins) complex, rectangular analysis window."""
    x = np.asarray(signal, dtype=np.float64)
    return np.fft.rfft(_frame_signal(x, cfg), n=cfg.fft_size, axis=1)


def istft(spectra, cfg: StftConfig = DEFAULT_STFT, length=None) -> np.ndarray:
    """Inverse with linear cross-fade over each overlap region."""
    spec = np.asarray(spectra)
    if spec.ndim != 2 or spec.shape[1] != cfg.n_bins:
        raise ShapeMismatchError(f"expected (frames, {cfg.n_bins}) spectra")
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=1)[:, :cfg.frame_len]
    n_frames = len(frames)
    out = np.zeros(cfg.hop * (n_frames - 1) + cfg.frame_len)
    ov = cfg.overlap
    fade_in = np.arange(1, ov + 1) / (ov + 1.0)
    out[:cfg.frame_len] = frames[0]
    for k in range(1, n_frames):
        start = cfg.hop * k
        out[start:start + ov] *= 1.0 - fade_in
        out[start:start + ov] += fade_in * frames[k][:ov]
        out[start + ov:start + cfg.frame_len] = frames[k][ov:]
    if length is not None:
        if length > len(out):
            out = np.concatenate([out, np.zeros(length - len(out))])
        out = out[:length]
    return out


def log_power_features(spectra, stats=None) -> np.ndarray:
    """log(|X|^2 + eps); optionally normalized with the model's NormStats."""
    feats = np.log(np.abs(np.asarray(spectra)) ** 2 + LOG_POWER_EPS)
    if stats is not None:
        feats = apply_norm(feats, stats)
    return feats


def ideal_ratio_mask(clean_spectra, noise_spectra) -> np.ndarray:
    """sqrt(S/(S+N)) per bin; 0/0 -> 0; clipped to [0, 1]."""
    s = np.abs(np.asarray(clean_spectra)) ** 2
    n = np.abs(np.asarray(noise_spectra)) ** 2
    if s.shape != n.shape:
        raise ShapeMismatchError("clean/noise spectra shape mismatch")
    denom = s + n
    with np.errstate(invalid="ignore", divide="ignore"):
        mask = np.sqrt(np.where(denom > 0.0, s / np.where(denom > 0.0,
                                                          denom, 1.0), 0.0))
    return np.clip(mask, 0.0, 1.0)


def apply_mask(spectra, mask) -> np.ndarray:
    """Scale magnitudes, keep the phase that came with the spectra."""
    spec = np.asarray(spectra)
    m = np.asarray(mask, dtype=np.float64)
    if spec.shape != m.shape:
        raise ShapeMismatchError("mask shape mismatch")
    return spec * m


def enhance_irm(weights, noisy_signal,
                cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Predict a mask from log-power features and resynthesize."""
    from .network import forward_sequence
    if weights.specs[0].in_dim != cfg.n_bins \
            or weights.specs[-1].out_dim != cfg.n_bins:
        raise ShapeMismatchError("weights do not match the stft bin count")
    x = np.asarray(noisy_signal, dtype=np.float64)
    spec = stft(x, cfg)
    feats = log_power_features(spec, stats=weights.in_stats)
    mask = np.clip(forward_sequence(weights, feats), 0.0, 1.0)
    return istft(apply_mask(spec, mask), cfg, length=len(x))


def enhance_oracle(clean_signal, noise_signal, noisy_signal,
                   cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Upper bound: mask computed from the true clean/noise split."""
    mask = ideal_ratio_mask(stft(clean_signal, cfg), stft(noise_signal, cfg))
    noisy = np.asarray(noisy_signal, dtype=np.float64)
    return istft(apply_mask(stft(noisy, cfg), mask), cfg, length=len(noisy))

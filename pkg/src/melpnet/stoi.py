"""Short-time objective intelligibility, 10 kHz-native formulation.

Pipeline: polyphase resample to 10 kHz, drop frames 40 dB below the
loudest clean frame, hann STFT (256/128/512), 15 third-octave bands from
150 Hz, clipped band-normalized correlation over 30-frame (384 ms)
segments, averaged.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import resample_poly

from .errors import ShapeMismatchError

FS = 10000
FRAME = 256
HOP = 128
NFFT = 512
N_BANDS = 15
MIN_FREQ_HZ = 150.0
SEG_FRAMES = 30          # 384 ms at the 12.8 ms hop
BETA_DB = -15.0          # lower SDR clipping bound
DYN_RANGE_DB = 40.0
_EPS = np.finfo(np.float64).eps


def _window() -> np.ndarray:
    # endpoints of the length-(N+2) hann are zero; drop them
    return np.hanning(FRAME + 2)[1:-1]


def _frame(x: np.ndarray) -> np.ndarray:
    n = 1 + (len(x) - FRAME) // HOP
    idx = np.arange(FRAME)[None, :] + HOP * np.arange(n)[:, None]
    return x[idx] * _window()


def third_octave_bands(fs: int = FS, nfft: int = NFFT,
                       n_bands: int = N_BANDS,
                       min_freq: float = MIN_FREQ_HZ):
    """Boolean band matrix (n_bands, nfft/2+1) and center frequencies."""
    f = np.linspace(0, fs, nfft + 1)[:nfft // 2 + 1]
    k = np.arange(n_bands, dtype=np.float64)
    cf = min_freq * 2.0 ** (k / 3.0)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6.0)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((n_bands, len(f)))
    for i in range(n_bands):
        lo_bin = int(np.argmin(np.square(f - lo[i])))
        hi_bin = int(np.argmin(np.square(f - hi[i])))
        obm[i, lo_bin:hi_bin] = 1.0
    return obm, cf


_OBM, _ = third_octave_bands()


def _remove_silent_frames(x: np.ndarray, y: np.ndarray):
    """Drop frames whose CLEAN energy sits 40 dB under the loudest frame,
    then rebuild both signals by overlap-add of the kept frames."""
    xf = _frame(x)
    yf = _frame(y)
    energies = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = energies > energies.max() - DYN_RANGE_DB
    xf, yf = xf[keep], yf[keep]
    out_len = HOP * (len(xf) - 1) + FRAME if len(xf) else 0
    xs = np.zeros(out_len)
    ys = np.zeros(out_len)
    for i in range(len(xf)):
        xs[i * HOP:i * HOP + FRAME] += xf[i]
        ys[i * HOP:i * HOP + FRAME] += yf[i]
    return xs, ys


def _band_envelopes(x: np.ndarray) -> np.ndarray:
    spec = np.fft.rfft(_frame(x), n=NFFT)
    return np.sqrt(_OBM @ np.abs(spec.T) ** 2)  # (bands, frames)


def stoi(clean, test, fs: int = 8000) -> float:
    x = np.asarray(clean, dtype=np.float64)
    y = np.asarray(test, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeMismatchError("stoi wants two equal-length 1-D signals")
    if fs != FS:
        x = resample_poly(x, FS, fs)
        y = resample_poly(y, FS, fs)
    if len(x) < FRAME:
        raise ShapeMismatchError("signal shorter than one stft frame")
    x, y = _remove_silent_frames(x, y)
    if len(x) < FRAME:
        raise ShapeMismatchError("nothing left after silence removal")
    xb = _band_envelopes(x)
    yb = _band_envelopes(y)
    if xb.shape[1] < SEG_FRAMES:
        raise ShapeMismatchError(
            f"need >= {SEG_FRAMES} frames, got {xb.shape[1]}")
    clip_gain = 10.0 ** (-BETA_DB / 20.0)
    total = 0.0
    n_segments = xb.shape[1] - SEG_FRAMES + 1
    for m in range(n_segments):
        xs = xb[:, m:m + SEG_FRAMES]
        ys = yb[:, m:m + SEG_FRAMES]
        alpha = np.linalg.norm(xs, axis=1, keepdims=True) \
            / (np.linalg.norm(ys, axis=1, keepdims=True) + _EPS)
        y_prime = np.minimum(ys * alpha, xs * (1.0 + clip_gain))
        xc = xs - xs.mean(axis=1, keepdims=True)
        yc = y_prime - y_prime.mean(axis=1, keepdims=True)
        xc = xc / (np.linalg.norm(xc, axis=1, keepdims=True) + _EPS)
        yc = yc / (np.linalg.norm(yc, axis=1, keepdims=True) + _EPS)
        total += float(np.sum(xc * yc))
    d = total / (n_segments * N_BANDS)
    return float(np.clip(d, 0.0, 1.0))

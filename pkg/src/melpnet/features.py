"""Reversible mapping between MelpFrames and the 29-dim feature space.

Feature order (frozen contract): lsf[10], gain_mean, gain_diff, bpvc[5] as
0/1, pitch_interp, aperiodic as 0/1, log_fourier_mag[10].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .frame import PITCH_MAX, PITCH_MIN, MelpFrame
from .lpc import ensure_ascending

FEATURE_DIM = 29
DEFAULT_PITCH = 80.0  # stand-in contour for fully unvoiced utterances

# Index layout.
SL_LSF = slice(0, 10)
IDX_GAIN_MEAN = 10
IDX_GAIN_DIFF = 11
SL_BPVC = slice(12, 17)
IDX_PITCH = 17
IDX_APERIODIC = 18
SL_FOURIER = slice(19, 29)


def interpolate_pitch(pitch: np.ndarray, voiced: np.ndarray) -> np.ndarray:
    """Fill unvoiced stretches by linear interpolation between the nearest
    voiced anchors; edges extend the nearest anchor; no anchors -> 80."""
    pitch = np.asarray(pitch, dtype=np.float64)
    voiced = np.asarray(voiced, dtype=bool)
    anchors = np.nonzero(voiced)[0]
    if len(anchors) == 0:
        return np.full(len(pitch), DEFAULT_PITCH)
    idx = np.arange(len(pitch))
    return np.interp(idx, anchors, pitch[anchors])


def refine(frames) -> np.ndarray:
    """Frames -> (N, 29) feature matrix."""
    frames = list(frames)
    if not frames:
        raise ShapeMismatchError("refine needs at least one frame")
    n = len(frames)
    out = np.empty((n, FEATURE_DIM))
    pitches = np.array([f.pitch_samples for f in frames])
    voiced = np.array([f.voiced for f in frames])
    contour = interpolate_pitch(pitches, voiced)
    for i, f in enumerate(frames):
        out[i, SL_LSF] = f.lsf
        out[i, IDX_GAIN_MEAN] = 0.5 * (f.gain_db[0] + f.gain_db[1])
        out[i, IDX_GAIN_DIFF] = 0.5 * (f.gain_db[1] - f.gain_db[0])
        out[i, SL_BPVC] = f.bpvc.astype(float)
        out[i, IDX_PITCH] = contour[i]
        out[i, IDX_APERIODIC] = float(f.aperiodic)
        out[i, SL_FOURIER] = np.log(f.fourier_mag)
    return out


def unrefine(features: np.ndarray,
             voicing_source: np.ndarray | None = None) -> list[MelpFrame]:
    """Feature matrix -> frames, repairing anything a regressor can bend.

    voicing_source optionally overrides the band-1 voiced/unvoiced decision
    (e.g. flags decoded from the bitstream instead of network output).
    """
    feats = np.nan_to_num(np.asarray(features, dtype=np.float64),
                          nan=0.0, posinf=1e6, neginf=-1e6)
    if feats.ndim != 2 or feats.shape[1] != FEATURE_DIM:
        raise ShapeMismatchError(f"expected (N, {FEATURE_DIM}) features")
    if voicing_source is not None and len(voicing_source) != len(feats):
        raise ShapeMismatchError("voicing_source length mismatch")
    frames = []
    for i, v in enumerate(feats):
        bpvc = v[SL_BPVC] > 0.5
        if voicing_source is not None:
            bpvc[0] = bool(voicing_source[i])
        if not bpvc[0]:
            bpvc[:] = False
        lsf = ensure_ascending(v[SL_LSF])
        mean, diff = v[IDX_GAIN_MEAN], v[IDX_GAIN_DIFF]
        gain = np.array([mean - diff, mean + diff])
        if bpvc[0]:
            pitch = float(np.clip(v[IDX_PITCH], PITCH_MIN, PITCH_MAX))
            aperiodic = v[IDX_APERIODIC] > 0.5
        else:
            pitch = 0.0
            aperiodic = False
        fourier = np.exp(np.clip(v[SL_FOURIER], -20.0, 20.0))
        frames.append(MelpFrame(lsf, gain, bpvc, pitch, aperiodic,
                                fourier).validate())
    return frames


@dataclass
class NormStats:
    """Per-dimension mean/std, std floored so constants normalize to 0."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeMismatchError("NormStats wants matching 1-D arrays")

    @classmethod
    def identity(cls, dim: int) -> "NormStats":
        return cls(np.zeros(dim), np.ones(dim))


def fit_norm(dataset: np.ndarray) -> NormStats:
    """Population statistics (ddof=0) over rows; std floored at 1e-6."""
    x = np.asarray(dataset, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ShapeMismatchError("fit_norm needs >= 2 vectors")
    return NormStats(x.mean(axis=0), np.maximum(x.std(axis=0), 1e-6))


def apply_norm(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def invert_norm(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * stats.std + stats.mean

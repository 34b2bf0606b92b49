"""Frame-level parameter types shared by the analyzer, codec, and synthesizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FrameInvariantError
from .lpc import MIN_LSF_GAP

FRAME_LEN = 180
SAMPLE_RATE_HZ = 8000
PITCH_MIN = 20.0
PITCH_MAX = 160.0
GAIN_FLOOR_DB = -60.0
N_BANDS = 5
N_FOURIER = 10


@dataclass(frozen=True)
class AnalysisConfig:
    """Knobs for the parameter extractor. Defaults match the 2.4 kbit/s
    operating point: 180-sample frames at 8 kHz, 10th-order prediction."""

    frame_len: int = FRAME_LEN
    sample_rate_hz: int = SAMPLE_RATE_HZ
    lpc_order: int = 10
    pitch_min: float = PITCH_MIN
    pitch_max: float = PITCH_MAX
    band_edges_hz: tuple = (0.0, 500.0, 1000.0, 2000.0, 3000.0, 4000.0)
    voicing_threshold: float = 0.6
    # Voiced frames whose band-1 correlation sits below this are marked
    # aperiodic: strong enough to voice, too ragged for a clean pulse train.
    aperiodic_threshold: float = 0.7
    # Frames this far below the loudest frame of the utterance are forced
    # unvoiced: decaying filter tails in near-silence are periodic at the
    # resonance frequency and would otherwise pass the correlation test.
    silence_floor_db: float = 45.0
    gain_floor_db: float = GAIN_FLOOR_DB

    def __post_init__(self):
        if self.frame_len * (self.sample_rate_hz / self.frame_len) != self.sample_rate_hz:
            raise FrameInvariantError("frame_len must divide the sample count per second")
        if list(self.band_edges_hz) != sorted(self.band_edges_hz):
            raise FrameInvariantError("band edges must ascend")


@dataclass
class MelpFrame:
    """One 22.5 ms frame of vocoder parameters.

    pitch_samples is meaningful only when bpvc[0] is set; unvoiced frames
    carry 0.0 by convention.
    """

    lsf: np.ndarray
    gain_db: np.ndarray
    bpvc: np.ndarray
    pitch_samples: float
    aperiodic: bool
    fourier_mag: np.ndarray

    def __post_init__(self):
        self.lsf = np.asarray(self.lsf, dtype=np.float64)
        self.gain_db = np.asarray(self.gain_db, dtype=np.float64)
        self.bpvc = np.asarray(self.bpvc, dtype=bool)
        self.pitch_samples = float(self.pitch_samples)
        self.aperiodic = bool(self.aperiodic)
        self.fourier_mag = np.asarray(self.fourier_mag, dtype=np.float64)

    @property
    def voiced(self) -> bool:
        return bool(self.bpvc[0])

    def validate(self) -> "MelpFrame":
        """Raise FrameInvariantError on any structural violation."""
        if self.lsf.shape != (10,):
            raise FrameInvariantError("lsf must have 10 entries")
        if self.lsf[0] <= 0.0 or self.lsf[-1] >= np.pi:
            raise FrameInvariantError("lsf outside (0, pi)")
        if np.any(np.diff(self.lsf) < MIN_LSF_GAP * (1 - 1e-9)):
            raise FrameInvariantError("lsf gap below minimum")
        if self.gain_db.shape != (2,) or not np.all(np.isfinite(self.gain_db)):
            raise FrameInvariantError("gain_db must be 2 finite values")
        if self.bpvc.shape != (5,):
            raise FrameInvariantError("bpvc must have 5 flags")
        if self.fourier_mag.shape != (10,) or np.any(self.fourier_mag <= 0.0):
            raise FrameInvariantError("fourier_mag must be 10 positive values")
        if self.voiced and not (PITCH_MIN <= self.pitch_samples <= PITCH_MAX):
            raise FrameInvariantError(
                f"voiced pitch {self.pitch_samples} outside [{PITCH_MIN}, {PITCH_MAX}]")
        return self


def frames_to_text(frames) -> str:
    """Parameter dump: one frame per line, space separated, fixed order
    (10 lsf, 2 gain, 5 bpvc as 0/1, pitch, aperiodic as 0/1, 10 fourier)."""
    lines = []
    for f in frames:
        vals = np.concatenate([f.lsf, f.gain_db, f.bpvc.astype(float),
                               [f.pitch_samples, float(f.aperiodic)],
                               f.fourier_mag])
        lines.append(" ".join(f"{v:.12g}" for v in vals))
    return "\n".join(lines) + ("\n" if lines else "")


def frames_from_text(text: str) -> list:
    frames = []
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        vals = np.array([float(t) for t in line.split()])
        if len(vals) != 29:
            raise FrameInvariantError(
                f"line {line_no}: expected 29 values, got {len(vals)}")
        frames.append(MelpFrame(vals[0:10], vals[10:12], vals[12:17] > 0.5,
                                vals[17], vals[18] > 0.5, vals[19:29]))
    return frames

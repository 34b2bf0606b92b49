"""Mixed-excitation decoder: MelpFrame sequences back to 8 kHz speech.

Excitation is built per inter-pulse period: each period is the inverse DFT
of the harmonic magnitudes (first 10 from the frame, 1.0 above), so the gaps
between pulse onsets equal the local pitch period exactly. Noise fills the
unvoiced bands. Everything is streamed through persistent filter state so
frame boundaries leave no seams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .analysis import build_filterbank
from .audio_io import AudioSignal
from .errors import ShapeMismatchError
from .frame import FRAME_LEN, SAMPLE_RATE_HZ, MelpFrame
from .lpc import LPC_ORDER, lsf_to_lpc

SUBFRAME = FRAME_LEN // 2
MAX_PERIOD = 200  # ceil(1.25 * 160): longest jittered gap the carry must hold
JITTER_FRACTION = 0.25

# Pulse dispersion taps: 65-point DFT of an asymmetric triangle pulse
# (21-sample attack, 43-sample decay), magnitudes flattened to 1, back to
# time domain. Unit energy at the DFT bins by construction. The builder is
# kept below and a test pins this table to it.
DISPERSION_TAPS = np.array([
    -4.0870294724729461e-01, -6.7887665964826843e-02, -3.3998026439909908e-02, -1.5345690993159454e-02,
    -7.0118354302455450e-03, -1.1098455085843148e-03, +3.0311757940023150e-03, +6.3522108268801013e-03,
    +9.1305959453966325e-03, +1.1604718711010849e-02, +1.3900611862564922e-02, +1.6145672787024782e-02,
    +1.8389859681757020e-02, +2.0854825361028791e-02, +2.3347738925871470e-02, +2.6909801273013213e-02,
    +2.9495012130912254e-02, +3.8114444713449998e-02, +3.5551046673353105e-02, +7.8809581305456927e-02,
    +2.3126521198676506e-03, +8.1951886404377627e-01, -1.4065055238791982e-01, -6.0391147659183658e-02,
    -2.4289849983909300e-02, -1.2562386086743267e-02, -4.6606720984262015e-03, +3.5771282985233365e-04,
    +4.2274725111366247e-03, +7.3195346474924225e-03, +9.9839122699945364e-03, +1.2381728798258669e-02,
    +1.4654316746108098e-02, +1.6877770425029102e-02, +1.9211216839820439e-02, +2.1596119062832722e-02,
    +2.4617043899578805e-02, +2.7285920311829536e-02, +3.3235904418309557e-02, +3.4012214969842934e-02,
    +5.7274967571402623e-02, +2.8202701747763868e-02, +2.3304152032424111e-01, -1.0058676549930675e-02,
    -1.2959388066580760e-01, -3.8927134675701969e-02, -2.0665530517655222e-02, -9.2053836005778732e-03,
    -2.8889748201799230e-03, +1.7844373739478278e-03, +5.3129122923962430e-03, +8.2493679337870499e-03,
    +1.0803443720661103e-02, +1.3150592256094142e-02, +1.5390168117004381e-02, +1.7654053205711083e-02,
    +1.9953277592079044e-02, +2.2633763470917216e-02, +2.5236924997293683e-02, +2.9683535787929729e-02,
    +3.1805526470386376e-02, +4.5386806534360308e-02, +3.4950492579051272e-02, +1.2296116714882760e-01,
    -1.1475513837925042e-01,
])


def build_dispersion_taps(length: int = 65, peak: int = 21) -> np.ndarray:
    """Reference construction for DISPERSION_TAPS."""
    idx = np.arange(length)
    tri = np.where(idx <= peak, idx / peak, (length - 1 - idx) / (length - 1 - peak))
    spec = np.fft.fft(tri)
    return np.real(np.fft.ifft(spec / np.abs(spec)))


@dataclass(frozen=True)
class SynthConfig:
    enable_spectral_enhancement: bool = True
    enable_dispersion: bool = True
    ase_alpha: float = 0.5  # numerator bandwidth-scale of the enhancer
    ase_beta: float = 0.8   # denominator (pole) scale


def pulse_period_waveform(gap: int, fourier_mag: np.ndarray) -> np.ndarray:
    """One unit-RMS excitation period of `gap` samples.

    Harmonic k of the period carries fourier_mag[k-1] for k <= 10 and 1.0
    above, up to (not including) Nyquist; the result is the cosine sum, so
    sample 0 is the pulse onset.
    """
    return pulse_period_samples(np.arange(gap) / gap, float(gap), fourier_mag)


def pulse_period_samples(phase: np.ndarray, gap: float,
                         fourier_mag: np.ndarray) -> np.ndarray:
    """Cosine-sum excitation evaluated at fractional phases in [0, 1).

    Periods are placed at exact fractional sample positions; snapping each
    period to the integer grid would alternate neighbouring period lengths,
    which shifts the autocorrelation peak from the true lag toward its
    double on re-analysis.
    """
    k_max = int((gap - 1.0) // 2)  # below Nyquist for the local period
    if k_max < 1:
        return np.zeros(len(phase))
    amps = np.ones(k_max)
    amps[:min(10, k_max)] = fourier_mag[:min(10, k_max)]
    w = amps @ np.cos(2.0 * np.pi * np.outer(np.arange(1, k_max + 1), phase))
    # exact RMS of the cosine sum over one full period
    return w / np.sqrt(np.sum(amps**2) / 2.0)


def _draw_gap(pitch: float, aperiodic: bool, rng) -> float:
    gap = float(pitch)
    if aperiodic:
        gap *= 1.0 + rng.uniform(-JITTER_FRACTION, JITTER_FRACTION)
    return max(gap, 2.0)


def build_pulse_excitation(pitch: float, fourier_mag: np.ndarray,
                           aperiodic: bool, rng, n: int = FRAME_LEN) -> np.ndarray:
    """Stateless pulse excitation: n samples starting at a pulse onset."""
    out = np.zeros(n + MAX_PERIOD + 1)
    pos = 0.0
    while pos < n:
        gap = _draw_gap(pitch, aperiodic, rng)
        m = np.arange(int(np.ceil(pos)), int(np.ceil(pos + gap)))
        out[m[0]:m[0] + len(m)] = pulse_period_samples((m - pos) / gap, gap,
                                                       fourier_mag)
        pos += gap
    return out[:n]


def mix_excitation(pulse: np.ndarray, noise: np.ndarray,
                   bpvc: np.ndarray) -> np.ndarray:
    """Selector mix: voiced bands take the pulse stream, others the noise."""
    if len(pulse) != len(noise):
        raise ShapeMismatchError("pulse and noise lengths differ")
    bank = build_filterbank()
    out = np.zeros(len(pulse))
    for b in range(len(bank)):
        src = pulse if bpvc[b] else noise
        out += lfilter(bank[b], [1.0], src)
    return out


def _reflection_k1(a: np.ndarray) -> float:
    """First reflection coefficient of [1, a1..aP] via reverse Levinson."""
    cur = np.asarray(a, dtype=np.float64)
    for m in range(len(cur) - 1, 1, -1):
        k = cur[m]
        if abs(k) >= 1.0:
            return 0.0
        nxt = (cur[:m + 1] - k * cur[m::-1]) / (1.0 - k * k)
        cur = nxt[:m]
    return float(cur[1]) if len(cur) > 1 else 0.0


class SynthState:
    """All streaming memory for one decode: filters, pulse phase, RNG."""

    def __init__(self, seed: int = 0, cfg: SynthConfig = SynthConfig()):
        self.cfg = cfg
        self.bank = build_filterbank()
        self.reset(seed)

    def reset(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        nb = len(self.bank)
        ntap = self.bank.shape[1]
        self.pulse_zi = [np.zeros(ntap - 1) for _ in range(nb)]
        self.noise_zi = [np.zeros(ntap - 1) for _ in range(nb)]
        self.synth_zi = np.zeros(LPC_ORDER)
        self.ase_num_zi = np.zeros(LPC_ORDER)
        self.ase_den_zi = np.zeros(LPC_ORDER)
        self.tilt_zi = np.zeros(1)
        self.disp_zi = np.zeros(len(DISPERSION_TAPS) - 1)
        self.carry = np.zeros(MAX_PERIOD)  # pulse samples spilling past frame end
        self.next_pulse = 0.0
        self.prev: MelpFrame | None = None
        self.gain_scale = 0.0
        self.post_scale = None  # no history yet: first subframe scales uniformly


GAIN_TRANSITION = 20  # samples over which the gain scale slews per subframe


def _gain_weights(n: int, transition: int = GAIN_TRANSITION) -> np.ndarray:
    """Per-sample blend from the old scale to the new: 0 -> 1 over the
    transition, then 1 for the rest of the subframe."""
    return np.minimum(np.arange(1, n + 1) / transition, 1.0)


def _solve_ramp_scale(y: np.ndarray, s0: float, target_rms: float) -> float:
    """Scale s1 such that y scaled by (s0 -> s1 slew) hits target RMS.

    Output is s0*u + s1*v with u=y*(1-t), v=y*t for the transition weights t;
    the RMS condition is a quadratic in s1. The slew is short, so s1 barely
    depends on s0 and per-subframe forcing cannot ring across subframes. If
    no solution reaches the target (loud-to-quiet edge) fall back to the
    plain energy ratio.
    """
    n = len(y)
    t = _gain_weights(n)
    u = y * (1.0 - t)
    v = y * t
    a = float(np.dot(v, v))
    rms = np.sqrt(np.mean(y**2))
    if a <= 0.0 or rms <= 0.0:
        return 0.0
    b = 2.0 * s0 * float(np.dot(u, v))
    c = s0 * s0 * float(np.dot(u, u)) - n * target_rms * target_rms
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return target_rms / rms
    return (-b + np.sqrt(disc)) / (2.0 * a)


def _frame_excitation(state: SynthState, frame: MelpFrame) -> np.ndarray:
    """Pulse and noise streams for one frame, mixed through the filterbank."""
    prev = state.prev if state.prev is not None else frame
    buf = np.zeros(FRAME_LEN + MAX_PERIOD)
    buf[:MAX_PERIOD] += state.carry
    if frame.voiced:
        if not prev.voiced:
            state.next_pulse = 0.0  # fresh voiced onset: pulse right away
        p0 = prev.pitch_samples if prev.voiced else frame.pitch_samples
        while state.next_pulse < FRAME_LEN:
            pos = state.next_pulse
            # reach this frame's pitch at the frame midpoint, where the
            # analysis window centers, not at the frame end
            w = min((pos + FRAME_LEN / 2.0) / FRAME_LEN, 1.0)
            local_pitch = p0 + (frame.pitch_samples - p0) * w
            gap = _draw_gap(local_pitch, frame.aperiodic, state.rng)
            m = np.arange(int(np.ceil(pos)), int(np.ceil(pos + gap)))
            buf[m[0]:m[0] + len(m)] = pulse_period_samples(
                (m - pos) / gap, gap, frame.fourier_mag)
            state.next_pulse = pos + gap
    state.carry = buf[FRAME_LEN:].copy()
    state.next_pulse = max(state.next_pulse - FRAME_LEN, 0.0)
    pulse = buf[:FRAME_LEN]
    # Unit-RMS noise stream; drawn every frame so voiced/unvoiced decisions
    # do not shift the RNG stream for later frames.
    noise = state.rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), FRAME_LEN)

    mixed = np.zeros(FRAME_LEN)
    for b in range(len(state.bank)):
        taps = state.bank[b]
        pb, state.pulse_zi[b] = lfilter(taps, [1.0], pulse, zi=state.pulse_zi[b])
        nb_, state.noise_zi[b] = lfilter(taps, [1.0], noise, zi=state.noise_zi[b])
        mixed += pb if frame.bpvc[b] else nb_
    return mixed


def _enhance_subframe(state: SynthState, seg: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Adaptive spectral enhancement + tilt, RMS matched to the input."""
    cfg = state.cfg
    scale_num = cfg.ase_alpha ** np.arange(LPC_ORDER + 1)
    scale_den = cfg.ase_beta ** np.arange(LPC_ORDER + 1)
    rms_in = np.sqrt(np.mean(seg**2))
    y, state.ase_num_zi = lfilter(a * scale_num, [1.0], seg, zi=state.ase_num_zi)
    y, state.ase_den_zi = lfilter([1.0], a * scale_den, y, zi=state.ase_den_zi)
    # The pole/zero cascade whitens some spectral tilt; a one-tap lowpass
    # with the first reflection coefficient puts it back.
    k1 = _reflection_k1(a)
    mu = max(-0.5 * k1, 0.0)
    y, state.tilt_zi = lfilter([1.0, mu], [1.0], y, zi=state.tilt_zi)
    rms_out = np.sqrt(np.mean(y**2))
    if rms_out <= 0:
        state.post_scale = 1.0
        return y
    if state.post_scale is None:
        scale = np.full(len(y), rms_in / rms_out)
        state.post_scale = float(scale[0])
    else:
        end = _solve_ramp_scale(y, state.post_scale, rms_in)
        t = _gain_weights(len(y))
        scale = state.post_scale * (1.0 - t) + end * t
        state.post_scale = end
    return y * scale


def synthesize_with_state(frames, state: SynthState) -> AudioSignal:
    for f in frames:
        f.validate()
    out = np.empty(FRAME_LEN * len(frames))
    for i, frame in enumerate(frames):
        prev = state.prev if state.prev is not None else frame
        mixed = _frame_excitation(state, frame)
        frame_out = np.empty(FRAME_LEN)
        for s in range(2):
            w = (s + 0.5) / 2.0
            lsf = (1.0 - w) * prev.lsf + w * frame.lsf
            a = lsf_to_lpc(lsf)
            seg = mixed[s * SUBFRAME:(s + 1) * SUBFRAME]
            y, state.synth_zi = lfilter([1.0], a, seg, zi=state.synth_zi)
            if state.cfg.enable_spectral_enhancement:
                y = _enhance_subframe(state, y, a)
            if state.cfg.enable_dispersion:
                y, state.disp_zi = lfilter(DISPERSION_TAPS, [1.0], y,
                                           zi=state.disp_zi)
            # Impose the transmitted gain last so nothing downstream can
            # shift energy across the subframe it was forced on.
            target_rms = 10.0 ** (frame.gain_db[s] / 20.0)
            end_scale = _solve_ramp_scale(y, state.gain_scale, target_rms)
            t = _gain_weights(SUBFRAME)
            scale = state.gain_scale * (1.0 - t) + end_scale * t
            state.gain_scale = end_scale
            frame_out[s * SUBFRAME:(s + 1) * SUBFRAME] = y * scale
        out[i * FRAME_LEN:(i + 1) * FRAME_LEN] = frame_out
        state.prev = frame
    return AudioSignal(out, SAMPLE_RATE_HZ)


def synthesize(frames, seed: int = 0,
               cfg: SynthConfig = SynthConfig()) -> AudioSignal:
    """Decode a frame sequence; deterministic for a given seed."""
    return synthesize_with_state(frames, SynthState(seed, cfg))


def apply_post_filters(synth_out: np.ndarray, a: np.ndarray,
                       cfg: SynthConfig = SynthConfig()) -> np.ndarray:
    """One-shot post filter cascade for a single segment with one LPC."""
    y = np.asarray(synth_out, dtype=np.float64)
    if cfg.enable_spectral_enhancement:
        state = SynthState(0, cfg)
        y = _enhance_subframe(state, y, np.asarray(a, dtype=np.float64))
    if cfg.enable_dispersion:
        y = lfilter(DISPERSION_TAPS, [1.0], y)
    return y

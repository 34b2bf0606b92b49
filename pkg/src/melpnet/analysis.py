"""Parameter extraction: speech in, one MelpFrame per 180 samples out.

Each frame gets a 520-sample context window centered on it (zero padded at
the utterance edges), wide enough for a 200-sample correlation window at the
maximum pitch lag of 160.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import firwin, lfilter

from . import lpc
from .audio_io import AudioSignal
from .errors import SampleRateError, ShapeMismatchError
from .frame import AnalysisConfig, MelpFrame

CONTEXT_LEN = 520
CORR_WINDOW = 200
# Offset of the correlation reference window inside the context: the window
# plus the largest lag (160) must still fit, so it sits left of center.
CORR_START = (CONTEXT_LEN - (CORR_WINDOW + 160)) // 2
FILTERBANK_TAPS = 31


def build_filterbank(cfg: AnalysisConfig = AnalysisConfig()) -> np.ndarray:
    """Five FIR bandpass filters that sum exactly to a unit impulse.

    Built as differences of linear-phase lowpass prototypes at the interior
    band edges; the top band is the complement, so the stack is a perfect
    (if gently overlapping) partition of the spectrum.
    """
    edges = cfg.band_edges_hz
    nyq = cfg.sample_rate_hz / 2.0
    lowpass = [firwin(FILTERBANK_TAPS, f / nyq) for f in edges[1:-1]]
    delta = np.zeros(FILTERBANK_TAPS)
    delta[FILTERBANK_TAPS // 2] = 1.0
    bank = [lowpass[0]]
    for i in range(1, len(lowpass)):
        bank.append(lowpass[i] - lowpass[i - 1])
    bank.append(delta - lowpass[-1])
    return np.stack(bank)


def frame_context(samples: np.ndarray, frame_index: int,
                  frame_len: int = 180) -> np.ndarray:
    """520 samples centered on the frame, zero padded past the ends."""
    center = frame_index * frame_len + frame_len // 2
    start = center - CONTEXT_LEN // 2
    out = np.zeros(CONTEXT_LEN)
    lo = max(start, 0)
    hi = min(start + CONTEXT_LEN, len(samples))
    if hi > lo:
        out[lo - start:hi - start] = samples[lo:hi]
    return out


def _normalized_autocorr(ctx: np.ndarray, lags: np.ndarray) -> np.ndarray:
    """r(lag) over the fixed reference window, guarded against silence."""
    ref = ctx[CORR_START:CORR_START + CORR_WINDOW]
    e_ref = float(np.dot(ref, ref))
    sq = np.concatenate([[0.0], np.cumsum(ctx * ctx)])
    nums = np.correlate(ctx, ref, mode="valid")  # nums[i] = <ref, ctx[i:i+W]>
    out = np.zeros(len(lags))
    for j, lag in enumerate(lags):
        i = CORR_START + int(lag)
        e_lag = sq[i + CORR_WINDOW] - sq[i]
        denom = e_ref * e_lag
        if denom > 0.0:
            out[j] = nums[i] / np.sqrt(denom)
    return out


def _refine_peak(r: np.ndarray, center: int):
    """Fractional peak near a grid index: parabolic vertex for the
    position, windowed-sinc interpolation of r for the value.

    The grid samples of a narrow correlation peak can all sit well below
    its true height (the worst case is a peak centered between two lags),
    so comparing raw grid values between pitch candidates is biased toward
    whichever candidate happens to fall nearer the grid.
    """
    center = int(np.clip(center, 1, len(r) - 2))
    window = r[center - 1:center + 2]
    k = center - 1 + int(np.argmax(window))
    delta = 0.0
    if 0 < k < len(r) - 1:
        y0, y1, y2 = r[k - 1], r[k], r[k + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom < 0.0:
            delta = float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))
    tau = k + delta
    taps = np.arange(max(int(tau) - 5, 0), min(int(tau) + 7, len(r)))
    value = float(np.dot(r[taps], np.sinc(tau - taps)))
    return tau, value


def estimate_pitch(ctx: np.ndarray, cfg: AnalysisConfig = AnalysisConfig()):
    """Normalized-autocorrelation pitch with fractional refinement.

    Returns (pitch_samples, strength). Among the global peak and its
    integer sub-multiples, the smallest lag whose interpolated peak comes
    within 68% of the best is taken, which resolves period-doubling
    ambiguities toward the true fundamental; glides and jitter depress the
    true lag's correlation well below its double, hence the loose gate.
    The occasional false rescue this lets through (a dominant second
    harmonic can correlate at half the true period) is the caller's
    problem: the contour tracker repairs isolated slips.
    """
    lo, hi = int(cfg.pitch_min), int(cfg.pitch_max)
    lags = np.arange(lo, hi + 1)
    r = _normalized_autocorr(ctx, lags)
    best = int(np.argmax(r))
    if r[best] <= 0.0:
        return float(lo), 0.0
    tau_best, s_best = _refine_peak(r, best)
    tau, strength = tau_best, s_best
    for div in range(int(round(tau_best + lo)) // lo, 1, -1):
        cand = (tau_best + lo) / div - lo
        if cand < 0:
            continue
        tau_c, s_c = _refine_peak(r, int(round(cand)))
        if s_c >= 0.68 * s_best:
            tau, strength = tau_c, s_c
            break
    pitch = float(np.clip(tau + lo, cfg.pitch_min, cfg.pitch_max))
    return pitch, float(np.clip(strength, 0.0, 1.0))


def _pitch_candidates(ctx: np.ndarray, cfg: AnalysisConfig):
    """Plausible pitch lags for one frame, strongest first.

    Returns [(pitch_samples, strength), ...]: the global autocorrelation
    peak, its integer sub-multiples, and the next-best local maxima. The
    sub-multiples matter because a glide or jitter can depress the true
    lag's peak below its double; the extra local maxima matter in noise,
    where the true lag often survives as a secondary peak after additive
    noise has pushed the global one to a junk lag. The tracker picks
    between all of them with the benefit of neighbouring frames.
    """
    lo, hi = int(cfg.pitch_min), int(cfg.pitch_max)
    r = _normalized_autocorr(ctx, np.arange(lo, hi + 1))
    best = int(np.argmax(r))
    if r[best] <= 0.0:
        return [(float(lo), 0.0)]
    tau_b, s_b = _refine_peak(r, best)
    cands = [(float(np.clip(tau_b + lo, lo, hi)), max(float(s_b), 0.0))]
    period = tau_b + lo
    for div in range(2, int(round(period)) // lo + 1):
        idx = period / div - lo
        if idx < 0:
            continue
        tau_c, s_c = _refine_peak(r, int(round(idx)))
        if s_c >= 0.3 * s_b:
            cands.append((float(np.clip(tau_c + lo, lo, hi)),
                          max(float(s_c), 0.0)))
    interior = np.nonzero((r[1:-1] > r[:-2]) & (r[1:-1] >= r[2:]))[0] + 1
    for idx in interior[np.argsort(r[interior])[::-1][:5]]:
        if r[idx] < 0.5 * s_b:
            break
        tau_c, s_c = _refine_peak(r, int(idx))
        pitch = float(np.clip(tau_c + lo, lo, hi))
        ratio = pitch / period
        # multiples of the main peak are its own family (the period-doubled
        # path must stay out of the set or it shadows the true contour)
        if abs(ratio - round(ratio)) < 0.15 and round(ratio) >= 2:
            continue
        if all(abs(pitch - p) > 0.5 for p, _ in cands):
            cands.append((pitch, max(float(s_c), 0.0)))
    return cands


def _track_pitch(cand_sets) -> np.ndarray:
    """Best path through per-frame pitch candidates.

    Maximizes summed correlation strength minus a penalty on log-pitch
    jumps between consecutive frames. An octave slip costs about 2.1,
    far more than any single frame's strength advantage, while a real
    glide costs well under 0.2 per frame, so isolated halvings and
    doublings snap back without touching legitimate contours. Frames
    with no usable peak break the chain instead of binding it.
    """
    jump_weight = 3.0
    scores, backs = [], []
    prev = None
    for cands in cand_sets:
        pitch = np.array([p for p, _ in cands])
        strength = np.array([s for _, s in cands])
        back = np.full(len(cands), -1)
        total = strength.copy()
        if prev is not None:
            p_pitch, p_total, p_raw = prev
            # link on raw per-frame strength: cumulative scores drift with
            # path costs and would break chains in rough voiced stretches
            if strength.max() >= 0.15 and p_raw >= 0.15:
                cost = jump_weight * np.abs(
                    np.log(pitch[:, None] / p_pitch[None, :]))
                carried = p_total[None, :] - cost
                back = np.argmax(carried, axis=1)
                total = strength + carried[np.arange(len(cands)), back]
            else:
                total = strength + p_total.max()
                back = np.full(len(cands), int(np.argmax(p_total)))
        scores.append(total)
        backs.append(back)
        prev = (pitch, total, float(strength.max()))
    out = np.empty(len(cand_sets))
    j = int(np.argmax(scores[-1]))
    for k in range(len(cand_sets) - 1, -1, -1):
        out[k] = cand_sets[k][j][0]
        j = int(backs[k][j]) if backs[k][j] >= 0 else 0
    return out


def band_correlations(ctx: np.ndarray, pitch: float,
                      cfg: AnalysisConfig = AnalysisConfig(),
                      bank: np.ndarray | None = None) -> np.ndarray:
    """Per-band normalized autocorrelation near the pitch lag.

    The maximum over lags within +-3 of the (rounded) pitch absorbs small
    band-dependent phase shifts.
    """
    if bank is None:
        bank = build_filterbank(cfg)
    center = int(round(pitch))
    lags = np.arange(max(int(cfg.pitch_min), center - 3),
                     min(int(cfg.pitch_max), center + 3) + 1)
    ref = ctx[CORR_START:CORR_START + CORR_WINDOW]
    e_full = float(np.dot(ref, ref))
    out = np.empty(len(bank))
    for b, taps in enumerate(bank):
        filtered = lfilter(taps, [1.0], ctx)
        bref = filtered[CORR_START:CORR_START + CORR_WINDOW]
        # A band holding only filter leakage (stopband or passband ripple)
        # is still perfectly periodic, so correlation alone would call it
        # voiced; require real energy (>= -40 dB of the full signal) first.
        if float(np.dot(bref, bref)) < 1e-4 * e_full:
            out[b] = 0.0
        else:
            out[b] = np.max(_normalized_autocorr(filtered, lags))
    return out


def bandpass_voicing(ctx: np.ndarray, pitch: float,
                     cfg: AnalysisConfig = AnalysisConfig()) -> np.ndarray:
    """Five voicing flags; flag 0 is the frame's voiced/unvoiced decision."""
    corrs = band_correlations(ctx, pitch, cfg)
    flags = corrs >= cfg.voicing_threshold
    if not flags[0]:
        flags[:] = False
    return flags


def fourier_magnitudes(ctx: np.ndarray, pitch: float,
                       a: np.ndarray | None = None,
                       cfg: AnalysisConfig = AnalysisConfig()) -> np.ndarray:
    """First 10 pitch-harmonic magnitudes of the LPC residual, unit RMS.

    Harmonics at or beyond Nyquist are pinned to 1. Unvoiced callers skip
    this and use all-ones directly.
    """
    if a is None:
        a = _context_lpc(ctx)
    residual = lfilter(a, [1.0], ctx)
    seg_len = int(np.clip(2 * round(pitch), 80, 320))
    start = (CONTEXT_LEN - seg_len) // 2
    seg = residual[start:start + seg_len] * np.hanning(seg_len)
    omega = 2.0 * np.pi / pitch
    mags = np.ones(10)
    n = np.arange(seg_len)
    n_measured = 0
    for k in range(1, 11):
        if 2 * k >= pitch:  # harmonic k at or beyond Nyquist
            break
        mags[k - 1] = np.abs(np.dot(seg, np.exp(-1j * k * omega * n)))
        n_measured = k
    if n_measured == 0:
        return np.ones(10)
    rms = np.sqrt(np.mean(mags[:n_measured] ** 2))
    if rms <= 0.0:
        return np.ones(10)
    # Normalizing only the measured block keeps the all-ones tail at exactly
    # 1, and both blocks have unit mean square, so total RMS is 1 regardless.
    mags[:n_measured] = np.maximum(mags[:n_measured] / rms, 1e-6)
    return mags


def gain_pair(frame_samples: np.ndarray,
              cfg: AnalysisConfig = AnalysisConfig()) -> np.ndarray:
    """Per-subframe energy in dB: 10*log10(mean square + 1e-10), floored."""
    x = np.asarray(frame_samples, dtype=np.float64)
    half = len(x) // 2
    out = np.empty(2)
    for i, seg in enumerate((x[:half], x[half:])):
        out[i] = 10.0 * np.log10(np.mean(seg**2) + 1e-10)
    return np.maximum(out, cfg.gain_floor_db)


def _context_lpc(ctx: np.ndarray) -> np.ndarray:
    start = (CONTEXT_LEN - 200) // 2
    return lpc.lpc_from_frame(ctx[start:start + 200])


def analyze_utterance(signal: AudioSignal,
                      cfg: AnalysisConfig = AnalysisConfig()) -> list[MelpFrame]:
    """Extract the six parameter groups for every full 180-sample frame."""
    if signal.sample_rate_hz != cfg.sample_rate_hz:
        raise SampleRateError(
            f"analysis needs {cfg.sample_rate_hz} Hz input, got {signal.sample_rate_hz}")
    x = signal.samples
    n_frames = len(x) // cfg.frame_len
    if n_frames == 0:
        raise ShapeMismatchError("input shorter than one frame")
    bank = build_filterbank(cfg)
    frame_energy = np.array([
        float(np.mean(x[k * cfg.frame_len:(k + 1) * cfg.frame_len] ** 2))
        for k in range(n_frames)])
    energy_gate = float(frame_energy.max()) * 10.0 ** (-cfg.silence_floor_db / 10.0)
    contexts = [frame_context(x, k, cfg.frame_len) for k in range(n_frames)]
    cand_sets = []
    for k, ctx in enumerate(contexts):
        cands = _pitch_candidates(ctx, cfg)
        if frame_energy[k] <= energy_gate:
            # silence and ringing tails get no say in the pitch contour
            cands = [(cands[0][0], 0.0)]
        cand_sets.append(cands)
    smoothed = _track_pitch(cand_sets)
    frames = []
    for k in range(n_frames):
        ctx = contexts[k]
        a = _context_lpc(ctx)
        lsf = lpc.ensure_ascending(lpc.lpc_to_lsf(a))
        pitch = float(smoothed[k])
        corrs = band_correlations(ctx, pitch, cfg, bank)
        flags = corrs >= cfg.voicing_threshold
        if frame_energy[k] <= energy_gate:
            flags[:] = False
        voiced = bool(flags[0])
        if not voiced:
            flags[:] = False
        gain = gain_pair(x[k * cfg.frame_len:(k + 1) * cfg.frame_len], cfg)
        if voiced:
            fourier = fourier_magnitudes(ctx, pitch, a, cfg)
            aperiodic = corrs[0] < cfg.aperiodic_threshold
        else:
            pitch = 0.0
            fourier = np.ones(10)
            aperiodic = False
        frames.append(MelpFrame(lsf, gain, flags, pitch, aperiodic,
                                fourier).validate())
    return frames

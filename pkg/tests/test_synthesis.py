import numpy as np
import pytest

from melpnet import analysis, synthesis
from melpnet.audio_io import AudioSignal
from melpnet.errors import FrameInvariantError
from melpnet.frame import MelpFrame
from melpnet.synthesis import (
    DISPERSION_TAPS,
    SynthConfig,
    build_dispersion_taps,
    build_pulse_excitation,
    mix_excitation,
    synthesize,
)

LSF_A = np.array([0.25, 0.45, 0.75, 1.05, 1.35, 1.65, 1.95, 2.25, 2.55, 2.85])


def voiced_frame(pitch=80.0, gain=(-18.0, -18.0), aperiodic=False,
                 bpvc=(1, 1, 1, 1, 1), lsf=LSF_A):
    return MelpFrame(lsf, np.array(gain), np.array(bpvc, bool),
                     pitch, aperiodic, np.ones(10))


def unvoiced_frame(gain=(-25.0, -25.0), lsf=LSF_A):
    return MelpFrame(lsf, np.array(gain), np.zeros(5, bool),
                     0.0, False, np.ones(10))


def test_output_length_and_rate():
    frames = [voiced_frame() for _ in range(10)]
    sig = synthesize(frames, seed=1)
    assert sig.sample_rate_hz == 8000
    assert len(sig) == 1800


def test_determinism():
    frames = [voiced_frame(pitch=70.0, aperiodic=True) for _ in range(20)]
    a = synthesize(frames, seed=9)
    b = synthesize(frames, seed=9)
    c = synthesize(frames, seed=10)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_invalid_frame_rejected():
    bad = voiced_frame(pitch=500.0)
    with pytest.raises(FrameInvariantError):
        synthesize([bad], seed=0)


def test_pulse_gaps_exact_without_jitter():
    rng = np.random.default_rng(0)
    exc = build_pulse_excitation(63.0, np.ones(10), False, rng, n=800)
    onsets = _pulse_onsets(exc, 63)
    assert np.all(np.diff(onsets) == 63)


def test_pulse_gaps_jittered_within_25pct():
    rng = np.random.default_rng(0)
    for pitch in (40.0, 81.0, 157.0):
        exc = build_pulse_excitation(pitch, np.ones(10), True, rng, n=4000)
        gaps = np.diff(_pulse_onsets(exc, pitch))
        assert np.all(gaps >= 0.75 * pitch)
        assert np.all(gaps <= 1.25 * pitch)
        assert len(set(gaps.tolist())) > 1  # jitter actually varies


def _pulse_onsets(exc, pitch):
    # Pulse onsets are the periodic peaks; detect as local maxima above
    # half the global peak.
    thresh = 0.5 * exc.max()
    idx = np.nonzero((exc[1:-1] > exc[:-2]) & (exc[1:-1] >= exc[2:])
                     & (exc[1:-1] > thresh))[0] + 1
    # Merge near-duplicates closer than half a period.
    keep = [idx[0]]
    for i in idx[1:]:
        if i - keep[-1] > pitch / 2:
            keep.append(i)
    return np.array(keep)


def test_pulse_flat_magnitudes_give_flat_harmonics():
    rng = np.random.default_rng(0)
    exc = build_pulse_excitation(40.0, np.ones(10), False, rng, n=400)
    spec = np.abs(np.fft.rfft(exc[:40]))
    harm = spec[1:20]  # 19 sub-Nyquist harmonics of one 40-sample period
    assert harm.max() / harm.min() < 1.01


def test_pulse_carries_fourier_shape():
    rng = np.random.default_rng(0)
    mags = np.linspace(2.0, 0.3, 10)
    exc = build_pulse_excitation(50.0, mags, False, rng, n=500)
    spec = np.abs(np.fft.rfft(exc[:50]))
    measured = spec[1:11]
    ratio = measured / mags
    assert ratio.max() / ratio.min() < 1.01  # proportional to requested mags


def test_mix_excitation_selector():
    rng = np.random.default_rng(1)
    pulse = rng.standard_normal(1000)
    noise = rng.standard_normal(1000)
    all_voiced = mix_excitation(pulse, noise, np.ones(5, bool))
    all_noise = mix_excitation(pulse, noise, np.zeros(5, bool))
    # Full-band filtered versions: filterbank sums to a delayed delta.
    delay = analysis.FILTERBANK_TAPS // 2
    assert np.allclose(all_voiced[delay:], pulse[:-delay], atol=1e-9)
    assert np.allclose(all_noise[delay:], noise[:-delay], atol=1e-9)


def test_filterbank_partitions_energy():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(20000)
    bank = analysis.build_filterbank()
    from scipy.signal import lfilter
    total = sum(np.sum(lfilter(t, [1.0], x) ** 2) for t in bank)
    ratio_db = 10 * np.log10(total / np.sum(x**2))
    assert abs(ratio_db) < 1.0


def test_unvoiced_synthesis_reanalyzes_unvoiced():
    frames = [unvoiced_frame(gain=(-20.0, -20.0)) for _ in range(44)]
    sig = synthesize(frames, seed=3)
    re = analysis.analyze_utterance(sig)
    voiced = sum(f.voiced for f in re)
    assert voiced <= 2  # ~0% band-1 voicing


def test_voiced_synthesis_round_trips_pitch():
    frames = [voiced_frame(pitch=80.0) for _ in range(44)]
    sig = synthesize(frames, seed=3)
    re = analysis.analyze_utterance(sig)
    interior = re[2:-2]
    voiced = [f for f in interior if f.voiced]
    assert len(voiced) >= 0.95 * len(interior)
    for f in voiced:
        assert f.pitch_samples == pytest.approx(80.0, abs=2.0)


def test_gain_6db_doubles_rms():
    base = [voiced_frame(gain=(-20.0, -20.0)) for _ in range(30)]
    loud = [voiced_frame(gain=(-20.0 + 20 * np.log10(2.0),) * 2)
            for _ in range(30)]
    quiet_rms = np.sqrt(np.mean(synthesize(base, seed=4).samples[360:] ** 2))
    loud_rms = np.sqrt(np.mean(synthesize(loud, seed=4).samples[360:] ** 2))
    assert loud_rms / quiet_rms == pytest.approx(2.0, rel=0.05)


def test_gain_round_trip():
    frames = [voiced_frame(gain=(-18.0, -18.0)) for _ in range(44)]
    sig = synthesize(frames, seed=5)
    re = analysis.analyze_utterance(sig)
    for f in re[2:-2]:
        assert np.all(np.abs(f.gain_db - (-18.0)) < 1.5)


def test_smooth_params_no_discontinuity():
    frames = []
    for i in range(40):
        pitch = 70.0 + 10.0 * np.sin(i / 6.0)
        gain = -20.0 + 1.5 * np.sin(i / 5.0)
        frames.append(voiced_frame(pitch=pitch, gain=(gain, gain)))
    x = synthesize(frames, seed=6).samples
    jumps = np.abs(np.diff(x))
    # No single-sample jump should dwarf the typical signal swing.
    assert jumps.max() < 8.0 * np.sqrt(np.mean(x**2))


def test_dispersion_table_matches_construction():
    assert np.allclose(DISPERSION_TAPS, build_dispersion_taps(), atol=1e-15)


def test_dispersion_energy_preserving_on_noise():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(50000)
    y = np.convolve(x, DISPERSION_TAPS)
    ratio_db = 10 * np.log10(np.sum(y**2) / np.sum(x**2))
    assert abs(ratio_db) < 0.5


def test_post_filters_flat_lpc_identity():
    x = np.random.default_rng(8).standard_normal(500)
    flat = np.zeros(11)
    flat[0] = 1.0
    cfg = SynthConfig(enable_dispersion=False)
    y = synthesis.apply_post_filters(x, flat, cfg)
    assert np.allclose(y, x, atol=1e-12)


def test_post_filters_preserve_rms():
    from melpnet import lpc as lpcmod
    rng = np.random.default_rng(9)
    x = rng.standard_normal(2000)
    a = lpcmod.lsf_to_lpc(LSF_A)
    y = synthesis.apply_post_filters(x, a)
    ratio_db = 20 * np.log10(np.sqrt(np.mean(y**2)) / np.sqrt(np.mean(x**2)))
    assert abs(ratio_db) < 1.0


def test_post_filter_bypass_is_exact():
    x = np.random.default_rng(10).standard_normal(300)
    a = np.zeros(11)
    a[0] = 1.0
    a[1] = -0.5
    off = SynthConfig(enable_spectral_enhancement=False, enable_dispersion=False)
    assert np.array_equal(synthesis.apply_post_filters(x, a, off), x)


def test_bypass_config_in_full_synthesis():
    frames = [voiced_frame() for _ in range(10)]
    on = synthesize(frames, seed=11)
    off = synthesize(frames, seed=11,
                     cfg=SynthConfig(enable_spectral_enhancement=False,
                                     enable_dispersion=False))
    assert not np.array_equal(on.samples, off.samples)
    again = synthesize(frames, seed=11,
                       cfg=SynthConfig(enable_spectral_enhancement=False,
                                       enable_dispersion=False))
    assert np.array_equal(off.samples, again.samples)


def test_voicing_transition_stable():
    frames = ([unvoiced_frame() for _ in range(5)]
              + [voiced_frame(pitch=60.0) for _ in range(5)]
              + [unvoiced_frame() for _ in range(5)])
    sig = synthesize(frames, seed=12)
    assert np.all(np.isfinite(sig.samples))
    assert len(sig) == 15 * 180

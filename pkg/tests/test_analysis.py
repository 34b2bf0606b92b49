import numpy as np
import pytest
from scipy.signal import lfilter

from melpnet import analysis, lpc
from melpnet.analysis import AnalysisConfig, analyze_utterance, frame_context
from melpnet.audio_io import AudioSignal
from melpnet.errors import FrameInvariantError, SampleRateError, ShapeMismatchError
from melpnet.frame import MelpFrame

CFG = AnalysisConfig()


def sine(freq_hz, n=8000, amp=0.4, fs=8000):
    return amp * np.sin(2 * np.pi * freq_hz * np.arange(n) / fs)


def pulse_train(period, n=8000, amp=0.8):
    x = np.zeros(n)
    x[::period] = amp
    return x


VOICED_LSF = np.array([0.25, 0.45, 0.75, 1.05, 1.35, 1.65, 1.95, 2.25, 2.55, 2.85])


def synthetic_voiced(n=8000, period=80):
    """Pulse train through a fixed all-pole filter: crude but voiced speech."""
    a = lpc.lsf_to_lpc(VOICED_LSF)
    return lfilter([1.0], a, pulse_train(period, n))


def test_frame_count_one_second():
    frames = analyze_utterance(AudioSignal(sine(200.0), 8000))
    assert len(frames) == 44


def test_short_input_rejected():
    with pytest.raises(ShapeMismatchError):
        analyze_utterance(AudioSignal(np.zeros(100), 8000))


def test_wrong_rate_rejected():
    with pytest.raises(SampleRateError):
        analyze_utterance(AudioSignal(np.zeros(16000), 16000))


def test_silence_all_unvoiced_floor_gain():
    frames = analyze_utterance(AudioSignal(np.zeros(1800), 8000))
    assert len(frames) == 10
    for f in frames:
        assert not f.bpvc.any()
        assert np.all(f.gain_db == CFG.gain_floor_db)
        assert f.pitch_samples == 0.0
        assert np.all(f.fourier_mag == 1.0)


def test_pitch_200hz_sine():
    ctx = frame_context(sine(200.0), 20)
    pitch, strength = analysis.estimate_pitch(ctx)
    assert pitch == pytest.approx(40.0, abs=0.5)
    assert strength > 0.9


def test_pitch_amplitude_invariant():
    x = synthetic_voiced()
    ctx = frame_context(x, 15)
    p1, s1 = analysis.estimate_pitch(ctx)
    p2, s2 = analysis.estimate_pitch(4.0 * ctx)
    assert p1 == p2
    assert s1 == s2


def test_pitch_halving_resolved():
    # Every harmonic of 100 Hz correlates at lag 160 too; the sub-multiple
    # rule must pick 80.
    x = synthetic_voiced(period=80)
    ctx = frame_context(x, 20)
    pitch, _ = analysis.estimate_pitch(ctx)
    assert pitch == pytest.approx(80.0, abs=1.0)


def test_pitch_white_noise_weak():
    weak = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ctx = frame_context(0.3 * rng.standard_normal(2000), 5)
        _, strength = analysis.estimate_pitch(ctx)
        if strength < 0.4:
            weak += 1
    assert weak >= 90


def test_interior_frames_track_pulse_train_pitch():
    frames = analyze_utterance(AudioSignal(synthetic_voiced(period=80), 8000))
    interior = frames[4:-4]
    voiced = [f for f in interior if f.voiced]
    assert len(voiced) >= 0.9 * len(interior)
    for f in voiced:
        assert f.pitch_samples == pytest.approx(80.0, abs=1.0)


def test_filterbank_sums_to_delta():
    bank = analysis.build_filterbank()
    total = bank.sum(axis=0)
    delta = np.zeros(analysis.FILTERBANK_TAPS)
    delta[analysis.FILTERBANK_TAPS // 2] = 1.0
    assert np.allclose(total, delta, atol=1e-12)


def test_voicing_200hz_low_bands_only():
    ctx = frame_context(sine(200.0), 20)
    flags = analysis.bandpass_voicing(ctx, 40.0)
    assert flags[0]
    assert not flags[3] and not flags[4]


def test_voicing_white_noise_unvoiced():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        ctx = frame_context(0.3 * rng.standard_normal(2000), 5)
        pitch, _ = analysis.estimate_pitch(ctx)
        if not analysis.bandpass_voicing(ctx, pitch).any():
            hits += 1
    assert hits >= 18


def test_voicing_silence():
    assert not analysis.bandpass_voicing(np.zeros(520), 80.0).any()


def test_voicing_band1_gates_the_rest():
    # Energy only above 2 kHz: band 1 is silent, so every flag must clear.
    x = sine(2500.0)
    ctx = frame_context(x, 20)
    flags = analysis.bandpass_voicing(ctx, 40.0)
    assert not flags.any()


def test_fourier_unvoiced_convention():
    frames = analyze_utterance(AudioSignal(0.01 * np.random.default_rng(0).standard_normal(1800), 8000))
    for f in frames:
        if not f.voiced:
            assert np.all(f.fourier_mag == 1.0)


def test_fourier_flat_for_impulse_train():
    # Feed the impulse train directly: its own LPC is near-flat, so the
    # residual keeps the flat harmonic structure.
    ctx = frame_context(pulse_train(40, 4000), 10)
    mags = analysis.fourier_magnitudes(ctx, 40.0)
    assert mags.max() / mags.min() < 1.8


def test_fourier_unit_rms():
    x = synthetic_voiced()
    for k in (5, 10, 15):
        ctx = frame_context(x, k)
        mags = analysis.fourier_magnitudes(ctx, 80.0)
        assert np.sqrt(np.mean(mags**2)) == pytest.approx(1.0, abs=1e-6)
        assert np.all(mags > 0)


def test_fourier_nyquist_padding():
    # Pitch 20 -> harmonics at k*400 Hz; the 10th also sits exactly at
    # Nyquist and must be pinned to 1.
    x = synthetic_voiced(period=20)
    ctx = frame_context(x, 10)
    mags = analysis.fourier_magnitudes(ctx, 20.0)
    assert mags[9] == 1.0


def test_gain_unit_rms_zero_db():
    x = np.ones(180)
    g = analysis.gain_pair(x)
    assert g[0] == pytest.approx(0.0, abs=1e-4)
    assert g[1] == pytest.approx(0.0, abs=1e-4)


def test_gain_silence_floor():
    assert np.all(analysis.gain_pair(np.zeros(180)) == CFG.gain_floor_db)


def test_gain_doubling_adds_6db():
    rng = np.random.default_rng(5)
    x = 0.2 * rng.standard_normal(180)
    g1 = analysis.gain_pair(x)
    g2 = analysis.gain_pair(2.0 * x)
    assert np.allclose(g2 - g1, 20 * np.log10(2.0), atol=1e-3)


def test_frame_invariants_on_varied_corpus():
    rng = np.random.default_rng(8)
    signals = [
        synthetic_voiced(),
        sine(150.0) + 0.05 * rng.standard_normal(8000),
        0.3 * rng.standard_normal(8000),
        np.zeros(1800),
    ]
    for x in signals:
        for f in analyze_utterance(AudioSignal(x, 8000)):
            f.validate()


def test_melpframe_validate_catches_bad_frames():
    good = MelpFrame(np.linspace(0.2, 2.9, 10), np.zeros(2),
                     np.zeros(5, bool), 0.0, False, np.ones(10))
    good.validate()
    bad_lsf = MelpFrame(np.linspace(2.9, 0.2, 10), np.zeros(2),
                        np.zeros(5, bool), 0.0, False, np.ones(10))
    with pytest.raises(FrameInvariantError):
        bad_lsf.validate()
    bad_pitch = MelpFrame(np.linspace(0.2, 2.9, 10), np.zeros(2),
                          np.array([1, 0, 0, 0, 0], bool), 500.0, False,
                          np.ones(10))
    with pytest.raises(FrameInvariantError):
        bad_pitch.validate()
    bad_mag = MelpFrame(np.linspace(0.2, 2.9, 10), np.zeros(2),
                        np.zeros(5, bool), 0.0, False, np.zeros(10))
    with pytest.raises(FrameInvariantError):
        bad_mag.validate()


def test_analysis_deterministic():
    x = synthetic_voiced() + 0.01 * np.random.default_rng(2).standard_normal(8000)
    f1 = analyze_utterance(AudioSignal(x, 8000))
    f2 = analyze_utterance(AudioSignal(x, 8000))
    for a, b in zip(f1, f2):
        assert np.array_equal(a.lsf, b.lsf)
        assert a.pitch_samples == b.pitch_samples
        assert np.array_equal(a.bpvc, b.bpvc)

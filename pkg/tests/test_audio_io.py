import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melpnet import audio_io
from melpnet.audio_io import AudioSignal, MixSpec, mix_at_snr, read_wav, write_wav
from melpnet.errors import (
    SampleRateError,
    WavChannelError,
    WavFormatError,
    ZeroPowerError,
)


def _write_raw_wav(path, channels=1, sampwidth=2, rate=8000, n=100):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(sampwidth)
        w.setframerate(rate)
        w.writeframes(b"\x00" * (n * channels * sampwidth))


def test_pcm_scaling_known_values(tmp_path):
    path = tmp_path / "x.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(8000)
        w.writeframes(np.array([16384, -32768, 0, 32767], "<i2").tobytes())
    sig = read_wav(path)
    assert sig.sample_rate_hz == 8000
    assert sig.samples[0] == 0.5
    assert sig.samples[1] == -1.0
    assert sig.samples[2] == 0.0
    assert sig.samples[3] == pytest.approx(32767 / 32768)


def test_write_read_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    pcm = rng.integers(-32768, 32768, size=500).astype(np.int64)
    sig = AudioSignal(pcm / 32768.0, 8000)
    path = tmp_path / "rt.wav"
    write_wav(sig, path)
    back = read_wav(path)
    assert np.array_equal(back.samples * 32768.0, pcm.astype(np.float64))


def test_write_full_scale_saturates(tmp_path):
    path = tmp_path / "fs.wav"
    write_wav(AudioSignal(np.array([1.0, -1.0]), 8000), path)
    with wave.open(str(path), "rb") as w:
        raw = np.frombuffer(w.readframes(2), "<i2")
    assert raw[0] == 32767
    assert raw[1] == -32768


def test_write_clips_out_of_range_with_warning(tmp_path):
    path = tmp_path / "clip.wav"
    with pytest.warns(UserWarning):
        write_wav(AudioSignal(np.array([1.5, -2.0]), 8000), path)
    back = read_wav(path)
    assert back.samples[0] == pytest.approx(32767 / 32768)
    assert back.samples[1] == -1.0


def test_stereo_rejected(tmp_path):
    path = tmp_path / "st.wav"
    _write_raw_wav(path, channels=2)
    with pytest.raises(WavChannelError):
        read_wav(path)


def test_8bit_rejected(tmp_path):
    path = tmp_path / "w8.wav"
    _write_raw_wav(path, sampwidth=1)
    with pytest.raises(WavFormatError):
        read_wav(path)


def test_rate_check(tmp_path):
    path = tmp_path / "r16.wav"
    _write_raw_wav(path, rate=16000)
    with pytest.raises(SampleRateError):
        read_wav(path, expected_rate_hz=8000)
    # No expectation given: any rate loads fine.
    assert read_wav(path).sample_rate_hz == 16000


def test_mix_gain_unity_at_0db_equal_power():
    x = AudioSignal(np.tile([0.5, -0.5], 100), 8000)
    n = AudioSignal(np.tile([0.5, -0.5], 200), 8000)
    seg = audio_io.scaled_noise_segment(x, n, 0.0, seed=3)
    assert np.mean(seg**2) == pytest.approx(np.mean(x.samples**2), abs=1e-12)


def test_mix_gain_10db_equal_power():
    x = AudioSignal(np.tile([0.5, -0.5], 100), 8000)
    n = AudioSignal(np.tile([0.5, -0.5], 200), 8000)
    seg = audio_io.scaled_noise_segment(x, n, 10.0, seed=3)
    gain = np.sqrt(np.mean(seg**2) / np.mean(n.samples**2))
    assert gain == pytest.approx(10 ** (-0.5), abs=1e-9)


@given(snr=st.floats(min_value=-20, max_value=30),
       seed=st.integers(min_value=0, max_value=2**31))
@settings(max_examples=40, deadline=None)
def test_mix_achieves_requested_snr(snr, seed):
    rng = np.random.default_rng(99)
    speech = AudioSignal(0.2 * rng.standard_normal(4000), 8000)
    noise = AudioSignal(0.3 * rng.standard_normal(9000), 8000)
    seg = audio_io.scaled_noise_segment(speech, noise, snr, seed)
    measured = 10 * np.log10(np.mean(speech.samples**2) / np.mean(seg**2))
    assert measured == pytest.approx(snr, abs=1e-6)


def test_mix_is_deterministic_per_seed(tone_8k, noise_8k):
    a = mix_at_snr(tone_8k, noise_8k, 5.0, seed=42)
    b = mix_at_snr(tone_8k, noise_8k, 5.0, seed=42)
    c = mix_at_snr(tone_8k, noise_8k, 5.0, seed=43)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_mix_wraps_short_noise(tone_8k):
    short = AudioSignal(np.array([0.1, -0.1, 0.2]), 8000)
    mixed = mix_at_snr(tone_8k, short, 0.0, seed=0)
    assert len(mixed) == len(tone_8k)


def test_mix_zero_power_raises(tone_8k):
    silent = AudioSignal(np.zeros(100), 8000)
    with pytest.raises(ZeroPowerError):
        mix_at_snr(tone_8k, silent, 0.0, seed=0)
    with pytest.raises(ZeroPowerError):
        mix_at_snr(silent, tone_8k, 0.0, seed=0)


def test_mix_rate_mismatch(tone_8k):
    other = AudioSignal(np.ones(100) * 0.1, 16000)
    with pytest.raises(SampleRateError):
        mix_at_snr(tone_8k, other, 0.0, seed=0)


def test_manifest_cross_product_and_round_trip(tmp_path, tone_8k, noise_8k):
    sp = tmp_path / "speech"
    nz = tmp_path / "noise"
    sp.mkdir()
    nz.mkdir()
    for i in range(3):
        write_wav(tone_8k, sp / f"utt{i}.wav")
    for i in range(2):
        write_wav(noise_8k, nz / f"noise{i}.wav")

    specs = audio_io.build_manifest(sp, nz, [0.0, 5.0, 10.0], seed_base=100)
    assert len(specs) == 3 * 2 * 3
    assert [s.seed for s in specs] == list(range(100, 118))
    # Sorted listing makes the build reproducible.
    again = audio_io.build_manifest(sp, nz, [0.0, 5.0, 10.0], seed_base=100)
    assert specs == again

    path = tmp_path / "manifest.tsv"
    audio_io.write_manifest(specs, path)
    assert audio_io.read_manifest(path) == specs
    first = path.read_bytes()
    audio_io.write_manifest(specs, path)
    assert path.read_bytes() == first


def test_manifest_mix_reproduces(tmp_path, tone_8k, noise_8k):
    sp = tmp_path / "speech"
    nz = tmp_path / "noise"
    sp.mkdir()
    nz.mkdir()
    write_wav(tone_8k, sp / "utt.wav")
    write_wav(noise_8k, nz / "n.wav")
    spec = audio_io.build_manifest(sp, nz, [3.0])[0]
    assert spec == MixSpec(str(sp / "utt.wav"), str(nz / "n.wav"), 3.0, 0)
    m1 = mix_at_snr(read_wav(spec.speech_path), read_wav(spec.noise_path),
                    spec.snr_db, spec.seed)
    m2 = mix_at_snr(read_wav(spec.speech_path), read_wav(spec.noise_path),
                    spec.snr_db, spec.seed)
    assert np.array_equal(m1.samples, m2.samples)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melpnet import bitstream
from melpnet.bitstream import (
    BitFrame,
    dequantize,
    pack_stream,
    quantize,
    unpack_stream,
)
from melpnet.errors import BitstreamError
from melpnet.frame import MelpFrame


def random_frame(rng) -> MelpFrame:
    lsf = np.sort(rng.uniform(0.05, 3.0, 10))
    while np.min(np.diff(lsf)) < 2e-3:
        lsf = np.sort(rng.uniform(0.05, 3.0, 10))
    voiced = rng.random() < 0.7
    bpvc = np.zeros(5, bool)
    pitch = 0.0
    if voiced:
        bpvc[0] = True
        bpvc[1:] = rng.random(4) < 0.6
        pitch = rng.uniform(20.0, 160.0)
    g2 = rng.uniform(-60.0, 2.0)
    g1 = np.clip(g2 + rng.uniform(-12.0, 9.0), -60.0, 2.0)
    fourier = np.exp(rng.uniform(-1.6, 0.9, 10)) if voiced else np.ones(10)
    return MelpFrame(lsf, np.array([g1, g2]), bpvc, pitch,
                     bool(voiced and rng.random() < 0.3), fourier)


def random_payload(rng) -> BitFrame:
    bits = rng.integers(0, 2, 54)
    raw = bytearray(7)
    for i, b in enumerate(bits):
        if b:
            raw[i >> 3] |= 0x80 >> (i & 7)
    return BitFrame(bytes(raw))


def test_bit_budget():
    assert bitstream.BITS_PER_FRAME == 54
    assert bitstream.bitrate_bps() == 2400.0


def test_payload_shape():
    f = random_frame(np.random.default_rng(0))
    bf = quantize(f)
    assert len(bf.payload) == 7
    assert bf.payload[-1] & 0x03 == 0


def test_bad_payload_rejected():
    with pytest.raises(BitstreamError):
        BitFrame(b"\x00" * 6)
    with pytest.raises(BitstreamError):
        BitFrame(b"\x00" * 6 + b"\x01")  # nonzero padding


def test_quantize_idempotent_on_lattice():
    rng = np.random.default_rng(1)
    for _ in range(300):
        f = random_frame(rng)
        bf = quantize(f)
        again = quantize(dequantize(bf))
        assert again.payload == bf.payload


def test_unvoiced_with_stray_flags_still_idempotent():
    # bpvc[0] clear but upper flags set: decode masks them, encode must too.
    f = MelpFrame(np.linspace(0.2, 2.9, 10), np.array([-20.0, -20.0]),
                  np.array([0, 1, 1, 0, 0], bool), 0.0, True, np.ones(10))
    bf = quantize(f)
    assert quantize(dequantize(bf)).payload == bf.payload


def test_pitch_grid_hits_80_exactly():
    f = random_frame(np.random.default_rng(2))
    f.bpvc[0] = True
    f.pitch_samples = 80.0
    back = dequantize(quantize(f))
    assert abs(np.log(back.pitch_samples) - np.log(80.0)) \
        <= (np.log(160.0) - np.log(20.0)) / (2 * 127)


def test_pitch_quantizer_monotone():
    pitches = np.linspace(20.0, 160.0, 500)
    codes = []
    f = random_frame(np.random.default_rng(3))
    f.bpvc[0] = True
    for p in pitches:
        f.pitch_samples = p
        codes.append(bitstream._encode_pitch(f))
    assert np.all(np.diff(codes) >= 0)
    assert codes[0] == 1 and codes[-1] == 127


def test_pitch_log_step_bound_everywhere():
    # Max log error of the voiced grid is half an interval of 126 steps.
    rng = np.random.default_rng(4)
    f = random_frame(rng)
    f.bpvc[0] = True
    half_step = (np.log(160.0) - np.log(20.0)) / (2 * 126)
    for p in rng.uniform(20.0, 160.0, 200):
        f.pitch_samples = p
        back = dequantize(quantize(f))
        assert abs(np.log(back.pitch_samples) - np.log(p)) <= half_step * (1 + 1e-9)


def test_unvoiced_round_trip():
    f = MelpFrame(np.linspace(0.2, 2.9, 10), np.array([-33.0, -31.0]),
                  np.zeros(5, bool), 0.0, False, np.ones(10))
    back = dequantize(quantize(f))
    assert not back.voiced
    assert back.pitch_samples == 0.0
    assert not back.aperiodic
    assert np.all(back.fourier_mag == 1.0)  # log level 0 decodes exactly


def test_gain_round_trip_error_bounded():
    rng = np.random.default_rng(5)
    for _ in range(200):
        f = random_frame(rng)
        back = dequantize(quantize(f))
        assert abs(back.gain_db[1] - f.gain_db[1]) <= 1.0 + 1e-9
        assert abs(back.gain_db[0] - f.gain_db[0]) <= 1.5 + 1e-9


def test_bpvc_round_trip():
    rng = np.random.default_rng(6)
    for _ in range(100):
        f = random_frame(rng)
        back = dequantize(quantize(f))
        assert np.array_equal(back.bpvc, f.bpvc)
        assert back.aperiodic == f.aperiodic


def test_all_zero_payload_valid():
    f = dequantize(BitFrame(b"\x00" * 7))
    f.validate()
    assert not f.voiced


def test_random_payloads_decode_valid():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        dequantize(random_payload(rng)).validate()


@given(st.integers(min_value=0, max_value=2**54 - 1))
@settings(max_examples=200, deadline=None)
def test_any_payload_decodes_valid(bits54):
    raw = (bits54 << 2).to_bytes(7, "big")
    dequantize(BitFrame(raw)).validate()


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(8)
    frames = [quantize(random_frame(rng)) for _ in range(44)]
    blob = pack_stream(frames)
    assert len(blob) == 12 + 7 * 44
    back = unpack_stream(blob)
    assert [b.payload for b in back] == [b.payload for b in frames]


def test_pack_empty():
    blob = pack_stream([])
    assert len(blob) == 12
    assert unpack_stream(blob) == []


def test_unpack_errors():
    with pytest.raises(BitstreamError):
        unpack_stream(b"NOPE" + b"\x00" * 8)
    blob = pack_stream([BitFrame(b"\x00" * 7)])
    with pytest.raises(BitstreamError):
        unpack_stream(blob[:-1])  # truncated
    with pytest.raises(BitstreamError):
        unpack_stream(blob + b"\x00")  # trailing junk
    with pytest.raises(BitstreamError):
        unpack_stream(blob[:5])  # shorter than header


def test_one_second_is_44_frames_2376_bits():
    rng = np.random.default_rng(9)
    frames = [quantize(random_frame(rng)) for _ in range(44)]
    assert len(frames) * bitstream.BITS_PER_FRAME == 2376
    assert 2376 <= 2400


def test_quantization_lsd_under_2db():
    # Spectral damage of the 25-bit LSF stage alone, measured on
    # speech-like synthetic utterances.
    from melpnet import analysis, lpc, synthdata
    lsds = []
    for seed in (100, 101, 102, 103, 104):
        sig = synthdata.make_utterance(seed)
        for f in analysis.analyze_utterance(sig):
            fq = dequantize(quantize(f))
            ps1 = lpc.lpc_power_spectrum(lpc.lsf_to_lpc(f.lsf))
            ps2 = lpc.lpc_power_spectrum(lpc.lsf_to_lpc(fq.lsf))
            lsds.append(np.sqrt(np.mean((10 * np.log10(ps1 / ps2)) ** 2)))
    assert np.mean(lsds) < 2.0


def test_lsf_decode_always_ascending():
    rng = np.random.default_rng(10)
    for _ in range(500):
        f = dequantize(random_payload(rng))
        assert np.all(np.diff(f.lsf) >= bitstream.MIN_LSF_GAP * (1 - 1e-9))
        assert f.lsf[0] > 0 and f.lsf[-1] < np.pi

import numpy as np
import pytest

from melpnet.audio_io import AudioSignal


@pytest.fixture
def tone_8k():
    """One second of a 200 Hz tone at 8 kHz, amplitude 0.3."""
    t = np.arange(8000) / 8000.0
    return AudioSignal(0.3 * np.sin(2 * np.pi * 200.0 * t), 8000)


@pytest.fixture
def noise_8k():
    """One second of seeded white noise at 8 kHz, amplitude well below 1."""
    rng = np.random.default_rng(1234)
    return AudioSignal(0.1 * rng.standard_normal(8000), 8000)

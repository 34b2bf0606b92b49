"""Exception hierarchy shared across the codec and enhancement modules.

Everything raised on purpose derives from MelpnetError so the CLI can map
domain failures to exit code 1 while genuine usage/IO mistakes stay at 2.
"""


class MelpnetError(Exception):
    """Base class for all domain errors raised by this package."""


class WavFormatError(MelpnetError):
    """WAV file is not the PCM 16-bit encoding this codec consumes."""


class WavChannelError(MelpnetError):
    """WAV file has more than one channel."""


class SampleRateError(MelpnetError):
    """Signal sample rate does not match what the operation requires."""


class ZeroPowerError(MelpnetError):
    """A signal with zero power was passed where an SNR is needed."""


class FrameInvariantError(MelpnetError):
    """A MELP frame violates one of its structural invariants."""


class UnstableFilterError(MelpnetError):
    """LPC polynomial is not minimum phase."""


class BitstreamError(MelpnetError):
    """Packed bitstream is malformed (bad magic, truncation, bad size)."""


class WeightFormatError(MelpnetError):
    """Weight container file is malformed or inconsistent."""


class ShapeMismatchError(MelpnetError):
    """Array arguments have incompatible shapes or lengths."""

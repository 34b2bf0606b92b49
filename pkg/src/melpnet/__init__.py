"""2.4 kbit/s mixed-excitation vocoder with recurrent parameter enhancement.

The package splits into a codec core (analysis, bitstream, synthesis), a
small from-scratch GRU stack (network, training), feature plumbing between
the two (features), and evaluation tooling (metrics, stoi, irm, report).
Most callers want the functions re-exported here; the CLI in melpnet.cli
wires them together for file-to-file work.
"""

from .analysis import AnalysisConfig, analyze_utterance
from .audio_io import (AudioSignal, MixSpec, build_manifest, mix_at_snr,
                       read_manifest, read_wav, write_manifest, write_wav)
from .bitstream import (BitFrame, bitrate_bps, dequantize, pack_stream,
                        quantize, unpack_stream)
from .errors import (BitstreamError, MelpnetError, ShapeMismatchError,
                     WeightFormatError)
from .features import (NormStats, apply_norm, fit_norm, invert_norm, refine,
                       unrefine)
from .frame import MelpFrame, frames_from_text, frames_to_text
from .irm import StftConfig, enhance_irm, enhance_oracle, ideal_ratio_mask
from .metrics import (FlopsBreakdown, MetricReport, coded_frames, count_flops,
                      evaluate, f0_rmse, gain_rmse, lsd, vuv_error)
from .network import (LayerSpec, NetworkWeights, PRESETS, count_params,
                      footprint_bytes, load_weights, save_weights)
from .stoi import stoi
from .synthesis import SynthConfig, synthesize
from .training import SequencePair, TrainConfig, train, xavier_init

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig", "analyze_utterance",
    "AudioSignal", "MixSpec", "build_manifest", "mix_at_snr",
    "read_manifest", "read_wav", "write_manifest", "write_wav",
    "BitFrame", "bitrate_bps", "dequantize", "pack_stream", "quantize",
    "unpack_stream",
    "BitstreamError", "MelpnetError", "ShapeMismatchError",
    "WeightFormatError",
    "NormStats", "apply_norm", "fit_norm", "invert_norm", "refine",
    "unrefine",
    "MelpFrame", "frames_from_text", "frames_to_text",
    "StftConfig", "enhance_irm", "enhance_oracle", "ideal_ratio_mask",
    "FlopsBreakdown", "MetricReport", "coded_frames", "count_flops",
    "evaluate", "f0_rmse", "gain_rmse", "lsd", "vuv_error",
    "LayerSpec", "NetworkWeights", "PRESETS", "count_params",
    "footprint_bytes", "load_weights", "save_weights",
    "stoi",
    "SynthConfig", "synthesize",
    "SequencePair", "TrainConfig", "train", "xavier_init",
    "__version__",
]

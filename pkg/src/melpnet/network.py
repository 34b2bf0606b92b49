"""Recurrent enhancement networks: GRU + feed-forward stacks, run with
plain numpy, plus the self-describing weight container.

Parameter layout is part of the file format, so the canonical ordering of
arrays inside each layer must never change:
  gru:          wz, wr, wc, bz, br, bc   (each w is (in+out, out))
  feedforward:  w, b
  linear_out:   w, b
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import ShapeMismatchError, WeightFormatError
from .features import NormStats

KINDS = ("gru", "feedforward", "linear_out")
ACTIVATIONS = ("linear", "relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    activation: str = "linear"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ShapeMismatchError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ShapeMismatchError(f"unknown activation {self.activation!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ShapeMismatchError("layer dims must be >= 1")

    def n_params(self) -> int:
        if self.kind == "gru":
            return 3 * ((self.in_dim + self.out_dim) * self.out_dim
                        + self.out_dim)
        return self.in_dim * self.out_dim + self.out_dim

    def param_shapes(self):
        if self.kind == "gru":
            cat = self.in_dim + self.out_dim
            return [("wz", (cat, self.out_dim)), ("wr", (cat, self.out_dim)),
                    ("wc", (cat, self.out_dim)), ("bz", (self.out_dim,)),
                    ("br", (self.out_dim,)), ("bc", (self.out_dim,))]
        return [("w", (self.in_dim, self.out_dim)), ("b", (self.out_dim,))]


def _chain(*specs):
    for a, b in zip(specs, specs[1:]):
        if a.out_dim != b.in_dim:
            raise ShapeMismatchError("layer dims do not chain")
    return specs


PRESETS = {
    "param_small": _chain(
        LayerSpec("gru", 29, 64),
        LayerSpec("feedforward", 64, 128, "relu"),
        LayerSpec("feedforward", 128, 128, "relu"),
        LayerSpec("linear_out", 128, 29, "linear")),
    "param_large": _chain(
        LayerSpec("gru", 29, 512),
        LayerSpec("gru", 512, 512),
        LayerSpec("feedforward", 512, 1024, "relu"),
        LayerSpec("feedforward", 1024, 1024, "relu"),
        LayerSpec("linear_out", 1024, 29, "linear")),
    "irm_small": _chain(
        LayerSpec("gru", 129, 64),
        LayerSpec("feedforward", 64, 64, "relu"),
        LayerSpec("feedforward", 64, 64, "relu"),
        LayerSpec("linear_out", 64, 129, "sigmoid")),
    "irm_large": _chain(
        LayerSpec("gru", 129, 512),
        LayerSpec("gru", 512, 512),
        LayerSpec("feedforward", 512, 1024, "relu"),
        LayerSpec("feedforward", 1024, 1024, "relu"),
        LayerSpec("linear_out", 1024, 129, "sigmoid")),
}


def count_params(specs) -> int:
    if isinstance(specs, str):
        specs = PRESETS[specs]
    return sum(s.n_params() for s in specs)


def footprint_bytes(specs) -> int:
    # 32-bit storage
    return 4 * count_params(specs)


@dataclass
class NetworkWeights:
    """Layer parameters plus the normalization that makes them usable."""

    preset: str
    specs: tuple
    params: list = field(repr=False)  # one dict of arrays per layer
    in_stats: NormStats = None
    out_stats: NormStats = None

    def __post_init__(self):
        self.specs = tuple(self.specs)
        _chain(*self.specs)
        if len(self.params) != len(self.specs):
            raise ShapeMismatchError("params/specs length mismatch")
        for spec, block in zip(self.specs, self.params):
            for name, shape in spec.param_shapes():
                if block[name].shape != shape:
                    raise ShapeMismatchError(
                        f"{spec.kind} param {name}: {block[name].shape} "
                        f"!= {shape}")
        if self.in_stats is None:
            self.in_stats = NormStats.identity(self.specs[0].in_dim)
        if self.out_stats is None:
            self.out_stats = NormStats.identity(self.specs[-1].out_dim)

    def count_params(self) -> int:
        return count_params(self.specs)


def zero_weights(specs, preset: str = "custom") -> NetworkWeights:
    if isinstance(specs, str):
        preset, specs = specs, PRESETS[specs]
    params = [{name: np.zeros(shape) for name, shape in s.param_shapes()}
              for s in specs]
    return NetworkWeights(preset, tuple(specs), params)


def _act(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return _sigmoid(x)
    return x


def gru_step(block, x, h):
    """One GRU step. x: (..., in), h: (..., out). Reset gate scales the
    state before the candidate transform."""
    cat = np.concatenate([x, h], axis=-1)
    z = _sigmoid(cat @ block["wz"] + block["bz"])
    r = _sigmoid(cat @ block["wr"] + block["br"])
    cat_c = np.concatenate([x, r * h], axis=-1)
    c = np.tanh(cat_c @ block["wc"] + block["bc"])
    return z * h + (1.0 - z) * c


def forward_sequence(weights: NetworkWeights, inputs) -> np.ndarray:
    """(T, in_dim) -> (T, out_dim), causal, state zeroed at t=0.

    Operates in the network's own (normalized) domain; callers wanting
    feature-domain output go through enhance_sequence.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != weights.specs[0].in_dim:
        raise ShapeMismatchError(
            f"expected (T, {weights.specs[0].in_dim}) input")
    for spec, block in zip(weights.specs, weights.params):
        if spec.kind == "gru":
            h = np.zeros(spec.out_dim)
            out = np.empty((len(x), spec.out_dim))
            for t in range(len(x)):
                h = gru_step(block, x[t], h)
                out[t] = h
            x = out
        else:
            x = _act(x @ block["w"] + block["b"], spec.activation)
    return x


def enhance_sequence(weights: NetworkWeights, features) -> np.ndarray:
    """Feature-domain wrapper: normalize, run the net, denormalize."""
    from .features import apply_norm, invert_norm
    z = apply_norm(features, weights.in_stats)
    return invert_norm(forward_sequence(weights, z), weights.out_stats)


# --- container -------------------------------------------------------------

WEIGHTS_MAGIC = b"MPWT"
WEIGHTS_VERSION = 1
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}
_ACT_CODE = {a: i for i, a in enumerate(ACTIVATIONS)}


def save_weights(weights: NetworkWeights, path) -> None:
    out = bytearray()
    out += WEIGHTS_MAGIC
    out += struct.pack("<H", WEIGHTS_VERSION)
    name = weights.preset.encode("utf-8")
    out += struct.pack("<H", len(name)) + name
    out += struct.pack("<H", len(weights.specs))
    for s in weights.specs:
        out += struct.pack("<BBII", _KIND_CODE[s.kind],
                           _ACT_CODE[s.activation], s.in_dim, s.out_dim)
    for stats in (weights.in_stats, weights.out_stats):
        out += struct.pack("<I", len(stats.mean))
        out += stats.mean.astype("<f8").tobytes()
        out += stats.std.astype("<f8").tobytes()
    total = weights.count_params()
    out += struct.pack("<Q", total)
    for spec, block in zip(weights.specs, weights.params):
        for pname, _ in spec.param_shapes():
            out += block[pname].astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(out))


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise WeightFormatError("truncated weights file")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals if len(vals) > 1 else vals[0]

    def take_raw(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise WeightFormatError("truncated weights file")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk


def load_weights(path) -> NetworkWeights:
    with open(path, "rb") as f:
        data = f.read()
    cur = _Cursor(data)
    if cur.take_raw(4) != WEIGHTS_MAGIC:
        raise WeightFormatError("bad magic")
    version = cur.take("<H")
    if version != WEIGHTS_VERSION:
        raise WeightFormatError(f"unsupported weights version {version}")
    name = cur.take_raw(cur.take("<H")).decode("utf-8")
    n_layers = cur.take("<H")
    specs = []
    for _ in range(n_layers):
        kind_c, act_c, in_dim, out_dim = cur.take("<BBII")
        try:
            specs.append(LayerSpec(KINDS[kind_c], in_dim, out_dim,
                                   ACTIVATIONS[act_c]))
        except IndexError:
            raise WeightFormatError("unknown layer/activation code") from None
    stats = []
    for _ in range(2):
        dim = cur.take("<I")
        mean = np.frombuffer(cur.take_raw(8 * dim), dtype="<f8").copy()
        std = np.frombuffer(cur.take_raw(8 * dim), dtype="<f8").copy()
        stats.append(NormStats(mean, std))
    total = cur.take("<Q")
    if total != count_params(specs):
        raise WeightFormatError(
            f"stored count {total} != {count_params(specs)} from dims")
    params = []
    for spec in specs:
        block = {}
        for pname, shape in spec.param_shapes():
            n = int(np.prod(shape))
            raw = np.frombuffer(cur.take_raw(4 * n), dtype="<f4")
            block[pname] = raw.astype(np.float64).reshape(shape)
        params.append(block)
    if cur.pos != len(data):
        raise WeightFormatError("trailing bytes after weights")
    return NetworkWeights(name, tuple(specs), params, stats[0], stats[1])

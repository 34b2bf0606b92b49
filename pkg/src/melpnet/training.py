"""Hand-rolled sequence trainer: full-sequence backprop through the GRU
stack, Adam, Xavier init, length-bucketed batching with loss masking.

No autograd anywhere; the backward pass mirrors forward_sequence exactly
and is pinned by a finite-difference check (see gradient_check).
"""

from __future__ import annotations

import copy
import struct
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import ShapeMismatchError, WeightFormatError
from .features import NormStats, apply_norm, fit_norm
from .network import PRESETS, NetworkWeights


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 60
    patience: int = 5        # early stop on validation MSE
    bptt_truncation: int = 0  # 0 = gradient flows the whole sequence
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.patience < 1:
            raise ShapeMismatchError("bad train config")


@dataclass
class SequencePair:
    uid: str
    noisy: np.ndarray  # (T, D) model input
    clean: np.ndarray  # (T, D) target

    def __post_init__(self):
        self.noisy = np.asarray(self.noisy, dtype=np.float64)
        self.clean = np.asarray(self.clean, dtype=np.float64)
        if self.noisy.shape != self.clean.shape or self.noisy.ndim != 2:
            raise ShapeMismatchError(f"pair {self.uid}: shape mismatch")


def xavier_init(specs, seed: int, preset: str = "custom") -> NetworkWeights:
    """Uniform ±sqrt(6/(fan_in+fan_out)) matrices, zero biases."""
    if isinstance(specs, str):
        preset, specs = specs, PRESETS[specs]
    rng = np.random.default_rng(seed)
    params = []
    for s in specs:
        block = {}
        for name, shape in s.param_shapes():
            if len(shape) == 2:
                bound = np.sqrt(6.0 / (shape[0] + shape[1]))
                block[name] = rng.uniform(-bound, bound, shape)
            else:
                block[name] = np.zeros(shape)
        params.append(block)
    return NetworkWeights(preset, tuple(specs), params)


def mse_loss(pred, target) -> float:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeMismatchError("mse_loss shape mismatch")
    return float(np.mean((p - t) ** 2))


# --- batched forward with cache --------------------------------------------

def _forward_cached(weights, x):
    """x: (B, T, in). Returns (y, caches), one cache entry per layer."""
    caches = []
    for spec, block in zip(weights.specs, weights.params):
        if spec.kind == "gru":
            b, t_len, _ = x.shape
            h = np.zeros((b, spec.out_dim))
            steps = []
            out = np.empty((b, t_len, spec.out_dim))
            for t in range(t_len):
                cat = np.concatenate([x[:, t], h], axis=1)
                z = _sigmoid(cat @ block["wz"] + block["bz"])
                r = _sigmoid(cat @ block["wr"] + block["br"])
                cat_c = np.concatenate([x[:, t], r * h], axis=1)
                c = np.tanh(cat_c @ block["wc"] + block["bc"])
                h_new = z * h + (1.0 - z) * c
                steps.append((cat, z, r, cat_c, c, h))
                h = h_new
                out[:, t] = h
            caches.append(("gru", x, steps))
            x = out
        else:
            a = x @ block["w"] + block["b"]
            if spec.activation == "relu":
                y = np.maximum(a, 0.0)
            elif spec.activation == "sigmoid":
                y = _sigmoid(a)
            else:
                y = a
            caches.append((spec.activation, x, y))
            x = y
    return x, caches


def _zero_grads(weights):
    return [{name: np.zeros(shape) for name, shape in s.param_shapes()}
            for s in weights.specs]


def backward_sequence(weights, inputs, targets, mask=None, truncation=0):
    """Exact gradient of the masked-mean squared error.

    inputs/targets: (B, T, D) with trailing zero padding; mask: (B, T) of
    0/1 (None = all ones). Returns (loss, grads) with grads shaped like
    weights.params.
    """
    x = np.asarray(inputs, dtype=np.float64)
    tgt = np.asarray(targets, dtype=np.float64)
    if x.ndim == 2:  # single sequence -> batch of one
        x = x[None]
    if tgt.ndim == 2:
        tgt = tgt[None]
    if mask is None:
        mask = np.ones(x.shape[:2])
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 1:
        m = m[None]
    y, caches = _forward_cached(weights, x)
    if y.shape != tgt.shape:
        raise ShapeMismatchError("target shape mismatch")
    denom = m.sum() * y.shape[2]
    diff = (y - tgt) * m[:, :, None]
    loss = float(np.sum(diff ** 2) / denom)
    dy = 2.0 * diff / denom

    grads = _zero_grads(weights)
    for li in reversed(range(len(weights.specs))):
        spec, block, g = weights.specs[li], weights.params[li], grads[li]
        cache = caches[li]
        if spec.kind == "gru":
            _, x_in, steps = cache
            in_dim = spec.in_dim
            b, t_len = x_in.shape[0], x_in.shape[1]
            dx = np.empty((b, t_len, in_dim))
            dh_next = np.zeros((b, spec.out_dim))
            for t in reversed(range(t_len)):
                cat, z, r, cat_c, c, h_prev = steps[t]
                dh = dy[:, t] + dh_next
                dz = dh * (h_prev - c)
                dc = dh * (1.0 - z)
                dac = dc * (1.0 - c * c)
                g["wc"] += cat_c.T @ dac
                g["bc"] += dac.sum(axis=0)
                dcat_c = dac @ block["wc"].T
                drh = dcat_c[:, in_dim:]
                dr = drh * h_prev
                dh_prev = dh * z + drh * r
                dar = dr * r * (1.0 - r)
                g["wr"] += cat.T @ dar
                g["br"] += dar.sum(axis=0)
                daz = dz * z * (1.0 - z)
                g["wz"] += cat.T @ daz
                g["bz"] += daz.sum(axis=0)
                dcat = daz @ block["wz"].T + dar @ block["wr"].T
                dx[:, t] = dcat[:, :in_dim] + dcat_c[:, :in_dim]
                dh_next = dh_prev + dcat[:, in_dim:]
                if truncation > 0 and t % truncation == 0:
                    dh_next = np.zeros_like(dh_next)
            dy = dx
        else:
            act, x_in, y_out = cache
            if act == "relu":
                da = dy * (y_out > 0.0)
            elif act == "sigmoid":
                da = dy * y_out * (1.0 - y_out)
            else:
                da = dy
            flat_x = x_in.reshape(-1, spec.in_dim)
            flat_da = da.reshape(-1, spec.out_dim)
            g["w"] += flat_x.T @ flat_da
            g["b"] += flat_da.sum(axis=0)
            dy = da @ block["w"].T
    return loss, grads


def gradient_check(weights, inputs, targets, mask=None, h=1e-4):
    """Max relative error between analytic and central-difference grads."""
    _, grads = backward_sequence(weights, inputs, targets, mask)
    worst = 0.0
    for block, gblock in zip(weights.params, grads):
        for name, arr in block.items():
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                lp, _ = backward_sequence(weights, inputs, targets, mask)
                arr[idx] = orig - h
                lm, _ = backward_sequence(weights, inputs, targets, mask)
                arr[idx] = orig
                numeric = (lp - lm) / (2.0 * h)
                analytic = gblock[name][idx]
                scale = max(abs(numeric), abs(analytic), 1e-8)
                worst = max(worst, abs(numeric - analytic) / scale)
    return worst


# --- Adam -------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def for_weights(cls, weights) -> "AdamState":
        return cls(m=_zero_grads(weights), v=_zero_grads(weights))


def adam_step(weights, grads, state: AdamState, cfg: TrainConfig):
    """Bias-corrected Adam; mutates weights.params and state in place."""
    state.step += 1
    t = state.step
    lr_t = cfg.learning_rate * np.sqrt(1.0 - cfg.beta2 ** t) \
        / (1.0 - cfg.beta1 ** t)
    for block, gblock, mblock, vblock in zip(weights.params, grads,
                                             state.m, state.v):
        for name in block:
            g = gblock[name]
            mblock[name] = cfg.beta1 * mblock[name] + (1 - cfg.beta1) * g
            vblock[name] = cfg.beta2 * vblock[name] + (1 - cfg.beta2) * g * g
            block[name] -= lr_t * mblock[name] \
                / (np.sqrt(vblock[name]) + cfg.epsilon)
    return weights


# --- batching ---------------------------------------------------------------

def _make_batches(pairs, batch_size):
    """Bucket by length so padding stays small; deterministic order."""
    order = sorted(range(len(pairs)),
                   key=lambda i: (len(pairs[i].noisy), pairs[i].uid))
    return [order[i:i + batch_size]
            for i in range(0, len(order), batch_size)]


def _pad_batch(pairs, idxs, in_stats, out_stats):
    t_max = max(len(pairs[i].noisy) for i in idxs)
    dim_in = pairs[idxs[0]].noisy.shape[1]
    dim_out = pairs[idxs[0]].clean.shape[1]
    x = np.zeros((len(idxs), t_max, dim_in))
    tgt = np.zeros((len(idxs), t_max, dim_out))
    mask = np.zeros((len(idxs), t_max))
    for row, i in enumerate(idxs):
        p = pairs[i]
        n = len(p.noisy)
        x[row, :n] = apply_norm(p.noisy, in_stats)
        tgt[row, :n] = apply_norm(p.clean, out_stats)
        mask[row, :n] = 1.0
    return x, tgt, mask


def _dataset_mse(weights, pairs, batches, in_stats, out_stats):
    total_err = 0.0
    total_n = 0.0
    for idxs in batches:
        x, tgt, mask = _pad_batch(pairs, idxs, in_stats, out_stats)
        y, _ = _forward_cached(weights, x)
        diff = (y - tgt) * mask[:, :, None]
        total_err += float(np.sum(diff ** 2))
        total_n += mask.sum() * y.shape[2]
    return total_err / total_n


def train(preset, train_pairs, valid_pairs, cfg: TrainConfig,
          log_path=None):
    """Returns (best weights, log rows (epoch, train_mse, valid_mse, secs)).

    Normalization is fitted on the training set here and embedded in the
    returned weights. A sigmoid output layer marks a bounded-target model
    (mask regression): its targets are used as-is and the stored output
    stats are identity.
    """
    train_pairs = list(train_pairs)
    valid_pairs = list(valid_pairs)
    if not train_pairs or not valid_pairs:
        raise ShapeMismatchError("empty training or validation manifest")
    if isinstance(preset, str):
        name, specs = preset, PRESETS[preset]
    else:
        name, specs = "custom", tuple(preset)
    weights = xavier_init(specs, cfg.seed, preset=name)

    in_stats = fit_norm(np.concatenate([p.noisy for p in train_pairs]))
    if specs[-1].activation == "sigmoid":
        out_stats = NormStats.identity(specs[-1].out_dim)
    else:
        out_stats = fit_norm(np.concatenate([p.clean for p in train_pairs]))
    weights.in_stats = in_stats
    weights.out_stats = out_stats

    batches = _make_batches(train_pairs, cfg.batch_size)
    valid_batches = _make_batches(valid_pairs, cfg.batch_size)
    state = AdamState.for_weights(weights)
    rng = np.random.default_rng(cfg.seed)

    log = []
    best_valid = np.inf
    best_params = None
    stale = 0
    t0 = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(batches))
        err_sum, n_sum = 0.0, 0.0
        for bi in order:
            idxs = batches[bi]
            x, tgt, mask = _pad_batch(train_pairs, idxs, in_stats, out_stats)
            loss, grads = backward_sequence(weights, x, tgt, mask,
                                            truncation=cfg.bptt_truncation)
            adam_step(weights, grads, state, cfg)
            n = mask.sum() * tgt.shape[2]
            err_sum += loss * n
            n_sum += n
        valid_mse = _dataset_mse(weights, valid_pairs, valid_batches,
                                 in_stats, out_stats)
        log.append((epoch, err_sum / n_sum, valid_mse,
                    time.perf_counter() - t0))
        if valid_mse < best_valid - 1e-12:
            best_valid = valid_mse
            best_params = copy.deepcopy(weights.params)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best_params is not None:
        weights.params = best_params
    if log_path is not None:
        write_training_log(log, log_path)
    return weights, log


def write_training_log(rows, path) -> None:
    with open(path, "w") as f:
        f.write("epoch,train_mse,valid_mse,wall_time\n")
        for epoch, tr, va, wt in rows:
            f.write(f"{epoch},{tr:.10g},{va:.10g},{wt:.3f}\n")


# --- feature-pair files ------------------------------------------------------

PAIR_MAGIC = b"MPFP"
PAIR_VERSION = 1


def write_pair_file(pair: SequencePair, path) -> None:
    uid = pair.uid.encode("utf-8")
    n, dim = pair.noisy.shape
    with open(path, "wb") as f:
        f.write(PAIR_MAGIC)
        f.write(struct.pack("<HH", PAIR_VERSION, len(uid)))
        f.write(uid)
        f.write(struct.pack("<II", n, dim))
        f.write(pair.noisy.astype("<f4").tobytes())
        f.write(pair.clean.astype("<f4").tobytes())


def read_pair_file(path) -> SequencePair:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8 or data[:4] != PAIR_MAGIC:
        raise WeightFormatError("not a feature-pair file")
    version, uid_len = struct.unpack_from("<HH", data, 4)
    if version != PAIR_VERSION:
        raise WeightFormatError(f"unsupported pair version {version}")
    pos = 8
    uid = data[pos:pos + uid_len].decode("utf-8")
    pos += uid_len
    n, dim = struct.unpack_from("<II", data, pos)
    pos += 8
    count = n * dim
    need = pos + 2 * 4 * count
    if len(data) != need:
        raise WeightFormatError("pair file size mismatch")
    noisy = np.frombuffer(data, dtype="<f4", count=count,
                          offset=pos).astype(np.float64).reshape(n, dim)
    clean = np.frombuffer(data, dtype="<f4", count=count,
                          offset=pos + 4 * count
                          ).astype(np.float64).reshape(n, dim)
    return SequencePair(uid, noisy, clean)

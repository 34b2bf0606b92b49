"""Command line front end: one binary, one subcommand per pipeline shape.

Exit codes: 0 success, 1 domain error (bad audio, bad stream, bad model),
2 usage or file-system error.
"""

import os


def _setup_threads():
    # must happen before the numeric stack spins up its thread pools
    n = os.environ.get("MELPNET_THREADS", "1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, n)


_setup_threads()

import argparse  # noqa: E402
import dataclasses  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

from .errors import MelpnetError  # noqa: E402

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(str(p))


def _load_config(path) -> dict:
    """key=value lines; '#' starts a comment; blank lines ignored."""
    overrides = {}
    _require_files(path)
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        overrides[key] = val
    return overrides


def _build_config(cls, overrides: dict, **extra):
    """Instantiate a config dataclass from string overrides, coercing each
    value with the field's type; unknown keys are left for other configs."""
    kwargs = dict(extra)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, val in overrides.items():
        f = fields.get(key)
        if f is None:
            continue
        if f.type in ("int", int):
            kwargs[key] = int(val)
        elif f.type in ("float", float):
            kwargs[key] = float(val)
        else:
            kwargs[key] = val
    return cls(**kwargs)


def _load_weights_checked(path):
    from .network import load_weights
    _require_files(path)
    return load_weights(path)


def _enhance_frames(frames, weights):
    from .features import refine, unrefine
    from .network import enhance_sequence
    return unrefine(enhance_sequence(weights, refine(frames)))


def cmd_encode(args) -> int:
    from . import bitstream
    from .analysis import analyze_utterance
    from .audio_io import read_wav
    _require_files(args.wav)
    weights = _load_weights_checked(args.enhance) if args.enhance else None
    sig = read_wav(args.wav, expected_rate_hz=8000)
    frames = analyze_utterance(sig)
    if weights is not None:
        frames = _enhance_frames(frames, weights)
    data = bitstream.pack_stream(bitstream.quantize(f) for f in frames)
    Path(args.out).write_bytes(data)
    print(f"{args.out}: {len(frames)} frames, {len(data)} bytes")
    return EXIT_OK


def cmd_decode(args) -> int:
    from . import bitstream
    from .audio_io import write_wav
    from .synthesis import synthesize
    _require_files(args.bitstream)
    weights = _load_weights_checked(args.enhance) if args.enhance else None
    frames = [bitstream.dequantize(b)
              for b in bitstream.unpack_stream(
                  Path(args.bitstream).read_bytes())]
    if weights is not None:
        frames = _enhance_frames(frames, weights)
    wav = synthesize(frames, seed=args.seed)
    write_wav(wav, args.out)
    print(f"{args.out}: {len(wav.samples)} samples")
    return EXIT_OK


def _parse_snrs(text: str):
    return [float(s) for s in text.split(",") if s.strip()]


def cmd_mix(args) -> int:
    import numpy as np

    from .audio_io import (AudioSignal, build_manifest, mix_at_snr,
                           read_wav, write_manifest, write_wav)
    _require_files(args.speech, args.noise)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    specs = build_manifest(args.speech, args.noise, _parse_snrs(args.snr),
                           seed_base=args.seed_base)
    manifest_path = out / "manifest.tsv"
    write_manifest(specs, manifest_path)
    n_wavs = 0
    if args.write_wavs:
        for ms in specs:
            speech = read_wav(ms.speech_path)
            noise = read_wav(ms.noise_path)
            mixed = mix_at_snr(speech, noise, ms.snr_db, seed=ms.seed)
            # listening copies only; rescale so low-SNR mixes don't clip
            peak = float(np.max(np.abs(mixed.samples), initial=0.0))
            if peak > 1.0:
                mixed = AudioSignal(mixed.samples * (0.99 / peak),
                                    mixed.sample_rate_hz)
            name = (f"{Path(ms.speech_path).stem}_"
                    f"{Path(ms.noise_path).stem}_{ms.snr_db:g}dB.wav")
            write_wav(mixed, out / name)
            n_wavs += 1
    print(f"{manifest_path}: {len(specs)} entries, {n_wavs} wavs written")
    return EXIT_OK


def cmd_extract(args) -> int:
    from .analysis import analyze_utterance
    from .audio_io import mix_at_snr, read_manifest, read_wav
    from .features import refine
    from .metrics import coded_frames
    from .training import SequencePair, write_pair_file
    _require_files(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = {}

    def _wav(path):
        if path not in cache:
            cache[path] = read_wav(path, expected_rate_hz=8000)
        return cache[path]

    count = 0
    for ms in read_manifest(args.manifest):
        clean = _wav(ms.speech_path)
        mixed = mix_at_snr(clean, _wav(ms.noise_path), ms.snr_db,
                           seed=ms.seed)
        noisy_frames = analyze_utterance(mixed)
        if args.route == "dec":
            # the decoder-side model sees what the bitstream delivers
            noisy_frames = coded_frames(noisy_frames)
        uid = (f"{Path(ms.speech_path).stem}_{Path(ms.noise_path).stem}_"
               f"{ms.snr_db:g}dB")
        pair = SequencePair(uid, refine(noisy_frames),
                            refine(analyze_utterance(clean)))
        write_pair_file(pair, out / f"{uid}.mpfp")
        count += 1
    print(f"{out}: {count} feature pairs ({args.route} route)")
    return EXIT_OK


def _split_pairs(pairs, valid_frac: float):
    pairs = sorted(pairs, key=lambda p: p.uid)
    n_valid = max(1, int(round(valid_frac * len(pairs))))
    # spread validation picks evenly over the sorted corpus
    step = max(1, len(pairs) // n_valid)
    valid_idx = set(range(0, len(pairs), step))
    valid = [p for i, p in enumerate(pairs) if i in valid_idx]
    train = [p for i, p in enumerate(pairs) if i not in valid_idx]
    return train, valid


def cmd_train(args) -> int:
    from .network import save_weights
    from .report import plot_training_curve
    from .training import TrainConfig, read_pair_file, train
    _require_files(args.pairs)
    pair_files = sorted(Path(args.pairs).glob("*.mpfp"))
    if not pair_files:
        raise FileNotFoundError(f"no .mpfp files under {args.pairs}")
    pairs = [read_pair_file(p) for p in pair_files]
    overrides = _load_config(args.config) if args.config else {}
    extra = {}
    if args.epochs is not None:
        extra["max_epochs"] = args.epochs
    if args.lr is not None:
        extra["learning_rate"] = args.lr
    if args.batch_size is not None:
        extra["batch_size"] = args.batch_size
    extra["seed"] = args.seed
    cfg = _build_config(TrainConfig, overrides, **extra)
    train_pairs, valid_pairs = _split_pairs(pairs, args.valid_frac)
    log_path = args.log or str(Path(args.out).with_suffix(".csv"))
    weights, log = train(args.preset, train_pairs, valid_pairs, cfg,
                         log_path=log_path)
    save_weights(weights, args.out)
    curve = args.curve or str(Path(args.out).with_suffix(".png"))
    plot_training_curve(log, curve)
    best = min(r[2] for r in log)
    print(f"{args.out}: {len(log)} epochs, best valid MSE {best:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .audio_io import read_manifest
    from .metrics import evaluate
    from .report import format_table, write_report
    _require_files(args.manifest)
    weights = _load_weights_checked(args.weights) if args.weights else None
    specs = read_manifest(args.manifest)
    reports = []
    for variant in args.variant:
        reports.append(evaluate(variant, specs, weights=weights,
                                seed=args.seed,
                                compute_stoi=not args.no_stoi))
    written = write_report(reports, args.out)
    sys.stdout.write(format_table(reports))
    print(f"wrote {len(written)} files under {args.out}")
    return EXIT_OK


def cmd_flops(args) -> int:
    from .metrics import count_flops
    fb = count_flops(args.preset, args.pipeline)
    for label, flops in fb.layers:
        print(f"  {label}: {flops:.0f} FLOPs/frame")
    if fb.fft_flops_per_frame:
        print(f"  fft: {fb.fft_flops_per_frame:.0f} FLOPs/frame")
    print(f"{args.preset} ({args.pipeline}): {fb.total_mflops:.2f} MFLOPs")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .network import PRESETS
    p = argparse.ArgumentParser(
        prog="melpnet",
        description="2.4 kbit/s vocoder with recurrent parameter "
                    "enhancement")
    sub = p.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="wav -> bitstream")
    enc.add_argument("wav")
    enc.add_argument("out")
    enc.add_argument("--enhance", metavar="WEIGHTS",
                     help="run feature enhancement before quantization")
    enc.set_defaults(fn=cmd_encode)

    dec = sub.add_parser("decode", help="bitstream -> wav")
    dec.add_argument("bitstream")
    dec.add_argument("out")
    dec.add_argument("--enhance", metavar="WEIGHTS",
                     help="run feature enhancement after decoding")
    dec.add_argument("--seed", type=int, default=0)
    dec.set_defaults(fn=cmd_decode)

    mix = sub.add_parser("mix", help="build a noisy-mixture manifest")
    mix.add_argument("--speech", required=True)
    mix.add_argument("--noise", required=True)
    mix.add_argument("--snr", required=True,
                     help="comma-separated dB values")
    mix.add_argument("--out", required=True)
    mix.add_argument("--seed-base", type=int, default=0)
    mix.add_argument("--write-wavs", action="store_true")
    mix.set_defaults(fn=cmd_mix)

    ext = sub.add_parser("extract",
                         help="manifest -> aligned feature-pair files")
    ext.add_argument("--manifest", required=True)
    ext.add_argument("--out", required=True)
    ext.add_argument("--route", choices=("enc", "dec"), default="enc",
                     help="enc: features from noisy analysis; dec: from "
                          "the decoded bitstream")
    ext.set_defaults(fn=cmd_extract)

    tr = sub.add_parser("train", help="fit an enhancement model")
    tr.add_argument("--pairs", required=True,
                    help="directory of .mpfp feature pairs")
    tr.add_argument("--preset", choices=sorted(PRESETS), required=True)
    tr.add_argument("--out", required=True, help="weights file to write")
    tr.add_argument("--valid-frac", type=float, default=0.15)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--config", help="key=value overrides file")
    tr.add_argument("--log", help="training log CSV path")
    tr.add_argument("--curve", help="loss curve PNG path")
    tr.set_defaults(fn=cmd_train)

    ev = sub.add_parser("eval", help="run a system shape over a manifest")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--variant", action="append", required=True,
                    choices=("clean", "noisy", "irm", "param-enc",
                             "param-dec"),
                    help="repeatable")
    ev.add_argument("--weights")
    ev.add_argument("--out", required=True)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--no-stoi", action="store_true")
    ev.set_defaults(fn=cmd_eval)

    fl = sub.add_parser("flops", help="operation-count ledger")
    fl.add_argument("--preset", choices=sorted(PRESETS), required=True)
    fl.add_argument("--pipeline", choices=("param", "irm"),
                    default="param")
    fl.set_defaults(fn=cmd_flops)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except MelpnetError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

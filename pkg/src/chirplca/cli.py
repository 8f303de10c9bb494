"""Command-line interface.

Subcommands: ``encode``, ``train``, ``eval``, ``inspect``, ``synth-corpus``.
Option values resolve as command-line flag, then ``--config`` JSON file,
then built-in defaults.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .adaptation import TrainConfig, train
from .audio_io import AudioClip, prepare, read_wav, write_wav
from .dictionary import StridedDictionary, padded_length
from .exceptions import AudioFormatError, DegenerateFilterError, DivergenceError
from .filterbank import PRESETS, FilterbankConfig, build_filters, load_params, preset_params, save_params
from .lca import LcaConfig, encode, spikegram, write_spikegram_csv, write_trace_csv
from .metrics import (
    evaluate_corpus,
    inhibition_matrix,
    magnitude_response,
    write_matrix_csv,
    write_response_csv,
)
from .synthetic import make_synthetic_corpus

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4

logger = logging.getLogger("chirplca")

# flag name -> (config section, field, type)
OPTIONS = {
    "channels": ("filterbank", "num_channels", int),
    "filter_len": ("filterbank", "filter_len", int),
    "stride": ("filterbank", "stride", int),
    "sample_rate": ("filterbank", "sample_rate_hz", float),
    "freq_min": ("filterbank", "freq_min_hz", float),
    "freq_max": ("filterbank", "freq_max_hz", float),
    "tau": ("lca", "tau", float),
    "dt": ("lca", "dt", float),
    "iters": ("lca", "num_iters", int),
    "threshold": ("lca", "threshold", float),
    "lr": ("train", "learning_rate", float),
    "batch_size": ("train", "batch_size", int),
    "epochs": ("train", "num_epochs", int),
    "buffer_size": ("train", "buffer_size", int),
    "seed": ("train", "rng_seed", int),
}
SECTIONS = {"filterbank": FilterbankConfig, "lca": LcaConfig, "train": TrainConfig}


class UsageError(Exception):
    pass


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON file with 'filterbank', 'lca' and 'train' sections")
    for name, (_, _, typ) in OPTIONS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("--threads", type=int, default=1, help="concurrent clips during evaluation")
    p.add_argument("-v", "--verbose", action="store_true")


def resolve_configs(args):
    """Merge defaults, the config file and explicit flags."""
    values = {section: {} for section in SECTIONS}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{args.config} is not valid JSON: {exc}") from exc
        for section, cls in SECTIONS.items():
            known = {f.name for f in fields(cls)}
            for key, val in doc.get(section, {}).items():
                if key not in known:
                    raise UsageError(f"unknown key {section}.{key} in {args.config}")
                values[section][key] = val
        extra = set(doc) - set(SECTIONS)
        if extra:
            raise UsageError(f"unknown sections in {args.config}: {sorted(extra)}")
    for name, (section, field_name, _) in OPTIONS.items():
        val = getattr(args, name, None)
        if val is not None:
            values[section][field_name] = val
    try:
        return tuple(SECTIONS[s](**values[s]) for s in ("filterbank", "lca", "train"))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def dict_params(spec, fb):
    """Channel parameters for ``gt``, ``cgc`` or a JSON parameter file."""
    if spec in PRESETS:
        return preset_params(fb, spec)
    try:
        params, _ = load_params(spec)
    except ValueError as exc:
        raise UsageError(f"{spec}: {exc}") from exc
    if len(params) != fb.num_channels:
        raise UsageError(f"{spec} has {len(params)} channels but the filterbank has {fb.num_channels}")
    return params


def _named_dicts(specs):
    out = {}
    for spec in specs:
        name, _, path = spec.partition("=")
        if not path:
            name, path = (spec if spec in PRESETS else Path(spec).stem), spec
        if name in out:
            raise UsageError(f"duplicate dictionary name {name!r}")
        out[name] = path
    return out


def load_corpus(args, fb):
    """(name, prepared signal) pairs from ``--corpus DIR`` or ``--synthetic N``."""
    if args.synthetic is not None:
        clips = make_synthetic_corpus(args.synthetic, seed=args.corpus_seed, sample_rate=fb.sample_rate_hz,
                                      duration=args.duration)
        return [(f"synth{i:04d}", prepare(c, fb)) for i, c in enumerate(clips)]
    if args.corpus is None:
        raise UsageError("give --corpus DIR or --synthetic N")
    paths = sorted(Path(args.corpus).glob("*.wav"))
    out = []
    for p in paths:
        clip = read_wav(p, expected_rate=fb.sample_rate_hz)
        if not np.any(clip.samples):
            logger.warning("skipping silent clip %s", p)
            continue
        out.append((p.stem, prepare(clip, fb)))
    if not out:
        raise UsageError(f"no usable .wav files in {args.corpus}")
    return out


def cmd_encode(args):
    fb, lca, _ = resolve_configs(args)
    clip = read_wav(args.wav, expected_rate=fb.sample_rate_hz)
    peak = float(np.abs(clip.samples).max())
    if peak > 0:
        sig = prepare(clip, fb)
    else:
        sig = np.zeros(padded_length(clip.samples.size, fb.filter_len, fb.stride))
    params = dict_params(args.dict, fb)
    d = StridedDictionary(build_filters(params, fb), fb.stride, sig.size)
    result = encode(sig, d, d.gram(), lca)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.wav).stem
    write_spikegram_csv(out / f"{stem}_spikegram.csv", spikegram(result, d))
    write_trace_csv(out / f"{stem}_trace.csv", result)
    recon = result.reconstruction[: clip.samples.size] * (peak if peak > 0 else 1.0)
    write_wav(out / f"{stem}_recon.wav", AudioClip(recon, int(fb.sample_rate_hz)))
    print(json.dumps({"mse": result.mse, "spike_count": result.spike_count, "energy": result.energy}))
    return EXIT_OK


def cmd_train(args):
    fb, lca, tr = resolve_configs(args)
    corpus = load_corpus(args, fb)
    init = dict_params(args.dict, fb)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train([s for _, s in corpus], init, fb, lca, tr, log_path=out / "train_log.jsonl")
    save_params(out / "params.json", result.params, fb)
    print(json.dumps({"flushes": len(result.log), "skipped": result.skipped,
                      "params": str(out / "params.json")}))
    return EXIT_OK


def cmd_eval(args):
    fb, lca, _ = resolve_configs(args)
    corpus = load_corpus(args, fb)
    specs = _named_dicts(args.dict)
    dicts = {name: dict_params(spec, fb) for name, spec in specs.items()}
    report = evaluate_corpus(dicts, corpus, fb, lca, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "eval_clips.csv")
    report.write_json(out / "eval_summary.json")
    if args.traces:
        for name in dicts:
            filters = build_filters(dicts[name], fb)
            for clip_name, sig in corpus:
                d = StridedDictionary(filters, fb.stride, sig.size)
                write_trace_csv(out / f"trace_{name}_{clip_name}.csv", encode(sig, d, d.gram(), lca))
    print(json.dumps(report.to_json()))
    return EXIT_OK


def cmd_inspect(args):
    fb, _, _ = resolve_configs(args)
    params = dict_params(args.dict, fb)
    filters = build_filters(params, fb)
    d = StridedDictionary(filters, fb.stride, fb.filter_len)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_response_csv(out / "response.csv", magnitude_response(filters, fb.sample_rate_hz, args.grid_size))
    write_matrix_csv(out / "inhibition.csv", inhibition_matrix(d.gram()))
    return EXIT_OK


def cmd_synth_corpus(args):
    fb, _, _ = resolve_configs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clips = make_synthetic_corpus(args.count, seed=args.corpus_seed, sample_rate=fb.sample_rate_hz,
                                  duration=args.duration)
    for i, c in enumerate(clips):
        write_wav(out / f"synth{i:04d}.wav", AudioClip(c, int(fb.sample_rate_hz)))
    return EXIT_OK


def _corpus_args(p):
    p.add_argument("--corpus", type=Path, help="directory of .wav files")
    p.add_argument("--synthetic", type=int, metavar="N", help="use N synthetic clips instead of --corpus")
    p.add_argument("--corpus-seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=0.25, help="synthetic clip length in seconds")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="chirplca", description="Sparse LCA audio coding over an adaptive gammachirp filterbank."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a WAV file into a spikegram")
    p.add_argument("wav", type=Path)
    p.add_argument("--dict", default="gt", help="gt, cgc or a parameter JSON file")
    p.add_argument("--out", default=".")
    _add_common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="adapt the filterbank on a corpus")
    _corpus_args(p)
    p.add_argument("--dict", default="gt", help="initial bank: gt, cgc or a parameter JSON file")
    p.add_argument("--out", default=".")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="compare dictionaries on a corpus")
    _corpus_args(p)
    p.add_argument("--dict", action="append", required=True, help="[name=]gt|cgc|params.json; repeatable")
    p.add_argument("--traces", action="store_true", help="also write per-clip iteration traces")
    p.add_argument("--out", default=".")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="export filter responses and inhibition weights")
    p.add_argument("--dict", default="gt")
    p.add_argument("--grid-size", type=int, default=512)
    p.add_argument("--out", default=".")
    _add_common(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("synth-corpus", help="write a synthetic WAV corpus")
    p.add_argument("count", type=int)
    p.add_argument("--corpus-seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=0.25)
    p.add_argument("--out", default=".")
    _add_common(p)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"chirplca: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, DegenerateFilterError) as exc:
        print(f"chirplca: numeric failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, AudioFormatError) as exc:
        print(f"chirplca: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: measure loudness, build corpora, print stats,
filter TTS output, and evaluate predictions.

Every subcommand emits machine-readable JSON under ``--json`` and human
text otherwise; none of them mutate their inputs. Build runs are fully
specified by a config file (TOML-style ``key = value`` lines, flat schema
below) plus overriding flags, and always require an explicit seed.

Config schema for ``build``::

    inventory = "items.jsonl"      # BuildItem rows (JSONL or CSV)
    out_dir = "out/easy"
    mode = "easy"                  # easy | hard | train
    seed = 123                     # required (flag or file)
    sample_rate = 16000
    jobs = 4
    fail_fast = true
    encoding = "float32"           # mixture files: float32 | pcm16
    speech_lufs = [-30.0, -25.0]   # optional, defaults per mode
    audio_lufs = [-30.0, -25.0]
    overlap_probability = 0.8      # train mode only
    integer_lufs = false
    clip_limit = 0.9
    exclude = "exclude.txt"        # optional, one entry_id per line
    replacement_fraction = 0.2     # optional instruction-pool swap
    replacement_pool = "pool.jsonl"
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .audio_io import load_clip
from .clients import (
    ClientConfig,
    HttpEmbedder,
    HttpJudge,
    ScriptedJudge,
    StaticJudge,
    TrigramEmbedder,
)
from .loudness import measure_lufs
from .metrics import evaluate
from .mixer import MixPolicy


class ConfigError(ValueError):
    """Invalid or missing config value; message names the field."""


def _parse_scalar(token: str, field: str):
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] and token[0] in ("'", '"'):
        return token[1:-1]
    if token.lower() in ("true", "false"):
        return token.lower() == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"{field}: cannot parse value {token!r}")


def _strip_comment(line: str) -> str:
    out = []
    quote = None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in ("'", '"'):
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` parser for the schema documented above."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if value.startswith("[") and value.endswith("]"):
            inner = value[1:-1].strip()
            values[key] = (
                [_parse_scalar(t, key) for t in inner.split(",")] if inner else []
            )
        else:
            values[key] = _parse_scalar(value, key)
    return values


_CONFIG_FIELDS = {
    "inventory": str,
    "out_dir": str,
    "mode": str,
    "seed": int,
    "sample_rate": int,
    "jobs": int,
    "fail_fast": bool,
    "encoding": str,
    "speech_lufs": list,
    "audio_lufs": list,
    "overlap_probability": (int, float),
    "integer_lufs": bool,
    "clip_limit": (int, float),
    "exclude": str,
    "replacement_fraction": (int, float),
    "replacement_pool": str,
}


def load_build_config(path, overrides: dict) -> dict:
    config = parse_config_text(Path(path).read_text(encoding="utf-8"))
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    for key, value in config.items():
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"{key}: unknown config field")
        expected = _CONFIG_FIELDS[key]
        if isinstance(value, bool) and expected is not bool:
            raise ConfigError(f"{key}: expected {expected}, got boolean {value!r}")
        if not isinstance(value, expected):
            raise ConfigError(f"{key}: expected {expected}, got {value!r}")
    for required in ("inventory", "out_dir", "mode", "seed"):
        if required not in config:
            raise ConfigError(f"{required}: required but not set")
    for path_field in ("inventory", "exclude", "replacement_pool"):
        if path_field in config and not Path(config[path_field]).exists():
            raise ConfigError(f"{path_field}: no such file {config[path_field]!r}")
    return config


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, ensure_ascii=False, sort_keys=True) if args.json else text)


def cmd_measure(args) -> int:
    report = measure_lufs(load_clip(args.wav))
    payload = {
        "integrated_lufs": None if report.below_gate else report.integrated_lufs,
        "below_gate": report.below_gate,
        "block_count": report.block_count,
        "gated_block_count": report.gated_block_count,
    }
    if report.below_gate:
        text = f"below gate: no blocks above -70 LUFS ({report.block_count} blocks)"
    else:
        text = f"{report.integrated_lufs:.2f} LUFS"
    _emit(args, payload, text)
    return 0


def cmd_build(args) -> int:
    overrides = {
        "inventory": args.inventory,
        "out_dir": args.out_dir,
        "mode": args.mode,
        "seed": args.seed,
        "sample_rate": args.sample_rate,
        "jobs": args.jobs,
        "encoding": args.encoding,
    }
    config = load_build_config(args.config, overrides)
    policy = MixPolicy.for_mode(
        config["mode"],
        speech_lufs_range=config.get("speech_lufs"),
        audio_lufs_range=config.get("audio_lufs"),
        overlap_probability=config.get("overlap_probability"),
        integer_lufs=config.get("integer_lufs", False),
        clip_limit=config.get("clip_limit", 0.9),
    )
    items = corpus_mod.read_inventory(config["inventory"])
    exclude = None
    if "exclude" in config:
        exclude = {
            line.strip()
            for line in Path(config["exclude"]).read_text(encoding="utf-8").splitlines()
            if line.strip()
        }
    pool = None
    if "replacement_pool" in config:
        pool = [
            (item.instruction_text, item.speech_path)
            for item in corpus_mod.read_inventory(config["replacement_pool"])
        ]
    manifest_path, entries = corpus_mod.build_manifest(
        items,
        policy,
        seed=config["seed"],
        out_dir=config["out_dir"],
        sample_rate=config.get("sample_rate", 16000),
        jobs=config.get("jobs") or os.cpu_count() or 1,
        fail_fast=config.get("fail_fast", True),
        exclude=exclude,
        replacement_pool=pool,
        replacement_fraction=config.get("replacement_fraction", 0.0),
        encoding=config.get("encoding", "float32"),
    )
    stats = corpus_mod.corpus_stats(entries)
    payload = {
        "manifest": str(manifest_path),
        "entries": len(entries),
        "mean_snr_db": stats.mean_snr_db,
        "mean_duration_s": stats.mean_duration_s,
    }
    text = (
        f"wrote {len(entries)} entries to {manifest_path}\n"
        f"mean duration {stats.mean_duration_s:.2f} s; mean SNR "
        + ", ".join(f"{m}: {v:.2f} dB" for m, v in stats.mean_snr_db.items())
    )
    _emit(args, payload, text)
    return 0


def cmd_stats(args) -> int:
    stats = corpus_mod.corpus_stats(args.manifest)
    payload = {
        "qa_pair_count": stats.qa_pair_count,
        "unique_instruction_count": stats.unique_instruction_count,
        "mean_duration_s": stats.mean_duration_s,
        "mean_snr_db": stats.mean_snr_db,
    }
    text = (
        f"qa pairs:            {stats.qa_pair_count}\n"
        f"unique instructions: {stats.unique_instruction_count}\n"
        f"mean duration:       {stats.mean_duration_s:.2f} s\n"
        + "\n".join(
            f"mean SNR ({mode}):     {value:.2f} dB"
            for mode, value in stats.mean_snr_db.items()
        )
    )
    _emit(args, payload, text)
    return 0


def _read_id_text_file(path) -> dict:
    path = Path(path)
    table = {}
    if path.suffix.lower() == ".csv":
        import csv

        with path.open("r", encoding="utf-8", newline="") as handle:
            for row in csv.DictReader(handle):
                table[row["id"]] = row["text"]
        return table
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                payload = json.loads(line)
                table[payload["id"]] = payload["text"]
    return table


def cmd_filter_tts(args) -> int:
    refs = _read_id_text_file(args.refs)
    hyps = _read_id_text_file(args.hyps)
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise ConfigError(f"hyps: missing transcripts for ids {missing[:5]}")
    flagged = [
        item_id
        for item_id, ref in refs.items()
        if corpus_mod.flag_for_regeneration(ref, hyps[item_id])
    ]
    _emit(args, {"flagged": flagged, "checked": len(refs)}, "\n".join(flagged))
    return 0


def _make_judge(args):
    if args.judge == "none":
        return StaticJudge("incorrect")
    if args.judge.startswith("scripted:"):
        verdict_file = args.judge.split(":", 1)[1]
        return ScriptedJudge(json.loads(Path(verdict_file).read_text(encoding="utf-8")))
    if args.judge == "http":
        return HttpJudge(
            ClientConfig(
                endpoint=args.judge_endpoint or "",
                model=args.judge_model or "",
                api_key_env="JUDGE_API_KEY",
                cache_dir=args.cache_dir,
            )
        )
    raise ConfigError(f"judge: unknown mode {args.judge!r} (none | scripted:FILE | http)")


def _make_embedder(args):
    if args.embedder == "trigram":
        return TrigramEmbedder()
    if args.embedder == "http":
        return HttpEmbedder(
            ClientConfig(
                endpoint=args.embed_endpoint or "",
                model=args.embed_model or "",
                api_key_env="EMBED_API_KEY",
                cache_dir=args.cache_dir,
            )
        )
    raise ConfigError(f"embedder: unknown mode {args.embedder!r} (trigram | http)")


def cmd_eval(args) -> int:
    entries = corpus_mod.read_manifest(args.manifest)
    predictions = {}
    with Path(args.predictions).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                payload = json.loads(line)
                predictions[payload["entry_id"]] = payload["output"]
    label_space = None
    if args.label_space:
        label_space = [
            line.strip()
            for line in Path(args.label_space).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    report = evaluate(
        entries,
        predictions,
        judge=_make_judge(args),
        embedder=_make_embedder(args),
        label_space=label_space,
        jobs=args.jobs or os.cpu_count() or 1,
    )
    out_path = Path(args.out)
    out_path.write_text(report.to_json(), encoding="utf-8")
    payload = {"report": str(out_path), "metrics": report.metrics, "counts": report.counts}
    text = f"wrote {out_path}\n" + "\n".join(
        f"{name}: {value:.4f}" for name, value in sorted(report.metrics.items())
    )
    _emit(args, payload, text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spokenmix",
        description="Build speech-instruction/audio mixture corpora and score model outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="print integrated loudness of a WAV file")
    p.add_argument("wav")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("build", help="render mixtures and write a manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--inventory")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--mode", choices=["easy", "hard", "train"])
    p.add_argument("--seed", type=int)
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--encoding", choices=["float32", "pcm16"])
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="print corpus statistics for a manifest")
    p.add_argument("manifest")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser(
        "filter-tts", help="list ids whose synthesized speech needs regeneration"
    )
    p.add_argument("--refs", required=True, help="id/text file of reference texts")
    p.add_argument("--hyps", required=True, help="id/text file of ASR transcripts")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_filter_tts)

    p = sub.add_parser("eval", help="score a predictions file against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", default="eval_report.json")
    p.add_argument("--judge", default="none", help="none | scripted:FILE | http")
    p.add_argument("--judge-endpoint", dest="judge_endpoint")
    p.add_argument("--judge-model", dest="judge_model")
    p.add_argument("--embedder", default="trigram", help="trigram | http")
    p.add_argument("--embed-endpoint", dest="embed_endpoint")
    p.add_argument("--embed-model", dest="embed_model")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--label-space", dest="label_space")
    p.add_argument("--jobs", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # diagnostics on stderr, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

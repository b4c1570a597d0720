"""Assemble benchmark manifests: render mixtures for an item inventory,
write one JSONL line per item, filter TTS output by WER, and compute
corpus statistics.

Rendering parallelizes across entries with per-entry seeds derived from the
global seed and entry id, so output bytes are identical regardless of the
worker count; the manifest is written in input order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .audio_io import AudioClip, Role, load_clip, resample_and_mixdown, save_clip
from .mixer import MixPlan, MixPolicy, MixResult, render_mix, plan_mix
from .text import normalize_text, wer

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
WER_REGENERATION_THRESHOLD = 0.40

TASKS = ("classification_single", "classification_multi", "captioning", "qa")


class ManifestError(ValueError):
    """Malformed, empty, or inconsistent manifest input."""


@dataclass(frozen=True)
class BuildItem:
    """One benchmark item before mixing."""

    entry_id: str
    task: str
    instruction_text: str
    speech_path: str
    audio_path: str
    references: tuple[str, ...]

    def __post_init__(self):
        if self.task not in TASKS:
            raise ManifestError(f"{self.entry_id}: unknown task {self.task!r}")
        if not self.references:
            raise ManifestError(f"{self.entry_id}: references must be non-empty")
        object.__setattr__(self, "references", tuple(self.references))


@dataclass(frozen=True)
class MixMeta:
    """The sampled plan plus measured outcome stored with each entry."""

    overlap: bool
    speech_offset_s: float
    audio_offset_s: float
    padded_length_s: float
    v_speech: float
    v_audio: float
    seed: int
    snr_db: float
    rescale_gain: float

    @classmethod
    def from_result(cls, result: MixResult) -> "MixMeta":
        plan = result.plan
        return cls(
            overlap=plan.overlap,
            speech_offset_s=plan.speech_offset_s,
            audio_offset_s=plan.audio_offset_s,
            padded_length_s=plan.padded_length_s,
            v_speech=plan.v_speech,
            v_audio=plan.v_audio,
            seed=plan.seed,
            snr_db=result.snr_db,
            rescale_gain=result.rescale_gain,
        )

    def plan(self) -> MixPlan:
        return MixPlan(
            overlap=self.overlap,
            speech_offset_s=self.speech_offset_s,
            audio_offset_s=self.audio_offset_s,
            padded_length_s=self.padded_length_s,
            v_speech=self.v_speech,
            v_audio=self.v_audio,
            seed=self.seed,
        )


@dataclass(frozen=True)
class ManifestEntry:
    entry_id: str
    task: str
    instruction_text: str
    speech_path: str
    audio_path: str
    mixture_path: str
    mode: str
    references: tuple[str, ...]
    mix_meta: MixMeta
    duration_s: float
    schema_version: int = SCHEMA_VERSION

    def to_json_dict(self) -> dict:
        payload = asdict(self)
        payload["references"] = list(self.references)
        return payload

    @classmethod
    def from_json_dict(cls, payload: dict) -> "ManifestEntry":
        fields = dict(payload)
        fields["references"] = tuple(fields["references"])
        fields["mix_meta"] = MixMeta(**fields["mix_meta"])
        return cls(**fields)


@dataclass(frozen=True)
class CorpusStats:
    qa_pair_count: int
    unique_instruction_count: int
    mean_duration_s: float
    mean_snr_db: dict = field(default_factory=dict)  # per mode


def derive_entry_seed(global_seed: int, entry_id: str) -> int:
    """Stable per-entry seed; independent of worker scheduling and entry order."""
    digest = hashlib.sha256(f"{global_seed}:{entry_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def flag_for_regeneration(reference_text: str, hypothesis_transcript: str) -> bool:
    """True when the synthesized speech transcribes too poorly to keep (WER > 0.40).

    The threshold is strict: exactly 40% is kept.
    """
    reference = normalize_text(reference_text)
    if not reference:
        raise ValueError("reference text is empty after normalization")
    return wer(reference, normalize_text(hypothesis_transcript)) > WER_REGENERATION_THRESHOLD


def write_manifest(entries: list[ManifestEntry], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(entry.to_json_dict(), ensure_ascii=False) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    entries = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(ManifestEntry.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: malformed manifest line ({exc})")
    return entries


def read_inventory(path) -> list[BuildItem]:
    """Load build items from JSONL (native) or CSV (references joined by '|')."""
    path = Path(path)
    items = []
    if path.suffix.lower() == ".csv":
        with path.open("r", encoding="utf-8", newline="") as handle:
            for row in csv.DictReader(handle):
                items.append(
                    BuildItem(
                        entry_id=row["entry_id"],
                        task=row["task"],
                        instruction_text=row["instruction_text"],
                        speech_path=row["speech_path"],
                        audio_path=row["audio_path"],
                        references=tuple(row["references"].split("|")),
                    )
                )
        return items
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
                items.append(
                    BuildItem(
                        entry_id=payload["entry_id"],
                        task=payload["task"],
                        instruction_text=payload["instruction_text"],
                        speech_path=payload["speech_path"],
                        audio_path=payload["audio_path"],
                        references=tuple(payload["references"]),
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise ManifestError(f"{path}:{lineno}: malformed inventory line ({exc})")
    return items


def _apply_instruction_replacement(
    items: list[BuildItem],
    pool: list[tuple[str, str]],
    fraction: float,
    global_seed: int,
) -> list[BuildItem]:
    # Training-set option: swap a seeded fraction of classification/captioning
    # instructions for draws from an external instruction pool.
    import numpy as np

    replaced = []
    for item in items:
        if item.task not in ("classification_single", "classification_multi", "captioning"):
            replaced.append(item)
            continue
        rng = np.random.default_rng(derive_entry_seed(global_seed, f"replace:{item.entry_id}"))
        if rng.random() >= fraction:
            replaced.append(item)
            continue
        text, speech_path = pool[int(rng.integers(len(pool)))]
        replaced.append(
            BuildItem(
                entry_id=item.entry_id,
                task=item.task,
                instruction_text=text,
                speech_path=speech_path,
                audio_path=item.audio_path,
                references=item.references,
            )
        )
    return replaced


def build_manifest(
    items: list[BuildItem],
    policy: MixPolicy,
    seed: int,
    out_dir,
    sample_rate: int = 16000,
    jobs: int = 1,
    fail_fast: bool = True,
    exclude: set | None = None,
    replacement_pool: list[tuple[str, str]] | None = None,
    replacement_fraction: float = 0.0,
    encoding: str = "float32",
) -> tuple[Path, list[ManifestEntry]]:
    """Render every item's mixture and write ``manifest.jsonl`` under ``out_dir``.

    Deterministic: identical (items, policy, seed) produce byte-identical
    manifest and mixture files for any ``jobs``. Unloadable clips abort the
    build when ``fail_fast`` else are skipped with a log line.
    """
    seen = set()
    for item in items:
        if item.entry_id in seen:
            raise ManifestError(f"duplicate entry_id {item.entry_id!r}")
        seen.add(item.entry_id)
    if exclude:
        items = [item for item in items if item.entry_id not in exclude]
    if replacement_fraction > 0.0:
        if not replacement_pool:
            raise ManifestError("replacement_fraction set but replacement_pool is empty")
        items = _apply_instruction_replacement(
            items, replacement_pool, replacement_fraction, seed
        )

    out_dir = Path(out_dir)
    mixture_dir = out_dir / "mixtures"
    mixture_dir.mkdir(parents=True, exist_ok=True)

    def render(item: BuildItem):
        speech = resample_and_mixdown(load_clip(item.speech_path, Role.SPEECH), sample_rate)
        audio = resample_and_mixdown(load_clip(item.audio_path, Role.AUDIO), sample_rate)
        plan = plan_mix(
            l_a=audio.duration_seconds,
            l_s=speech.duration_seconds,
            policy=policy,
            seed=derive_entry_seed(seed, item.entry_id),
        )
        result = render_mix(speech, audio, plan, policy)
        relative_path = f"mixtures/{item.entry_id}.wav"
        save_clip(result.mixture, out_dir / relative_path, encoding=encoding)
        return ManifestEntry(
            entry_id=item.entry_id,
            task=item.task,
            instruction_text=item.instruction_text,
            speech_path=str(item.speech_path),
            audio_path=str(item.audio_path),
            # relative to the manifest's directory so identical builds are
            # byte-identical wherever they land
            mixture_path=relative_path,
            mode=str(policy.mode.value),
            references=item.references,
            mix_meta=MixMeta.from_result(result),
            duration_s=result.mixture.duration_seconds,
        )

    def render_or_skip(item: BuildItem):
        try:
            return render(item)
        except Exception as exc:
            if fail_fast:
                raise
            log.warning("skipping %s: %s", item.entry_id, exc)
            return None

    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rendered = list(pool.map(render_or_skip, items))
    else:
        rendered = [render_or_skip(item) for item in items]
    entries = [entry for entry in rendered if entry is not None]

    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(entries, manifest_path)
    return manifest_path, entries


def corpus_stats(manifest) -> CorpusStats:
    """Counts and means over a manifest (path or parsed entries)."""
    entries = read_manifest(manifest) if not isinstance(manifest, list) else manifest
    if not entries:
        raise ManifestError("manifest holds no entries")
    by_mode: dict = {}
    for entry in entries:
        by_mode.setdefault(entry.mode, []).append(entry.mix_meta.snr_db)
    return CorpusStats(
        qa_pair_count=len(entries),
        unique_instruction_count=len({e.instruction_text for e in entries}),
        mean_duration_s=sum(e.duration_s for e in entries) / len(entries),
        mean_snr_db={mode: sum(v) / len(v) for mode, v in sorted(by_mode.items())},
    )

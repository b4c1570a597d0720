"""Plan and render speech-instruction/audio mixtures.

Three mixing regimes: ``easy`` keeps the two signals on disjoint time
supports (one simply follows the other), ``hard`` always overlaps them with
the speech set quieter than the audio, and ``train`` overlaps a configurable
fraction of items. Loudness targets are drawn per item from LUFS ranges,
each component is normalized, hard-clamped at the clip limit, padded into a
shared timeline, and summed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .audio_io import AudioClip, Role, peak_clip
from .loudness import set_loudness


class MixMode(str, Enum):
    EASY = "easy"
    HARD = "hard"
    TRAIN = "train"


# Default LUFS ranges per mode. Easy keeps both components in the same band;
# hard drops speech below the audio bed; train spans a wide speech band with
# 80% of items overlapped.
_MODE_DEFAULTS = {
    MixMode.EASY: {"speech": (-30.0, -25.0), "audio": (-30.0, -25.0), "overlap_p": 0.0},
    MixMode.HARD: {"speech": (-33.0, -30.0), "audio": (-23.0, -20.0), "overlap_p": 1.0},
    MixMode.TRAIN: {"speech": (-38.0, -20.0), "audio": (-33.0, -25.0), "overlap_p": 0.8},
}


class ZeroEnergyError(ValueError):
    """SNR is undefined because the audio component carries no energy."""


@dataclass(frozen=True)
class MixPolicy:
    """Per-mode mixing knobs; construct via :meth:`for_mode` for the defaults."""

    mode: MixMode
    speech_lufs_range: tuple[float, float]
    audio_lufs_range: tuple[float, float]
    overlap_probability: float
    integer_lufs: bool = False
    clip_limit: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "mode", MixMode(self.mode))
        for name, (low, high) in (
            ("speech_lufs_range", self.speech_lufs_range),
            ("audio_lufs_range", self.audio_lufs_range),
        ):
            if low > high:
                raise ValueError(f"{name}: low {low} exceeds high {high}")
        if not 0.0 <= self.overlap_probability <= 1.0:
            raise ValueError(f"overlap_probability {self.overlap_probability} not in [0, 1]")
        if self.mode is MixMode.EASY and self.overlap_probability != 0.0:
            raise ValueError("easy mode never overlaps (overlap_probability must be 0)")
        if self.mode is MixMode.HARD and self.overlap_probability != 1.0:
            raise ValueError("hard mode always overlaps (overlap_probability must be 1)")
        if not 0.0 < self.clip_limit <= 1.0:
            raise ValueError(f"clip_limit {self.clip_limit} not in (0, 1]")

    @classmethod
    def for_mode(
        cls,
        mode: MixMode | str,
        speech_lufs_range: tuple[float, float] | None = None,
        audio_lufs_range: tuple[float, float] | None = None,
        overlap_probability: float | None = None,
        integer_lufs: bool = False,
        clip_limit: float = 0.9,
    ) -> "MixPolicy":
        mode = MixMode(mode)
        defaults = _MODE_DEFAULTS[mode]
        return cls(
            mode=mode,
            speech_lufs_range=tuple(speech_lufs_range or defaults["speech"]),
            audio_lufs_range=tuple(audio_lufs_range or defaults["audio"]),
            overlap_probability=(
                defaults["overlap_p"] if overlap_probability is None else overlap_probability
            ),
            integer_lufs=integer_lufs,
            clip_limit=clip_limit,
        )


@dataclass(frozen=True)
class MixPlan:
    """Sampled decisions for one mixture: offsets, timeline length, targets."""

    overlap: bool
    speech_offset_s: float
    audio_offset_s: float
    padded_length_s: float
    v_speech: float
    v_audio: float
    seed: int


@dataclass(frozen=True)
class MixResult:
    mixture: AudioClip
    snr_db: float
    rescale_gain: float
    plan: MixPlan


def _draw_lufs(rng: np.random.Generator, low: float, high: float, integer: bool) -> float:
    if integer:
        return float(rng.integers(int(low), int(high), endpoint=True))
    return float(rng.uniform(low, high))


def plan_mix(l_a: float, l_s: float, policy: MixPolicy, seed: int) -> MixPlan:
    """Sample one mixture plan for audio of length ``l_a`` s and speech ``l_s`` s.

    Overlapping plans place the shorter signal uniformly inside the longer;
    non-overlapping plans concatenate in a coin-flipped order. Deterministic
    given (lengths, policy, seed).
    """
    if l_a <= 0 or l_s <= 0:
        raise ValueError(f"component lengths must be positive, got l_a={l_a}, l_s={l_s}")
    rng = np.random.default_rng(seed)

    if policy.mode is MixMode.TRAIN:
        overlap = bool(rng.random() < policy.overlap_probability)
    else:
        overlap = policy.mode is MixMode.HARD

    if overlap:
        padded = max(l_a, l_s)
        offset = float(rng.uniform(0.0, abs(l_a - l_s)))
        if l_a < l_s:
            speech_offset, audio_offset = 0.0, offset
        else:
            speech_offset, audio_offset = offset, 0.0
    else:
        padded = l_a + l_s
        if rng.random() > 0.5:
            speech_offset, audio_offset = 0.0, l_s  # speech first
        else:
            speech_offset, audio_offset = l_a, 0.0  # audio first

    v_audio = _draw_lufs(rng, *policy.audio_lufs_range, policy.integer_lufs)
    v_speech = _draw_lufs(rng, *policy.speech_lufs_range, policy.integer_lufs)
    return MixPlan(
        overlap=overlap,
        speech_offset_s=speech_offset,
        audio_offset_s=audio_offset,
        padded_length_s=padded,
        v_speech=v_speech,
        v_audio=v_audio,
        seed=int(seed),
    )


def _place(samples: np.ndarray, offset_samples: int, total: int) -> np.ndarray:
    out = np.zeros(total, dtype=np.float64)
    out[offset_samples : offset_samples + len(samples)] = samples
    return out


def render_mix(
    speech: AudioClip, audio: AudioClip, plan: MixPlan, policy: MixPolicy
) -> MixResult:
    """Normalize, clamp, pad, and sum the two components per an existing plan.

    Components are independently loudness-set and hard-clamped at
    ``policy.clip_limit`` before summation. If the summed peak exceeds 1.0
    the mixture is uniformly rescaled to peak 0.99 and the gain recorded
    (the SNR is invariant under that rescale).
    """
    if speech.sample_rate != audio.sample_rate:
        raise ValueError(
            f"sample rate mismatch: speech {speech.sample_rate} vs audio {audio.sample_rate}"
        )
    rate = speech.sample_rate
    speech_scaled = peak_clip(set_loudness(speech, plan.v_speech), policy.clip_limit)
    audio_scaled = peak_clip(set_loudness(audio, plan.v_audio), policy.clip_limit)

    n_speech = len(speech_scaled.samples)
    n_audio = len(audio_scaled.samples)
    if plan.overlap:
        total = max(n_speech, n_audio)
    else:
        total = n_speech + n_audio
    speech_at = max(0, min(int(round(plan.speech_offset_s * rate)), total - n_speech))
    audio_at = max(0, min(int(round(plan.audio_offset_s * rate)), total - n_audio))

    speech_track = _place(speech_scaled.samples.astype(np.float64), speech_at, total)
    audio_track = _place(audio_scaled.samples.astype(np.float64), audio_at, total)
    mixture = speech_track + audio_track

    rescale_gain = 1.0
    peak = float(np.max(np.abs(mixture))) if total else 0.0
    if peak > 1.0:
        rescale_gain = 0.99 / peak
        mixture = mixture * rescale_gain

    snr_db = compute_snr(
        AudioClip(speech_track, rate, Role.SPEECH),
        AudioClip(audio_track, rate, Role.AUDIO),
    )
    return MixResult(
        mixture=AudioClip(mixture, rate, Role.MIXTURE),
        snr_db=snr_db,
        rescale_gain=rescale_gain,
        plan=plan,
    )


def compute_snr(speech: AudioClip, audio: AudioClip) -> float:
    """Speech-to-audio energy ratio in dB over the full padded timeline."""
    if len(speech.samples) != len(audio.samples):
        raise ValueError(
            f"length mismatch: speech {len(speech.samples)} vs audio {len(audio.samples)}"
        )
    speech_energy = float(np.sum(speech.samples.astype(np.float64) ** 2))
    audio_energy = float(np.sum(audio.samples.astype(np.float64) ** 2))
    if audio_energy == 0.0:
        raise ZeroEnergyError("audio component has zero energy; SNR undefined")
    if speech_energy == 0.0:
        return -math.inf
    return 10.0 * math.log10(speech_energy / audio_energy)

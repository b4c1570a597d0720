import numpy as np
import pytest
from scipy.io import wavfile

from conftest import tone
from spokenmix import (
    AudioClip,
    AudioIOError,
    Role,
    load_clip,
    peak_clip,
    resample_and_mixdown,
    save_clip,
    to_mono,
)


def test_clip_rejects_bad_rate_and_nonfinite():
    with pytest.raises(ValueError):
        AudioClip(np.zeros(10), 0)
    with pytest.raises(ValueError):
        AudioClip(np.array([0.0, np.nan]), 16000)
    with pytest.raises(ValueError):
        AudioClip(np.array([np.inf, 0.0]), 16000)


def test_one_second_of_silence_roundtrip(tmp_path):
    path = tmp_path / "silence.wav"
    save_clip(AudioClip(np.zeros(16000), 16000), path, encoding="pcm16")
    clip = load_clip(path, Role.SPEECH)
    assert clip.sample_rate == 16000
    assert len(clip.samples) == 16000
    assert np.all(clip.samples == 0.0)
    assert clip.role is Role.SPEECH


def test_float32_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(3)
    clip = AudioClip(rng.uniform(-1, 1, 4096), 22050)
    path = tmp_path / "f32.wav"
    save_clip(clip, path, encoding="float32")
    loaded = load_clip(path)
    assert loaded.samples.dtype == np.float32
    assert np.array_equal(loaded.samples, clip.samples)
    assert loaded.sample_rate == 22050


def test_pcm16_roundtrip_within_one_lsb(tmp_path):
    rng = np.random.default_rng(4)
    clip = AudioClip(rng.uniform(-1, 1, 8000), 16000)
    path = tmp_path / "i16.wav"
    save_clip(clip, path, encoding="pcm16")
    loaded = load_clip(path)
    assert np.max(np.abs(loaded.samples - clip.samples)) <= 2.0**-15


def test_save_rejects_nan_without_writing(tmp_path):
    clip = AudioClip(np.zeros(100), 16000)
    clip.samples[5] = np.nan  # mutate behind the constructor's back
    path = tmp_path / "bad.wav"
    with pytest.raises(AudioIOError, match="bad.wav"):
        save_clip(clip, path)
    assert not path.exists()


def test_save_rejects_unknown_encoding(tmp_path):
    with pytest.raises(ValueError, match="encoding"):
        save_clip(AudioClip(np.zeros(10), 16000), tmp_path / "x.wav", encoding="mp3")


def test_save_missing_parent_dir(tmp_path):
    with pytest.raises(AudioIOError, match="parent"):
        save_clip(AudioClip(np.zeros(10), 16000), tmp_path / "nope" / "x.wav")


def test_load_missing_file_names_path(tmp_path):
    with pytest.raises(AudioIOError, match="ghost.wav"):
        load_clip(tmp_path / "ghost.wav")


def test_load_8bit_is_unsupported_encoding(tmp_path):
    path = tmp_path / "u8.wav"
    wavfile.write(str(path), 8000, np.full(4000, 128, dtype=np.uint8))
    with pytest.raises(AudioIOError, match="unsupported encoding"):
        load_clip(path)


def test_load_truncated_header(tmp_path):
    good = tmp_path / "good.wav"
    save_clip(AudioClip(np.zeros(1000), 16000), good)
    bad = tmp_path / "bad.wav"
    bad.write_bytes(good.read_bytes()[:21])
    with pytest.raises(AudioIOError, match="bad.wav"):
        load_clip(bad)


def test_load_rejects_three_channels(tmp_path):
    path = tmp_path / "tri.wav"
    wavfile.write(str(path), 16000, np.zeros((100, 3), dtype=np.float32))
    with pytest.raises(AudioIOError, match="channels"):
        load_clip(path)


def test_resample_identity_when_rates_match():
    clip = tone(440, 0.5, 16000)
    out = resample_and_mixdown(clip, 16000)
    assert out.sample_rate == 16000
    assert np.array_equal(out.samples, clip.samples)


def test_opposite_stereo_channels_average_to_zero(tmp_path):
    x = np.sin(2 * np.pi * 300 * np.arange(8000) / 16000).astype(np.float32)
    path = tmp_path / "st.wav"
    wavfile.write(str(path), 16000, np.stack([x, -x], axis=1))
    mono = resample_and_mixdown(load_clip(path), 16000)
    assert mono.num_channels == 1
    assert np.max(np.abs(mono.samples)) == 0.0


def _dominant_frequency(samples, rate):
    windowed = samples * np.hanning(len(samples))
    spectrum = np.abs(np.fft.rfft(windowed))
    return np.fft.rfftfreq(len(samples), 1.0 / rate)[int(np.argmax(spectrum))]


@pytest.mark.parametrize("src_rate,dst_rate", [(48000, 16000), (44100, 16000), (16000, 48000)])
def test_resample_preserves_tone_frequency(src_rate, dst_rate):
    clip = tone(1000.0, 4.0, src_rate, amplitude=0.8)
    out = resample_and_mixdown(clip, dst_rate)
    assert out.sample_rate == dst_rate
    peak = _dominant_frequency(out.samples.astype(np.float64), dst_rate)
    assert abs(peak - 1000.0) <= 1.0  # 0.1%


@pytest.mark.parametrize("src_rate,dst_rate", [(48000, 16000), (44100, 16000), (22050, 44100)])
def test_resample_preserves_duration(src_rate, dst_rate):
    clip = tone(500.0, 1.37, src_rate)
    out = resample_and_mixdown(clip, dst_rate)
    assert abs(out.duration_seconds - clip.duration_seconds) <= 1.0 / dst_rate


def test_resample_rejects_bad_rate():
    with pytest.raises(ValueError):
        resample_and_mixdown(tone(440, 0.1, 16000), 0)


def test_to_mono_is_identity_on_mono():
    clip = tone(440, 0.2, 16000)
    assert to_mono(clip) is clip


def test_peak_clip_clamps_and_preserves():
    clip = AudioClip(np.array([1.0, -1.0, 0.3, -0.2]) * np.array([1.5, 1.5, 1.0, 1.0]), 16000)
    out = peak_clip(clip, 0.9)
    assert out.samples[0] == pytest.approx(0.9)
    assert out.samples[1] == pytest.approx(-0.9)
    assert out.samples[2] == np.float32(0.3)
    assert out.samples[3] == np.float32(-0.2)


def test_peak_clip_identity_within_bounds():
    rng = np.random.default_rng(5)
    clip = AudioClip(rng.uniform(-0.5, 0.5, 1000), 16000)
    assert np.array_equal(peak_clip(clip, 0.9).samples, clip.samples)


def test_peak_clip_idempotent():
    rng = np.random.default_rng(6)
    for seed in range(5):
        clip = AudioClip(np.clip(rng.normal(0, 1.0, 500), -1, 1), 8000)
        once = peak_clip(clip, 0.7)
        twice = peak_clip(once, 0.7)
        assert np.array_equal(once.samples, twice.samples)


def test_peak_clip_rejects_bad_limit():
    clip = tone(440, 0.1, 16000)
    for limit in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            peak_clip(clip, limit)

"""Shared signal factories for the test suite."""

import numpy as np

from spokenmix import AudioClip, Role


def tone(freq_hz, seconds, rate, amplitude=1.0, role=Role.OTHER):
    t = np.arange(int(round(seconds * rate))) / rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq_hz * t), rate, role)


def noise(seconds, rate, rms=0.1, seed=0, role=Role.OTHER):
    rng = np.random.default_rng(seed)
    samples = rng.normal(0.0, rms, int(round(seconds * rate)))
    return AudioClip(np.clip(samples, -1.0, 1.0), rate, role)


def speechlike(seconds, rate, seed=0, role=Role.SPEECH):
    """Noise with burst/pause envelope so the loudness gates have work to do."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate))
    samples = rng.normal(0.0, 0.15, n)
    envelope = np.zeros(n)
    position = 0
    while position < n:
        burst = int(rng.uniform(0.15, 0.5) * rate)
        pause = int(rng.uniform(0.05, 0.3) * rate)
        envelope[position : position + burst] = rng.uniform(0.4, 1.0)
        position += burst + pause
    return AudioClip(np.clip(samples * envelope, -1.0, 1.0), rate, role)

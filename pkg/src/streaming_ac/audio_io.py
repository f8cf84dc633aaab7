"""PCM16 mono WAV reading and writing (stdlib ``wave``)."""

from __future__ import annotations

import wave

import numpy as np

from .errors import FormatError


def read_wav(path, sample_rate: int) -> np.ndarray:
    """Samples in [-1, 1) as float32; rejects anything but PCM16 mono at ``sample_rate``."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
            if w.getframerate() != sample_rate:
                raise FormatError(
                    f"{path}: sample rate {w.getframerate()} Hz, expected {sample_rate} Hz (no resampling)"
                )
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a PCM WAV file ({exc})") from None
    return (np.frombuffer(raw, "<i2").astype(np.float32) / 32768.0).astype(np.float32)


def to_pcm16(samples) -> np.ndarray:
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 32767 / 32768)
    return np.round(x * 32768).astype("<i2")


def write_wav(path, samples, sample_rate: int) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(to_pcm16(samples).tobytes())

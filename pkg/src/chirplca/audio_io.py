"""Mono WAV ingest/emit and signal preparation for the dictionary."""

from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .dictionary import padded_length
from .exceptions import AudioFormatError, SampleRateMismatchError, UnsupportedCodecError

logger = logging.getLogger(__name__)

PCM16_SCALE = 32768.0


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    source_path: str = ""


def read_wav(path, expected_rate=None):
    """Read a PCM16 or float32 WAV file as mono samples in [-1, 1].

    Stereo (or multichannel) input is averaged. No resampling is done: a
    rate different from ``expected_rate`` is an error.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except ValueError as exc:
        if str(exc).startswith("Unknown wave file format"):
            raise UnsupportedCodecError(f"{path}: {exc}") from exc
        raise AudioFormatError(f"{path}: {exc}") from exc
    except (EOFError, struct.error) as exc:
        raise AudioFormatError(f"{path}: truncated or malformed WAV ({exc})") from exc

    if data.dtype == np.int16:
        samples = data.astype(float) / PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(float)
    else:
        raise UnsupportedCodecError(f"{path}: unsupported sample type {data.dtype}; need PCM16 or float32")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if expected_rate is not None and int(rate) != int(expected_rate):
        raise SampleRateMismatchError(f"{path}: sample rate {rate} Hz, expected {int(expected_rate)} Hz")
    if not np.all(np.isfinite(samples)):
        raise AudioFormatError(f"{path}: non-finite samples")
    return AudioClip(samples, int(rate), str(path))


def write_wav(path, clip):
    """Write a clip as 16-bit mono PCM; returns the number of clipped samples."""
    samples = np.asarray(clip.samples, dtype=float)
    if samples.size == 0:
        raise ValueError("refusing to write an empty clip")
    if not np.all(np.isfinite(samples)):
        raise ValueError("clip contains non-finite samples")
    clipped = int(np.count_nonzero(np.abs(samples) > 1.0))
    if clipped:
        logger.warning("clamping %d samples to [-1, 1] in %s", clipped, path)
    samples = np.clip(samples, -1.0, 1.0)
    pcm = np.clip(np.round(samples * PCM16_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(path, int(clip.sample_rate_hz), pcm)
    return clipped


def prepare(clip, config):
    """Peak-normalize and zero-pad so the strided dictionary covers every sample.

    ``clip`` may be an ``AudioClip`` or a bare array; ``config`` is a
    ``FilterbankConfig``.
    """
    x = np.asarray(clip.samples if isinstance(clip, AudioClip) else clip, dtype=float)
    peak = np.abs(x).max() if x.size else 0.0
    if peak == 0:
        raise ValueError("cannot prepare an all-zero clip")
    x = x / peak
    n = padded_length(x.size, config.filter_len, config.stride)
    if n > x.size:
        x = np.concatenate([x, np.zeros(n - x.size)])
    return x

"""Gammachirp impulse responses and their parameter derivatives.

A gammachirp is a gamma-envelope carrier whose phase carries a
logarithmic glide::

    g(t) = t**(l - 1) * exp(-2 pi b ERB(f) t) * cos(2 pi f t + c ln t)

With ``c = 0`` it reduces to the gammatone. Every channel of a bank owns
its own ``(l, b, c)``; the center frequencies are fixed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .exceptions import DegenerateFilterError

ERB_OFFSET_HZ = 24.7
ERB_SLOPE = 0.108

# Minimum pre-normalization norm before a filter is considered underflowed.
DEGENERATE_NORM = 1e-300

PRESETS = {
    "gt": {"chirp": 0.0, "bandwidth_scale": 1.0, "order": 4.0},
    "cgc": {"chirp": 0.979, "bandwidth_scale": 1.14, "order": 4.0},
}


def erb(freq_hz):
    """Equivalent rectangular bandwidth (Hz) at ``freq_hz``."""
    freq = np.asarray(freq_hz, dtype=float)
    if np.any(freq < 0):
        raise ValueError("erb() is undefined for negative frequencies")
    out = ERB_OFFSET_HZ + ERB_SLOPE * freq
    return float(out) if out.ndim == 0 else out


def erb_rate(freq_hz):
    """Number of ERBs below ``freq_hz`` (integral of 1/ERB)."""
    q = ERB_SLOPE / ERB_OFFSET_HZ
    return np.log1p(q * np.asarray(freq_hz, dtype=float)) / ERB_SLOPE


def erb_rate_to_hz(rate):
    q = ERB_SLOPE / ERB_OFFSET_HZ
    return np.expm1(ERB_SLOPE * np.asarray(rate, dtype=float)) / q


@dataclass(frozen=True)
class FilterbankConfig:
    """Geometry of the strided gammachirp dictionary.

    The default band puts channel 4 (counting from 0) of 16 at 734.7 Hz.
    """

    num_channels: int = 16
    filter_len: int = 1024
    stride: int = 10
    sample_rate_hz: float = 16000.0
    freq_min_hz: float = 260.0
    freq_max_hz: float = 6000.0

    def __post_init__(self):
        if self.num_channels < 1:
            raise ValueError("num_channels must be >= 1")
        if self.filter_len < 2:
            raise ValueError("filter_len must be >= 2")
        if not 1 <= self.stride <= self.filter_len:
            raise ValueError("stride must lie in [1, filter_len]")
        if not 0 < self.freq_min_hz < self.freq_max_hz < self.sample_rate_hz / 2:
            raise ValueError(
                "need 0 < freq_min_hz < freq_max_hz < sample_rate_hz / 2, got "
                f"{self.freq_min_hz}, {self.freq_max_hz}, fs={self.sample_rate_hz}"
            )


@dataclass(frozen=True)
class ChannelParams:
    """Gammachirp parameters of one channel."""

    center_freq_hz: float
    order: float
    bandwidth_scale: float
    chirp: float

    def validate(self, sample_rate_hz):
        if not 0 < self.center_freq_hz < sample_rate_hz / 2:
            raise ValueError(f"center frequency {self.center_freq_hz} Hz outside (0, fs/2)")
        if not self.order > 1:
            raise ValueError(f"order must be > 1, got {self.order}")
        if not self.bandwidth_scale > 0:
            raise ValueError(f"bandwidth_scale must be > 0, got {self.bandwidth_scale}")
        return self

    def with_values(self, **kwargs):
        return replace(self, **kwargs)


@dataclass(frozen=True)
class FilterSet:
    """Unit-norm impulse responses, one row per channel."""

    impulse_responses: np.ndarray
    norm_factors: np.ndarray

    @property
    def num_channels(self):
        return self.impulse_responses.shape[0]

    @property
    def filter_len(self):
        return self.impulse_responses.shape[1]


def center_frequencies(config):
    """Center frequencies equally spaced on the ERB-rate scale."""
    k = config.num_channels
    if k == 1:
        return np.array([float(config.freq_min_hz)])
    rates = np.linspace(erb_rate(config.freq_min_hz), erb_rate(config.freq_max_hz), k)
    freqs = erb_rate_to_hz(rates)
    # pin the endpoints against round-off in the warp
    freqs[0], freqs[-1] = config.freq_min_hz, config.freq_max_hz
    return freqs


def preset_params(config, preset="gt"):
    """Uniform bank parameters from a named preset (``"gt"`` or ``"cgc"``)."""
    try:
        values = PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
    return [ChannelParams(center_freq_hz=float(f), **values) for f in center_frequencies(config)]


def time_axis(config):
    # starts at 1/fs so that ln(t) is finite
    return np.arange(1, config.filter_len + 1) / config.sample_rate_hz


def _raw(params, t):
    env = t ** (params.order - 1) * np.exp(-2 * np.pi * params.bandwidth_scale * erb(params.center_freq_hz) * t)
    phase = 2 * np.pi * params.center_freq_hz * t + params.chirp * np.log(t)
    return env, phase


def synthesize(params, config):
    """Sample one gammachirp and normalize it to unit l2 norm.

    Returns
    -------
    samples : ndarray, shape (filter_len,)
    norm_factor : float
        l2 norm before normalization.
    """
    t = time_axis(config)
    env, phase = _raw(params, t)
    g = env * np.cos(phase)
    norm = float(np.linalg.norm(g))
    if not norm >= DEGENERATE_NORM:
        raise DegenerateFilterError(f"filter at {params.center_freq_hz:.1f} Hz underflowed (norm={norm:g})")
    return g / norm, norm


def synthesize_with_grads(params, config):
    """Normalized gammachirp plus its partials w.r.t. chirp, bandwidth and order.

    The partials are those of the *normalized* samples, so each one is
    orthogonal to the returned samples.
    """
    t = time_axis(config)
    env, phase = _raw(params, t)
    g = env * np.cos(phase)
    norm = float(np.linalg.norm(g))
    if not norm >= DEGENERATE_NORM:
        raise DegenerateFilterError(f"filter at {params.center_freq_hz:.1f} Hz underflowed (norm={norm:g})")
    log_t = np.log(t)
    dg_dc = -env * np.sin(phase) * log_t
    dg_db = -2 * np.pi * erb(params.center_freq_hz) * t * g
    dg_dl = log_t * g
    h = g / norm
    grads = [(dg - h * np.dot(h, dg)) / norm for dg in (dg_dc, dg_db, dg_dl)]
    return h, grads[0], grads[1], grads[2]


def build_filters(params: Sequence[ChannelParams], config: FilterbankConfig) -> FilterSet:
    """Synthesize the whole bank."""
    rows, norms = zip(*(synthesize(p, config) for p in params))
    return FilterSet(np.vstack(rows), np.asarray(norms))


def build_filters_with_grads(params, config):
    """Bank plus partials stacked as ``(3, k, filter_len)`` in (c, b, l) order."""
    out = [synthesize_with_grads(p, config) for p in params]
    h = np.vstack([o[0] for o in out])
    grads = np.stack([np.vstack([o[j] for o in out]) for j in (1, 2, 3)])
    return h, grads


def params_to_array(params):
    """``(k, 3)`` array of the learnable (chirp, bandwidth_scale, order) values."""
    return np.array([[p.chirp, p.bandwidth_scale, p.order] for p in params], dtype=float)


def params_from_array(params, values):
    return [
        p.with_values(chirp=float(v[0]), bandwidth_scale=float(v[1]), order=float(v[2]))
        for p, v in zip(params, values)
    ]


def params_to_json(params, config=None):
    doc = {
        "channels": [
            {"f": p.center_freq_hz, "l": p.order, "b": p.bandwidth_scale, "c": p.chirp} for p in params
        ]
    }
    if config is not None:
        doc["filterbank"] = asdict(config)
    return doc


def params_from_json(doc):
    """Inverse of ``params_to_json``; returns ``(params, config or None)``."""
    try:
        params = [
            ChannelParams(float(ch["f"]), float(ch["l"]), float(ch["b"]), float(ch["c"])) for ch in doc["channels"]
        ]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed parameter document: {exc}") from exc
    config = FilterbankConfig(**doc["filterbank"]) if "filterbank" in doc else None
    return params, config


def save_params(path, params, config=None):
    with open(path, "w") as fh:
        json.dump(params_to_json(params, config), fh, indent=2)
        fh.write("\n")


def load_params(path):
    with open(path) as fh:
        return params_from_json(json.load(fh))

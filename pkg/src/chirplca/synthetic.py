"""Deterministic synthetic audio corpus.

Each clip mixes log-frequency sweeps, damped harmonic bursts whose
partials glide like gammachirps, and a little band-limited noise. The
mixture is low-passed at ``BAND_EDGE`` of the Nyquist frequency so the top
of the spectrum is empty, and every clip is peak-normalized.
"""

import numpy as np

BAND_EDGE = 0.65
NOISE_LEVEL = 0.01
# Burst partials share a gammachirp shape that differs from the gammatone.
CHIRP_RANGE = (1.0, 2.5)
BANDWIDTH_RANGE = (1.4, 2.0)
ORDER_RANGE = (2.5, 3.5)
F0_RANGE = (180.0, 420.0)
SWEEPS = (0, 2)
BURSTS = (3, 6)


def _sweep(rng, t, fs, f_hi):
    n = t.size
    f0, f1 = np.exp(rng.uniform(np.log(F0_RANGE[0]), np.log(f_hi), size=2))
    start = rng.uniform(0, 0.5) * t[-1]
    length = rng.uniform(0.3, 0.6) * t[-1]
    local = t - start
    inside = (local >= 0) & (local <= length)
    frac = np.clip(local / length, 0, 1)
    freq = f0 * (f1 / f0) ** frac
    phase = 2 * np.pi * np.cumsum(freq) / fs + rng.uniform(0, 2 * np.pi)
    window = np.where(inside, np.sin(np.pi * frac) ** 2, 0.0)
    return rng.uniform(0.3, 1.0) * window * np.cos(phase)


def _burst(rng, t, fs, f_hi):
    f0 = np.exp(rng.uniform(np.log(F0_RANGE[0]), np.log(F0_RANGE[1])))
    onset = rng.uniform(0, 0.8) * t[-1]
    chirp = rng.uniform(*CHIRP_RANGE)
    order = rng.uniform(*ORDER_RANGE)
    bw = rng.uniform(*BANDWIDTH_RANGE)
    local = t - onset
    on = local > 0
    tl = np.where(on, local, 1.0)
    out = np.zeros_like(t)
    n_harm = int(min(8, f_hi // f0))
    for h in range(1, n_harm + 1):
        f = h * f0
        erb = 24.7 + 0.108 * f
        env = tl ** (order - 1) * np.exp(-2 * np.pi * bw * erb * tl)
        env /= env.max()
        wave = env * np.cos(2 * np.pi * f * tl + chirp * np.log(tl) + rng.uniform(0, 2 * np.pi))
        out += np.where(on, wave, 0.0) / h
    return rng.uniform(0.4, 1.0) * out


def _lowpass(x, fs, f_hi):
    spec = np.fft.rfft(x)
    spec[np.fft.rfftfreq(x.size, 1 / fs) > f_hi] = 0
    return np.fft.irfft(spec, x.size)


def _noise(rng, n, fs, f_hi):
    noise = _lowpass(rng.standard_normal(n), fs, f_hi)
    return noise / (np.abs(noise).max() + 1e-300)


def make_synthetic_corpus(count, seed=0, sample_rate=16000, duration=0.25):
    """Generate ``count`` peak-normalized clips.

    Returns
    -------
    list of ndarray
        Each of length ``round(duration * sample_rate)``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n = int(round(duration * sample_rate))
    if n < 2:
        raise ValueError("duration too short for the sample rate")
    f_hi = BAND_EDGE * sample_rate / 2
    t = np.arange(1, n + 1) / sample_rate
    rng = np.random.default_rng(seed)
    clips = []
    for _ in range(count):
        x = np.zeros(n)
        for _ in range(rng.integers(*SWEEPS)):
            x += _sweep(rng, t, sample_rate, f_hi)
        for _ in range(rng.integers(*BURSTS)):
            x += _burst(rng, t, sample_rate, f_hi)
        x += NOISE_LEVEL * _noise(rng, n, sample_rate, f_hi)
        # burst onsets sweep fast through ln(t); cut what leaks past the band
        x = _lowpass(x, sample_rate, f_hi)
        clips.append(x / np.abs(x).max())
    return clips

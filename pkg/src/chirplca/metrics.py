"""Evaluation artifacts: box statistics, filter responses, inhibition summaries
and corpus-level comparisons of dictionaries."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from .dictionary import StridedDictionary
from .exceptions import ChirpLCAError
from .filterbank import FilterSet, build_filters
from .lca import encode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoxStats:
    """Box-plot summary; whiskers are the data extrema."""

    median: float
    q1: float
    q3: float
    lo_whisker: float
    hi_whisker: float
    n: int


def box_stats(values):
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("box_stats needs at least one value")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return BoxStats(float(med), float(q1), float(q3), float(x.min()), float(x.max()), int(x.size))


@dataclass
class FilterResponse:
    freqs_hz: np.ndarray
    magnitude_db: np.ndarray  # (channels, grid)


def log_grid(sample_rate_hz, grid_size=512, f_min=50.0):
    """Log-spaced frequencies from ``f_min`` up to just below Nyquist."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    nyq = sample_rate_hz / 2
    return np.geomspace(f_min, nyq, grid_size + 1)[:-1]


def magnitude_response(filters, sample_rate_hz, grid_size=512, f_min=50.0):
    """Magnitude in dB of each impulse response on a log frequency grid.

    The transform is evaluated exactly at the grid points, which is the
    limit of an arbitrarily zero-padded DFT.
    """
    h = filters.impulse_responses if isinstance(filters, FilterSet) else np.asarray(filters, dtype=float)
    freqs = log_grid(sample_rate_hz, grid_size, f_min)
    n = np.arange(h.shape[1])
    basis = np.exp(-2j * np.pi * np.outer(n, freqs) / sample_rate_hz)
    mag = np.abs(h @ basis)
    return FilterResponse(freqs, 20 * np.log10(np.maximum(mag, 1e-300)))


def inhibition_matrix(gram):
    """Strongest lateral-inhibition weight between each pair of channels.

    Entry ``(i, j)`` is the largest absolute cross-correlation over all
    lags. Same-channel interactions are excluded, so the diagonal is 0.
    """
    mat = np.abs(gram.cross_corr).max(axis=2)
    np.fill_diagonal(mat, 0.0)
    return mat


def off_adjacent_mean(matrix):
    """Mean inhibition weight between channels that are not neighbours."""
    k = matrix.shape[0]
    i, j = np.triu_indices(k, k=2)
    return float(matrix[i, j].mean()) if i.size else 0.0


@dataclass
class ClipRecord:
    clip: str
    dict: str
    mse: float
    spikes: int
    final_energy: float


@dataclass
class Evaluation:
    records: List[ClipRecord] = field(default_factory=list)
    summary: Dict[str, dict] = field(default_factory=dict)
    failures: Dict[str, int] = field(default_factory=dict)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["clip", "dict", "mse", "spikes", "final_energy"])
            for r in self.records:
                writer.writerow([r.clip, r.dict, repr(r.mse), r.spikes, repr(r.final_energy)])

    def to_json(self):
        return {
            name: {"mse": asdict(s["mse"]), "spikes": asdict(s["spikes"]), "failures": self.failures.get(name, 0)}
            for name, s in self.summary.items()
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _filters_of(spec, fb_config):
    if isinstance(spec, FilterSet):
        return spec.impulse_responses
    if isinstance(spec, np.ndarray):
        return spec
    return build_filters(spec, fb_config).impulse_responses


def evaluate_corpus(dicts, corpus, fb_config, lca_config, threads=1):
    """Encode every clip with every dictionary and summarize.

    Parameters
    ----------
    dicts : mapping name -> list of ChannelParams, FilterSet or filter array
    corpus : sequence of (clip name, prepared signal) pairs
    fb_config : FilterbankConfig
    lca_config : LcaConfig
    threads : int
        Clips are encoded concurrently; results are collected in input order.
    """
    if not dicts:
        raise ValueError("need at least one dictionary")
    corpus = list(corpus)
    if not corpus:
        raise ValueError("need at least one clip")
    out = Evaluation()
    for name, spec in dicts.items():
        h = _filters_of(spec, fb_config)
        cache = {}

        def run(item):
            clip_name, sig = item
            d, g = cache[sig.size]
            try:
                res = encode(sig, d, g, lca_config)
            except ChirpLCAError as exc:
                logger.warning("clip %s with dictionary %s failed: %s", clip_name, name, exc)
                return None
            return ClipRecord(clip_name, name, res.mse, res.spike_count, res.energy)

        for _, sig in corpus:
            if sig.size not in cache:
                d = StridedDictionary(h, fb_config.stride, sig.size)
                cache[sig.size] = (d, d.gram())
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run, corpus))
        else:
            results = [run(item) for item in corpus]
        good = [r for r in results if r is not None]
        out.failures[name] = len(results) - len(good)
        out.records.extend(good)
        if good:
            out.summary[name] = {
                "mse": box_stats([r.mse for r in good]),
                "spikes": box_stats([r.spikes for r in good]),
            }
    return out


def write_response_csv(path, response):
    k = response.magnitude_db.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["freq_hz"] + [f"ch{i}" for i in range(k)])
        for f, row in zip(response.freqs_hz, response.magnitude_db.T):
            writer.writerow([repr(float(f))] + [repr(float(v)) for v in row])


def write_matrix_csv(path, matrix):
    np.savetxt(path, matrix, delimiter=",", fmt="%.17g")

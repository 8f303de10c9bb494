"""Locally Competitive Algorithm with hard thresholding.

Membrane potentials ``u`` follow leaky-integrator dynamics driven by the
signal projection ``p = D.T s`` and inhibited by active neighbours::

    u <- (dt/tau) * (p - (D.T D - I) a) + (1 - dt/tau) * u
    a <- T_lambda(u)

integrated with forward Euler from rest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .exceptions import DivergenceError


@dataclass(frozen=True)
class LcaConfig:
    tau: float = 0.01
    dt: float = 1e-4
    num_iters: int = 64
    threshold: float = 0.1

    def __post_init__(self):
        if not 0 < self.dt < self.tau:
            raise ValueError(f"need 0 < dt < tau, got dt={self.dt}, tau={self.tau}")
        if self.num_iters < 1:
            raise ValueError("num_iters must be >= 1")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")

    @property
    def rate(self):
        """Euler step relative to the time constant."""
        return self.dt / self.tau


@dataclass
class LcaState:
    potentials: np.ndarray
    activations: np.ndarray

    @classmethod
    def rest(cls, num_atoms):
        return cls(np.zeros(num_atoms), np.zeros(num_atoms))


@dataclass
class EncodeResult:
    """Outcome of one LCA run.

    ``*_trace`` arrays hold one value per iteration (iteration 1 first).
    ``potential_trace`` is only filled when the run was asked to keep it;
    row ``t`` holds ``u`` after ``t`` steps, row 0 being the resting state.
    """

    coefficients: np.ndarray
    potentials: np.ndarray
    spike_count: int
    mse: float
    energy_trace: np.ndarray
    mse_trace: np.ndarray
    spike_trace: np.ndarray
    reconstruction: np.ndarray
    potential_trace: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def energy(self):
        return float(self.energy_trace[-1])


def hard_threshold(u, threshold):
    """Zero every entry with ``|u| < threshold``; pass the rest through."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) < threshold, 0.0, u)
    return float(out) if out.ndim == 0 else out


def sparsity_cost(coeffs, threshold):
    """``lambda * S(a)`` for the hard threshold: ``lambda**2 / 2`` per active unit."""
    return 0.5 * threshold**2 * np.count_nonzero(coeffs)


def energy(signal, coeffs, dictionary, threshold):
    resid = dictionary.synthesize(coeffs) - signal
    return 0.5 * float(resid @ resid) + sparsity_cost(coeffs, threshold)


def step(state, projection, dictionary, gram, config):
    """Advance the potentials by one Euler step and re-threshold."""
    if projection.shape != state.potentials.shape:
        raise ValueError(f"projection shape {projection.shape} != state shape {state.potentials.shape}")
    a = state.activations
    alpha = config.rate
    drive = projection - dictionary.inhibit(gram, a) if np.any(a) else projection
    u = alpha * drive + (1 - alpha) * state.potentials
    return LcaState(u, hard_threshold(u, config.threshold))


def encode(signal, dictionary, gram, config, keep_potentials=False):
    """Run the LCA from rest for ``config.num_iters`` steps.

    Parameters
    ----------
    signal : ndarray, shape (dictionary.signal_len,)
    dictionary : StridedDictionary
    gram : GramTable
    config : LcaConfig
    keep_potentials : bool
        Retain ``u`` after every step, as needed by the backward pass.

    Raises
    ------
    DivergenceError
        If a potential becomes non-finite.
    """
    signal = np.asarray(signal, dtype=float)
    p = dictionary.analyze(signal)
    state = LcaState.rest(dictionary.num_atoms)
    n = config.num_iters
    energies, mses, spikes = np.empty(n), np.empty(n), np.empty(n, dtype=np.int64)
    history = np.zeros((n + 1, dictionary.num_atoms)) if keep_potentials else None
    lam_cost = 0.5 * config.threshold**2
    recon = np.zeros_like(signal)
    for it in range(n):
        state = step(state, p, dictionary, gram, config)
        if not np.all(np.isfinite(state.potentials)):
            raise DivergenceError(f"non-finite membrane potential at iteration {it + 1}", iteration=it + 1)
        if history is not None:
            history[it + 1] = state.potentials
        recon = dictionary.synthesize(state.activations)
        resid = recon - signal
        sq = float(resid @ resid)
        count = int(np.count_nonzero(state.activations))
        energies[it] = 0.5 * sq + lam_cost * count
        mses[it] = sq / signal.size
        spikes[it] = count
    return EncodeResult(
        coefficients=state.activations,
        potentials=state.potentials,
        spike_count=int(spikes[-1]),
        mse=float(mses[-1]),
        energy_trace=energies,
        mse_trace=mses,
        spike_trace=spikes,
        reconstruction=recon,
        potential_trace=history,
    )


def spikegram(result, dictionary) -> List[tuple]:
    """``(channel, time_index, amplitude)`` for every nonzero coefficient.

    Sorted by channel, then time; ``time_index`` is in samples.
    """
    coeffs = result.coefficients if isinstance(result, EncodeResult) else np.asarray(result)
    grid = dictionary.as_grid(coeffs)
    chans, shifts = np.nonzero(grid)
    return [(int(i), int(j) * dictionary.stride, float(grid[i, j])) for i, j in zip(chans, shifts)]


def write_spikegram_csv(path, spikes):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["channel", "time_index", "amplitude"])
        for channel, time_index, amp in spikes:
            writer.writerow([channel, time_index, repr(amp)])


def read_spikegram_csv(path):
    with open(path, newline="") as fh:
        return [(int(r["channel"]), int(r["time_index"]), float(r["amplitude"])) for r in csv.DictReader(fh)]


def write_trace_csv(path, result):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "mse", "spikes", "energy"])
        for it, (mse, n, e) in enumerate(zip(result.mse_trace, result.spike_trace, result.energy_trace), 1):
            writer.writerow([it, repr(float(mse)), int(n), repr(float(e))])

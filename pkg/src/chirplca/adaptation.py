"""Gradient-based adaptation of the per-channel gammachirp parameters.

The backward pass is a hand-written adjoint of the unrolled Euler
recursion. The reconstruction term is differentiated exactly, hard
threshold masks included. The sparsity term enters at the final step as
``u - a`` with the threshold derivative replaced by one, because the
exact product of the cost gradient and ``T'`` vanishes everywhere.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dictionary import StridedDictionary
from .exceptions import DivergenceError
from .filterbank import (
    build_filters_with_grads,
    params_from_array,
    params_to_array,
)
from .lca import LcaConfig, encode, energy

logger = logging.getLogger(__name__)

PARAM_NAMES = ("chirp", "bandwidth_scale", "order")
MIN_ORDER = 1.05
MIN_BANDWIDTH = 0.02


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 8
    num_epochs: int = 10
    buffer_size: int = 8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.buffer_size < 1:
            raise ValueError("batch_size and buffer_size must be >= 1")
        if self.num_epochs < 0:
            raise ValueError("num_epochs must be >= 0")


@dataclass
class ParamGradients:
    d_chirp: np.ndarray
    d_bandwidth: np.ndarray
    d_order: np.ndarray

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())

    def as_array(self):
        """``(k, 3)`` in (chirp, bandwidth_scale, order) column order."""
        return np.column_stack([self.d_chirp, self.d_bandwidth, self.d_order])

    def check_finite(self):
        arr = self.as_array()
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            ch, col = bad[0]
            raise DivergenceError(f"non-finite gradient for {PARAM_NAMES[col]} of channel {ch}")
        return self


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape), 0)


def loss(signal, coefficients, dictionary, threshold):
    """LCA energy: half squared residual plus the hard-threshold sparsity cost."""
    return energy(np.asarray(signal, dtype=float), coefficients, dictionary, threshold)


def filter_gradient(signal, result, dictionary, config, terms="both"):
    """Gradient of the final-step energy with respect to the filter taps.

    Parameters
    ----------
    signal : ndarray
    result : EncodeResult
        Must come from ``encode(..., keep_potentials=True)`` on the same
        dictionary.
    dictionary : StridedDictionary
    config : LcaConfig
    terms : {"both", "reconstruction", "sparsity"}

    Returns
    -------
    ndarray, shape (channels, filter_len)
    """
    if terms not in ("both", "reconstruction", "sparsity"):
        raise ValueError(f"unknown terms {terms!r}")
    hist = result.potential_trace
    if hist is None:
        raise ValueError("encode result carries no potential trace; rerun encode with keep_potentials=True")
    n_iter = config.num_iters
    if hist.shape != (n_iter + 1, dictionary.num_atoms):
        raise ValueError(
            f"potential trace has shape {hist.shape}, expected {(n_iter + 1, dictionary.num_atoms)}"
        )
    s = np.asarray(signal, dtype=float)
    lam = config.threshold
    alpha = config.rate

    def act(u):
        return np.where(np.abs(u) < lam, 0.0, u)

    def mask(u):
        return (np.abs(u) >= lam).astype(float)

    u_k = hist[n_iter]
    a_k = act(u_k)
    grad_h = np.zeros_like(dictionary.filters)
    grad_u = np.zeros(dictionary.num_atoms)
    if terms in ("both", "reconstruction"):
        resid = dictionary.synthesize(a_k) - s
        grad_h += dictionary.correlate(resid, a_k)
        grad_u += mask(u_k) * dictionary.analyze(resid)
    if terms in ("both", "sparsity"):
        # straight-through: d(lambda S)/du = u - a, T' treated as 1
        grad_u += u_k - a_k

    grad_p = np.zeros(dictionary.num_atoms)
    for t in range(n_iter, 0, -1):
        grad_p += alpha * grad_u
        if t == 1:
            break
        u_prev = hist[t - 1]
        a_prev = act(u_prev)
        if np.any(a_prev):
            # u_t contains -alpha * (D.T D) a_prev; differentiate through D
            grad_h -= alpha * (
                dictionary.correlate(dictionary.synthesize(a_prev), grad_u)
                + dictionary.correlate(dictionary.synthesize(grad_u), a_prev)
            )
        grad_a = -alpha * (dictionary.normal(grad_u) - grad_u)
        grad_u = (1 - alpha) * grad_u + mask(u_prev) * grad_a
    grad_h += dictionary.correlate(s, grad_p)
    return grad_h


def backward(signal, result, dictionary, filter_grads, config, terms="both"):
    """Gradients of the LCA energy with respect to every channel's (c, b, l).

    ``filter_grads`` is the ``(3, k, filter_len)`` stack of normalized
    filter partials returned by ``build_filters_with_grads``.
    """
    grad_h = filter_gradient(signal, result, dictionary, config, terms=terms)
    per_param = np.einsum("pkn,kn->kp", np.asarray(filter_grads), grad_h)
    return ParamGradients.from_array(per_param).check_finite()


def adam_update(values, grads, state, config):
    """One bias-corrected Adam step on the ``(k, 3)`` parameter array.

    Orders below ``MIN_ORDER`` and bandwidth scales below ``MIN_BANDWIDTH``
    are clamped back and logged.

    Returns
    -------
    new_values : ndarray
    new_state : AdamState
    """
    values = np.asarray(values, dtype=float)
    g = grads.as_array() if isinstance(grads, ParamGradients) else np.asarray(grads, dtype=float)
    if g.shape != values.shape or state.first_moment.shape != values.shape:
        raise ValueError(f"shape mismatch: params {values.shape}, grads {g.shape}, state {state.first_moment.shape}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    step = state.step_count + 1
    m = b1 * state.first_moment + (1 - b1) * g
    v = b2 * state.second_moment + (1 - b2) * g * g
    m_hat = m / (1 - b1**step)
    v_hat = v / (1 - b2**step)
    new = values - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    new = _clamp(new)
    return new, AdamState(m, v, step)


def _clamp(values):
    values = values.copy()
    for col, floor, name in ((1, MIN_BANDWIDTH, "bandwidth_scale"), (2, MIN_ORDER, "order")):
        low = values[:, col] < floor
        if np.any(low):
            logger.warning("clamping %s of channels %s to %g", name, np.flatnonzero(low).tolist(), floor)
            values[low, col] = floor
    return values


@dataclass
class TrainResult:
    params: list
    log: List[dict] = field(default_factory=list)
    adam_state: Optional[AdamState] = None
    skipped: int = 0


def _snapshot(params):
    return [
        {"f": p.center_freq_hz, "l": p.order, "b": p.bandwidth_scale, "c": p.chirp} for p in params
    ]


def train(dataset, initial_params, fb_config, lca_config=None, train_config=None, log_path=None):
    """Adapt the filterbank on a list of prepared signals.

    Signals are encoded in mini-batches with the current dictionary and
    their forward traces are stacked in a buffer. Every ``buffer_size``
    traces (and at the end of each epoch) the buffer is flushed: each
    trace is back-propagated, the gradients are averaged and a single
    Adam step is taken. Gradients never cross signal boundaries.

    Parameters
    ----------
    dataset : sequence of 1-D arrays
        Each already padded to a length accepted by the dictionary.
    initial_params : list of ChannelParams
    fb_config : FilterbankConfig
    lca_config : LcaConfig, optional
    train_config : TrainConfig, optional
    log_path : path, optional
        Write one JSON line per flush.
    """
    lca_config = lca_config or LcaConfig()
    train_config = train_config or TrainConfig()
    signals = [np.asarray(s, dtype=float) for s in dataset]
    if not signals:
        raise ValueError("cannot train on an empty dataset")
    params = list(initial_params)
    values = params_to_array(params)
    state = AdamState.zeros(values.shape)
    rng = np.random.default_rng(train_config.rng_seed)
    result = TrainResult(params=params, adam_state=state)
    log_fh = open(log_path, "w") if log_path is not None else None

    cache = {}

    def current():
        if "filters" not in cache:
            cache["filters"] = build_filters_with_grads(params, fb_config)
        return cache["filters"]

    def dictionary_for(length):
        key = ("dict", length)
        if key not in cache:
            h, _ = current()
            d = StridedDictionary(h, fb_config.stride, length)
            cache[key] = (d, d.gram())
        return cache[key]

    buffer = []

    def flush():
        nonlocal params, values, state
        _, grads = current()
        total = np.zeros_like(values)
        for sig, res in buffer:
            d, _ = dictionary_for(sig.size)
            total += backward(sig, res, d, grads, lca_config).as_array()
        mean_grad = total / len(buffer)
        values, state = adam_update(values, mean_grad, state, train_config)
        record = {
            "flush_index": state.step_count - 1,
            "mean_loss": float(np.mean([r.energy for _, r in buffer])),
            "mean_mse": float(np.mean([r.mse for _, r in buffer])),
            "mean_spikes": float(np.mean([r.spike_count for _, r in buffer])),
        }
        params = params_from_array(params, values)
        record["params"] = _snapshot(params)
        result.log.append(record)
        if log_fh is not None:
            log_fh.write(json.dumps(record) + "\n")
            log_fh.flush()
        logger.info("flush %d: loss %.6g, spikes %.1f", record["flush_index"], record["mean_loss"], record["mean_spikes"])
        buffer.clear()
        cache.clear()

    try:
        for epoch in range(train_config.num_epochs):
            order = rng.permutation(len(signals))
            for start in range(0, len(order), train_config.batch_size):
                batch = order[start : start + train_config.batch_size]
                encoded = 0
                for idx in batch:
                    sig = signals[idx]
                    d, gram = dictionary_for(sig.size)
                    try:
                        res = encode(sig, d, gram, lca_config, keep_potentials=True)
                    except DivergenceError as exc:
                        logger.warning("skipping signal %d in epoch %d: %s", idx, epoch, exc)
                        result.skipped += 1
                        continue
                    encoded += 1
                    buffer.append((sig, res))
                    if len(buffer) >= train_config.buffer_size:
                        flush()
                if encoded == 0:
                    raise DivergenceError(f"every signal of a mini-batch diverged in epoch {epoch}")
            if buffer:
                flush()
    finally:
        if log_fh is not None:
            log_fh.close()
    result.params = params
    result.adam_state = state
    return result


def read_training_log(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]

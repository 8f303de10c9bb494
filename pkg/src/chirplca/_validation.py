"""Input checks shared by the estimator and the CLI."""

import numbers

import numpy as np


def check_signal(x, name="signal"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if x.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or infinite samples")
    return x


def check_signals(X):
    """Coerce a 2-D array or a sequence of 1-D arrays to a list of float signals."""
    if isinstance(X, np.ndarray):
        if X.ndim == 1:
            raise ValueError("expected a batch of signals; wrap a single signal as [x] or x[None, :]")
        if X.ndim != 2:
            raise ValueError(f"expected a 2-D array of signals, got shape {X.shape}")
        signals = list(X)
    else:
        signals = list(X)
    if not signals:
        raise ValueError("no signals given")
    return [check_signal(x, f"signal {i}") for i, x in enumerate(signals)]


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def stack_if_uniform(arrays):
    """Stack equal-length arrays into 2-D; otherwise return the list."""
    if len({a.shape for a in arrays}) == 1:
        return np.vstack(arrays)
    return arrays

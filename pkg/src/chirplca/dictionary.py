"""Matrix-free strided convolutional dictionary.

Atom ``(i, j)`` is filter ``i`` placed at sample offset ``j * stride``.
Coefficient vectors are flat and channel-major: atom ``(i, j)`` lives at
index ``i * num_shifts + j``. The dense matrix is never formed; the Gram
matrix is stored per channel pair and stride-multiple lag, which is all
that shift invariance leaves.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .filterbank import FilterSet


def padded_length(n, filter_len, stride):
    """Smallest length >= max(n, filter_len) that leaves no tail uncovered."""
    if n <= filter_len:
        return filter_len
    return filter_len + -(-(n - filter_len) // stride) * stride


@dataclass(frozen=True)
class GramTable:
    """Cross-correlations of every filter pair at stride-multiple lags.

    ``cross_corr[i, q, lag + lag_radius]`` is the inner product between
    atom ``(i, j + lag)`` and atom ``(q, j)``, i.e.
    ``sum_n h_i[n] h_q[n + lag * stride]``.
    """

    cross_corr: np.ndarray
    lag_radius: int

    @cached_property
    def stacked(self):
        """``(k * lags, k)`` layout so a column of coefficients maps to its lag window by one matmul."""
        k, _, nd = self.cross_corr.shape
        return np.ascontiguousarray(self.cross_corr.transpose(0, 2, 1)).reshape(k * nd, k)

    def at(self, i, q, lag):
        if abs(lag) > self.lag_radius:
            return 0.0
        return float(self.cross_corr[i, q, lag + self.lag_radius])


class StridedDictionary:
    """Implicit operator for a bank of filters strided across a signal.

    Parameters
    ----------
    filters : FilterSet or ndarray of shape (k, filter_len)
        Rows are expected to have unit norm.
    stride : int
    signal_len : int
        Must be at least ``filter_len``; shorter signals have to be padded
        by the caller.
    """

    def __init__(self, filters, stride, signal_len):
        h = filters.impulse_responses if isinstance(filters, FilterSet) else np.asarray(filters, dtype=float)
        if h.ndim != 2:
            raise ValueError("filters must be a 2-D array (channels x taps)")
        k, flen = h.shape
        stride = int(stride)
        signal_len = int(signal_len)
        if not 1 <= stride <= flen:
            raise ValueError("stride must lie in [1, filter_len]")
        if signal_len < flen:
            raise ValueError(f"signal_len {signal_len} shorter than filter_len {flen}; pad the signal first")
        self.filters = h
        self.stride = stride
        self.signal_len = signal_len
        self.num_channels = k
        self.filter_len = flen
        self.num_shifts = (signal_len - flen) // stride + 1
        self.num_atoms = k * self.num_shifts
        self._blocks = -(-flen // stride)
        padded = np.zeros((k, self._blocks * stride))
        padded[:, :flen] = h
        self._padded = padded

    @classmethod
    def build(cls, filters, stride, signal_len):
        return cls(filters, stride, signal_len)

    def __repr__(self):
        return (
            f"StridedDictionary(channels={self.num_channels}, filter_len={self.filter_len}, "
            f"stride={self.stride}, signal_len={self.signal_len}, atoms={self.num_atoms})"
        )

    @property
    def lag_radius(self):
        return self._blocks - 1

    def as_grid(self, coeffs):
        """View flat coefficients as ``(channels, shifts)``."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape == (self.num_channels, self.num_shifts):
            return coeffs
        if coeffs.shape != (self.num_atoms,):
            raise ValueError(f"expected {self.num_atoms} coefficients, got shape {coeffs.shape}")
        return coeffs.reshape(self.num_channels, self.num_shifts)

    def unravel(self, index):
        """Flat atom index to ``(channel, shift)``."""
        return divmod(int(index), self.num_shifts)

    def _windows(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.signal_len,):
            raise ValueError(f"expected a signal of length {self.signal_len}, got shape {x.shape}")
        # a contiguous copy makes the following matmul several times faster
        return np.ascontiguousarray(sliding_window_view(x, self.filter_len)[:: self.stride][: self.num_shifts])

    def analyze(self, signal):
        """Project a signal onto every atom (``D.T @ s``), flat."""
        return (self.filters @ self._windows(signal).T).ravel()

    def correlate(self, signal, weights):
        """``sum_j weights[i, j] * signal[j*stride + n]`` as a ``(k, filter_len)`` array.

        This is the derivative of ``<signal, D @ weights>`` with respect to
        the filter taps.
        """
        return self.as_grid(weights) @ self._windows(signal)

    def synthesize(self, coeffs):
        """Overlap-add of the atoms weighted by ``coeffs`` (``D @ a``)."""
        a = self.as_grid(coeffs)
        m, r, nb = self.num_shifts, self.stride, self._blocks
        contrib = (a.T @ self._padded).reshape(m, nb, r)
        out = np.zeros((m + nb - 1, r))
        for q in range(nb):
            out[q : q + m] += contrib[:, q, :]
        flat = out.ravel()
        if flat.size >= self.signal_len:
            return flat[: self.signal_len].copy()
        return np.concatenate([flat, np.zeros(self.signal_len - flat.size)])

    synthesize_signal = synthesize

    def normal(self, coeffs):
        """``D.T @ D @ x`` for a dense coefficient vector."""
        return self.analyze(self.synthesize(coeffs))

    def gram(self):
        h, r, flen, radius = self.filters, self.stride, self.filter_len, self.lag_radius
        k = self.num_channels
        cc = np.zeros((k, k, 2 * radius + 1))
        for lag in range(radius + 1):
            block = h[:, : flen - lag * r] @ h[:, lag * r :].T
            cc[:, :, radius + lag] = block
            cc[:, :, radius - lag] = block.T
        return GramTable(cc, radius)

    def inhibit(self, gram, active):
        """Lateral inhibition ``(D.T D - I) a`` from the active coefficients only.

        Parameters
        ----------
        gram : GramTable
        active : mapping of flat index -> value, or dense coefficient array
            Only nonzero entries are visited.

        Returns
        -------
        ndarray, shape (num_atoms,)
        """
        k, m = self.num_channels, self.num_shifts
        radius = gram.lag_radius
        if isinstance(active, Mapping):
            idx = np.fromiter(active.keys(), dtype=np.int64, count=len(active))
            val = np.fromiter(active.values(), dtype=float, count=len(active))
            if idx.size and (idx.min() < 0 or idx.max() >= self.num_atoms):
                raise IndexError("active index out of range")
            a = np.zeros((k, m))
            a.reshape(-1)[idx] = val
        else:
            a = self.as_grid(active)
        cols = np.flatnonzero(np.any(a != 0, axis=0))
        out = np.zeros((k, m + 2 * radius))
        if cols.size:
            # contribution of each active shift column to its lag window
            width = 2 * radius + 1
            y = (gram.stacked @ a[:, cols]).reshape(k, width, cols.size)
            if cols.size <= width:
                for c, col in enumerate(cols):
                    out[:, col : col + width] += y[:, :, c]
            else:
                for d in range(width):
                    out[:, cols + d] += y[:, d, :]
        out = out[:, radius : radius + m] - a
        return out.ravel()

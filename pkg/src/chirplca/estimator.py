"""scikit-learn style front end.

``GammachirpLCA.fit`` adapts the filterbank on a set of signals,
``transform`` returns LCA sparse codes and ``inverse_transform`` maps
codes back to waveforms.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_signal, check_signals, stack_if_uniform
from .adaptation import TrainConfig, train
from .audio_io import prepare
from .dictionary import StridedDictionary, padded_length
from .filterbank import FilterbankConfig, build_filters, preset_params
from .lca import LcaConfig, encode, spikegram


class GammachirpLCA(TransformerMixin, BaseEstimator):
    """Sparse coder over an adaptive gammachirp dictionary.

    Parameters
    ----------
    n_channels, filter_len, stride, sample_rate, freq_min, freq_max
        Filterbank geometry.
    preset : {"gt", "cgc"}
        Initial uniform channel parameters.
    init_params : list of ChannelParams, optional
        Overrides ``preset`` (e.g. a previously trained bank).
    tau, dt, n_iter, threshold
        LCA dynamics.
    learning_rate, batch_size, n_epochs, buffer_size, random_state
        Adaptation schedule. ``n_epochs=0`` keeps the initial bank.
    normalize : bool
        Peak-normalize each signal before coding.

    Attributes
    ----------
    params_ : list of ChannelParams
    filters_ : FilterSet
    training_log_ : list of dict
    """

    def __init__(
        self,
        n_channels=16,
        filter_len=1024,
        stride=10,
        sample_rate=16000.0,
        freq_min=260.0,
        freq_max=6000.0,
        preset="gt",
        init_params=None,
        tau=0.01,
        dt=1e-4,
        n_iter=64,
        threshold=0.1,
        learning_rate=2e-4,
        batch_size=8,
        n_epochs=10,
        buffer_size=8,
        random_state=0,
        normalize=True,
    ):
        self.n_channels = n_channels
        self.filter_len = filter_len
        self.stride = stride
        self.sample_rate = sample_rate
        self.freq_min = freq_min
        self.freq_max = freq_max
        self.preset = preset
        self.init_params = init_params
        self.tau = tau
        self.dt = dt
        self.n_iter = n_iter
        self.threshold = threshold
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.buffer_size = buffer_size
        self.random_state = random_state
        self.normalize = normalize

    def _configs(self):
        fb = FilterbankConfig(
            num_channels=check_positive_int(self.n_channels, "n_channels"),
            filter_len=check_positive_int(self.filter_len, "filter_len", 2),
            stride=check_positive_int(self.stride, "stride"),
            sample_rate_hz=float(self.sample_rate),
            freq_min_hz=float(self.freq_min),
            freq_max_hz=float(self.freq_max),
        )
        lca = LcaConfig(tau=self.tau, dt=self.dt, num_iters=check_positive_int(self.n_iter, "n_iter"),
                        threshold=self.threshold)
        seed = 0 if self.random_state is None else self.random_state
        tr = TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            num_epochs=check_positive_int(self.n_epochs, "n_epochs", 0),
            buffer_size=self.buffer_size,
            rng_seed=seed,
        )
        return fb, lca, tr

    def _prepare(self, x, fb):
        x = check_signal(x)
        if self.normalize:
            return prepare(x, fb)
        n = padded_length(x.size, fb.filter_len, fb.stride)
        return np.concatenate([x, np.zeros(n - x.size)])

    def fit(self, X, y=None):
        fb, lca, tr = self._configs()
        signals = [self._prepare(x, fb) for x in check_signals(X)]
        if self.init_params is not None:
            params = list(self.init_params)
            if len(params) != fb.num_channels:
                raise ValueError(f"init_params has {len(params)} channels, expected {fb.num_channels}")
        else:
            params = preset_params(fb, self.preset)
        for p in params:
            p.validate(fb.sample_rate_hz)
        if tr.num_epochs > 0:
            result = train(signals, params, fb, lca, tr)
            params, log = result.params, result.log
        else:
            log = []
        self.params_ = params
        self.filters_ = build_filters(params, fb)
        self.training_log_ = log
        self._dicts = {}
        return self

    def _dictionary(self, length):
        if not hasattr(self, "_dicts"):
            self._dicts = {}
        if length not in self._dicts:
            d = StridedDictionary(self.filters_, self.stride, length)
            self._dicts[length] = (d, d.gram())
        return self._dicts[length]

    def encode(self, x):
        """Full ``EncodeResult`` for one signal."""
        check_is_fitted(self, "params_")
        fb, lca, _ = self._configs()
        sig = self._prepare(x, fb)
        d, g = self._dictionary(sig.size)
        return encode(sig, d, g, lca)

    def transform(self, X):
        """Final LCA coefficients, one flat code per signal."""
        codes = [self.encode(x).coefficients for x in check_signals(X)]
        return stack_if_uniform(codes)

    def inverse_transform(self, codes, signal_len=None):
        """Waveforms from codes; ``signal_len`` is the padded length used by ``transform``."""
        check_is_fitted(self, "params_")
        codes = [np.asarray(c, dtype=float) for c in (codes if not isinstance(codes, np.ndarray) or codes.ndim == 2 else [codes])]
        out = []
        for c in codes:
            n_shifts = c.size // self.n_channels
            length = signal_len or (n_shifts - 1) * self.stride + self.filter_len
            d, _ = self._dictionary(length)
            out.append(d.synthesize(c))
        return stack_if_uniform(out)

    def spikegram(self, x):
        result = self.encode(x)
        d, _ = self._dictionary(result.reconstruction.size)
        return spikegram(result, d)

    def score(self, X, y=None):
        """Negative mean LCA energy (higher is better)."""
        return -float(np.mean([self.encode(x).energy for x in check_signals(X)]))

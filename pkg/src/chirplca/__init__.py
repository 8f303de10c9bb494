"""Sparse audio coding with the locally competitive algorithm over an
adaptive gammachirp filterbank."""

from .adaptation import TrainConfig, backward, train
from .audio_io import AudioClip, prepare, read_wav, write_wav
from .dictionary import GramTable, StridedDictionary
from .estimator import GammachirpLCA
from .exceptions import (
    AudioFormatError,
    ChirpLCAError,
    DegenerateFilterError,
    DivergenceError,
    SampleRateMismatchError,
    UnsupportedCodecError,
)
from .filterbank import ChannelParams, FilterbankConfig, build_filters, preset_params
from .lca import EncodeResult, LcaConfig, encode, spikegram
from .metrics import box_stats, evaluate_corpus, inhibition_matrix, magnitude_response
from .synthetic import make_synthetic_corpus

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "AudioFormatError",
    "ChannelParams",
    "ChirpLCAError",
    "DegenerateFilterError",
    "DivergenceError",
    "EncodeResult",
    "FilterbankConfig",
    "GammachirpLCA",
    "GramTable",
    "LcaConfig",
    "SampleRateMismatchError",
    "StridedDictionary",
    "TrainConfig",
    "UnsupportedCodecError",
    "backward",
    "box_stats",
    "build_filters",
    "encode",
    "evaluate_corpus",
    "inhibition_matrix",
    "magnitude_response",
    "make_synthetic_corpus",
    "prepare",
    "preset_params",
    "read_wav",
    "spikegram",
    "train",
    "write_wav",
]

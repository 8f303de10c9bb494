"""Exception hierarchy."""


class ChirpLCAError(Exception):
    """Base class for all package errors."""


class DegenerateFilterError(ChirpLCAError, ValueError):
    """A filter's energy underflowed, so it cannot be normalized."""


class DivergenceError(ChirpLCAError, FloatingPointError):
    """Non-finite values appeared in the LCA state or its gradients."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class AudioFormatError(ChirpLCAError, ValueError):
    """The WAV header is malformed."""


class UnsupportedCodecError(AudioFormatError):
    """The WAV file uses an encoding other than PCM16 or float32."""


class SampleRateMismatchError(AudioFormatError):
    """The WAV sample rate differs from the configured one."""

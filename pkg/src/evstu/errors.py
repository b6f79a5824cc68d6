"""Exception hierarchy shared by all evstu modules.

Each branch maps onto one CLI exit code (see ``evstu.cli``):
input/data problems exit 3, configuration problems exit 4 and
scorer-service problems exit 5.  Usage errors are argparse's exit 2.
"""


class EvstuError(Exception):
    """Base class for all toolkit errors."""


class InputError(EvstuError):
    """Malformed or inconsistent input data (frames, events, scores)."""


class DimensionError(InputError):
    """Array shapes disagree with each other or with the declared grid."""


class FormatError(InputError):
    """A serialized artifact violates its on-disk format.

    ``offset`` is the byte position at which decoding failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EmptySelectionError(InputError):
    """Cumulative sampling had no density mass to work with.

    Callers treat this as a signal to fall back to uniform sampling.
    """


class ConfigError(EvstuError):
    """A configuration value violates the documented constraints."""


class ServiceError(EvstuError):
    """The external scoring service failed after all retries."""


class ProtocolError(ServiceError):
    """The scoring service answered, but not with the agreed JSON shape."""

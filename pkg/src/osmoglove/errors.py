"""Exception types raised across the package."""


class OsmoError(Exception):
    """Base class for all package errors."""


class ConfigError(OsmoError, ValueError):
    """A configuration file is missing, malformed or inconsistent."""


# sensor simulation
class SingularityError(OsmoError, ValueError):
    pass


class OutOfRangeError(OsmoError, ValueError):
    pass


# wire / alignment
class EmptyStreamError(OsmoError, ValueError):
    pass


# analysis / filtering
class TooShortError(OsmoError, ValueError):
    pass


# hand pose processing
class FrameMismatchError(OsmoError, ValueError):
    pass


class EmptyCloudError(OsmoError, ValueError):
    pass


class DegenerateNeighborhoodError(OsmoError, ValueError):
    pass


class BadWindowError(OsmoError, ValueError):
    pass


# retargeting
class LimitViolationError(OsmoError, ValueError):
    pass


class InitializationError(OsmoError, RuntimeError):
    pass


# dataset
class DegenerateChannelError(OsmoError, ValueError):
    def __init__(self, channel, lo=None, hi=None):
        self.channel = channel
        msg = f"channel {channel!r} is degenerate"
        if lo is not None:
            msg += f" (p02={lo!r}, p98={hi!r})"
        super().__init__(msg)


class ShapeError(OsmoError, ValueError):
    pass


class EmptyTrajectoryError(OsmoError, ValueError):
    pass


class LengthMismatchError(OsmoError, ValueError):
    pass


class ChecksumError(OsmoError, ValueError):
    pass

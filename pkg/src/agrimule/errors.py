"""Exception hierarchy shared by all agrimule modules."""


class SimError(Exception):
    """Base class for every error raised by this package."""


class PastEventError(SimError):
    """An event was scheduled with a due time before the current clock."""


class NoWeatherError(SimError):
    """A sensor sample was requested outside the weather trace."""


class BadQuantityError(SimError):
    """A pump-on command carried a non-positive water quantity."""


class FrameError(SimError):
    """Base class for wire codec failures."""


class FrameTooBigError(FrameError):
    """Payload exceeds the 16-bit length field."""


class NotAFrameError(FrameError):
    """Bytes do not start with the frame magic."""


class ShortFrameError(FrameError):
    """Byte string ends before the declared frame does."""


class CorruptFrameError(FrameError):
    """Frame fails CRC, version, type, or length verification."""


class EmptyTourError(SimError):
    """A flight plan was requested for zero regions."""


class BadSampleError(SimError):
    """Gravimetric sample with non-positive dry soil weight."""


class UnknownRegionError(SimError):
    """Operation referenced a region id that is not configured."""


class BadUploadError(SimError):
    """Upload batch failed to decode; rejected whole."""


class BadRangeError(SimError):
    """Query time range has start > end."""


class StoreIOError(SimError):
    """Underlying log file failed; the run must abort, never lose data silently."""


class PolicyError(SimError):
    """Irrigation policy violates its ordering invariants."""


class DroneBusyError(SimError):
    """Dispatch requested while a tour is already underway."""


class ConfigError(SimError):
    """Scenario config failed validation; carries one message per bad field."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))

# src/smi_sim/core/exceptions.py


class SmiError(Exception):
    """Base class for every error raised by the package."""


class CryptoError(SmiError):
    pass


class MalformedKeyError(CryptoError):
    pass


class SealError(CryptoError):
    """Envelope could not be opened with the given key."""


class ChainError(CryptoError):
    """Signature chain state violates its preconditions."""


class IdentityError(SmiError):
    pass


class ProtocolError(SmiError):
    pass


class EpochRefusedError(ProtocolError):
    """A new epoch may not start with this peer yet."""


class MessageFormatError(ProtocolError):
    pass


class ProximityError(ProtocolError):
    """A proximity-only exchange was attempted out of range."""


class ReputationError(SmiError):
    pass


class ThresholdError(ReputationError, ValueError):
    pass


class QuotaExceededError(SmiError):
    pass


class WorldConfigError(SmiError, ValueError):
    pass


class AdversaryConfigError(WorldConfigError):
    pass


class SimulationError(SmiError):
    pass


class EventStormError(SimulationError):
    pass


class PresetNotFoundError(SmiError):
    pass


class OutputDirError(SmiError):
    pass

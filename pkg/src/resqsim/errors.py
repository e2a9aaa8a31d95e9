"""Exception taxonomy shared across the simulator."""


class ResqsimError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ResqsimError):
    """Scenario file missing, malformed, incomplete, or carrying unknown fields."""


class SimulationDiverged(ResqsimError):
    """Physics state became non-finite; carries the last valid world state."""

    def __init__(self, message: str, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class PrematureContactError(ResqsimError):
    """Bed edge reached the casualty while still in the pose-adjustment phase."""


class NoContactError(ResqsimError):
    """Trial budget elapsed without the bed edge ever reaching the casualty."""


class TrialTimeoutError(ResqsimError):
    """Trial budget elapsed after contact but before completion."""


class RejectedCommandError(ResqsimError):
    """Actuator command refused in the current state (e.g. fasten before fully onboard)."""


class ProtocolError(ResqsimError):
    """Malformed or out-of-schema teleoperation message."""


class SchemaVersionError(ProtocolError):
    """Peer speaks an unsupported protocol version."""

    def __init__(self, message: str, supported=(1,)):
        super().__init__(message)
        self.supported = list(supported)


class MissingGroupError(ResqsimError):
    """Aggregation requested for a group with no reports."""


class ReplayError(ResqsimError):
    """Trial log cannot be replayed (unsupported schema or corrupt record)."""

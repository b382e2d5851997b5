"""Exception hierarchy shared by all octonav modules."""


class OctonavError(Exception):
    """Base class for every error raised by this package."""


class InvalidGeometry(OctonavError, ValueError):
    pass


class OutOfBounds(OctonavError, ValueError):
    pass


class FormatError(OctonavError, ValueError):
    pass


class WheelSpeedExceeded(OctonavError, ValueError):
    pass


class DegenerateICR(OctonavError, ValueError):
    pass


class InvalidScenario(OctonavError, ValueError):
    pass


class LabelOutOfWindow(OctonavError, ValueError):
    pass


class InvalidClass(OctonavError, ValueError):
    pass


class InsufficientLog(OctonavError, ValueError):
    pass


class InsufficientRuns(OctonavError, ValueError):
    pass


class InvalidSpec(OctonavError, ValueError):
    pass


class ShapeError(OctonavError, ValueError):
    pass


class HeadMismatch(OctonavError, ValueError):
    pass


class EmptyDataset(OctonavError, ValueError):
    pass


class InvalidGoal(OctonavError, ValueError):
    pass


class InvalidStart(OctonavError, ValueError):
    pass


class NoPath(OctonavError):
    pass


class MissingArtifact(OctonavError, FileNotFoundError):
    pass


class ConfigError(OctonavError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key

class StochFetError(Exception):
    """Base class for library errors."""


class DomainError(StochFetError, ValueError):
    pass


class BracketError(StochFetError):
    pass


class ConvergenceError(StochFetError):
    pass


class DegenerateComponentError(StochFetError):
    def __init__(self, component, znorm, index=None):
        self.component = component
        self.znorm = znorm
        self.index = index
        where = "" if index is None else f" at sample {index}"
        super().__init__(
            f"mixture component {component} has truncation mass {znorm:.3g} < 1e-12{where}"
        )


class ShapeError(StochFetError, ValueError):
    pass


class DeviceLookupError(StochFetError, KeyError):
    pass


class ConfigError(StochFetError, ValueError):
    pass


class TrainingError(StochFetError):
    pass


class MetricError(StochFetError, ValueError):
    pass


class ParseError(StochFetError, ValueError):
    pass


class ModelFormatError(StochFetError, ValueError):
    pass

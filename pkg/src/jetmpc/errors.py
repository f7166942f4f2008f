"""Exception types raised across the package."""


class SingularityError(ValueError):
    """Euler-angle parametrisation is at (or too close to) gimbal lock."""


class SingularGainError(ValueError):
    """Jet input gain g(T, Tdot) is too close to zero to be inverted."""


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending dotted path."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)

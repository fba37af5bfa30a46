"""Exception types shared across the package."""


class LipregError(Exception):
    pass


class ConfigurationError(LipregError, ValueError):
    """Unsupported or malformed configuration (bad measure kind, bad config file)."""


class InputError(LipregError, ValueError):
    """Argument outside an operation's precondition."""


class CapacityError(LipregError):
    """Requested basis size or memory footprint exceeds the configured cap."""


class DegradationError(LipregError):
    """Requested degree is beyond the numerically stable range of a basis."""


class UnsupportedOperationError(LipregError):
    pass

"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """An argument is outside the domain of the operation."""


class ConfigError(ValueError):
    """A configuration document failed validation.

    ``path`` is the dotted location of the offending field, e.g. ``sources.a.mu``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class FitError(RuntimeError):
    """The fringe fit could not be performed on the given points."""

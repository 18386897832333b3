"""Exception hierarchy shared by the library and the command line front end."""


class FoldkitError(Exception):
    exit_code = 1


class ArgumentError(FoldkitError, ValueError):
    exit_code = 2


class ShapeError(ArgumentError):
    pass


class ConfigurationError(ArgumentError):
    pass


class FormatError(FoldkitError):
    exit_code = 3


class CapacityError(FoldkitError, ValueError):
    exit_code = 4


class DomainError(FoldkitError, ValueError):
    exit_code = 5

"""Exception hierarchy. Each class maps to a distinct CLI exit code."""


class NnIntraError(Exception):
    exit_code = 5


class FormatError(NnIntraError):
    """Malformed or unsupported file / bitstream."""

    exit_code = 3


class ShapeError(FormatError):
    """Layer shapes inconsistent with the declared architecture."""


class ModelError(NnIntraError):
    """Missing registry entry, wrong predictor, or digest mismatch."""

    exit_code = 4


class InvariantError(NnIntraError):
    exit_code = 5

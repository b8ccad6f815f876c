"""Exception hierarchy shared by every module of the package."""


class MigtfError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DatasetFormatError(MigtfError):
    exit_code = 3


class ParseError(DatasetFormatError):
    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class StateError(MigtfError):
    exit_code = 4


class ShapeError(MigtfError, ValueError):
    exit_code = 5


class NumericError(MigtfError, ValueError):
    exit_code = 5


class UnsupportedError(MigtfError):
    exit_code = 5


class CheckpointFormatError(MigtfError):
    exit_code = 6


class CheckpointIntegrityError(CheckpointFormatError):
    exit_code = 7


class VocabMismatchError(MigtfError):
    exit_code = 8


class FrozenTermError(MigtfError):
    """MIG-TF training requested without a pretrained Euclidean checkpoint."""

    exit_code = 9


class ConfigError(MigtfError):
    exit_code = 2

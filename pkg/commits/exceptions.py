"""Error hierarchy for the commit message pipeline.

Every error carries the process exit code the management commands use:
2 for configuration problems, 3 for bad data, 4 for missing artifacts.
"""
from typing import Optional, Sequence

CONFIG_ERROR = 2
DATA_ERROR = 3
MISSING_ARTIFACT = 4


class CommitsError(Exception):
    exit_code = DATA_ERROR


# diffparse

class MalformedDiff(CommitsError):
    pass


class BadHunkHeader(CommitsError):
    def __init__(self, line_index: int, line: str):
        self.line_index = line_index
        self.line = line
        super().__init__(f"Line {line_index}: unparseable hunk header {line!r}")


# ast-paths

class LexError(CommitsError):
    def __init__(self, line: int, column: int, char: str):
        self.line = line
        self.column = column
        self.char = char
        super().__init__(f"Illegal character {char!r} at {line}:{column}")


class UnbalancedBraces(CommitsError):
    pass


class NoEnclosingFunction(CommitsError):
    def __init__(self, file_path: str, line: int):
        self.file_path = file_path
        self.line = line
        super().__init__(f"No method encloses {file_path}:{line}")


class LeafNotInTree(CommitsError):
    pass


class EmptyContext(CommitsError):
    pass


# preprocess

class DatasetIOError(CommitsError):
    pass


class SchemaError(CommitsError):
    def __init__(self, line: int, field: Optional[str], detail: str = ''):
        self.line = line
        self.field = field
        message = f"Line {line}: "
        message += f"missing or invalid field {field!r}" if field else "invalid record"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class EmptyAfterNormalization(CommitsError):
    pass


class TooFewProjects(CommitsError):
    pass


# autodiff-core

class ShapeMismatch(CommitsError):
    def __init__(self, op: str, *shapes: Sequence[int]):
        self.op = op
        self.shapes = shapes
        joined = ' vs '.join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class NonFiniteDetected(CommitsError):
    pass


# models

class EmptyTrainingSet(CommitsError):
    pass


class EmptyIndex(CommitsError):
    pass


class EmptyMessage(CommitsError):
    pass


# metrics

class EmptyReference(CommitsError):
    pass


class EmptySequence(CommitsError):
    pass


# cli

class ConfigError(CommitsError):
    exit_code = CONFIG_ERROR


class ConfigMismatch(CommitsError):
    exit_code = CONFIG_ERROR


class MissingArtifact(CommitsError):
    exit_code = MISSING_ARTIFACT

    def __init__(self, name: str, path: str = ''):
        self.name = name
        self.path = path
        super().__init__(f"Missing artifact {name!r}" + (f" at {path}" if path else ''))

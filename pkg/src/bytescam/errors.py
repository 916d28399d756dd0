"""Exception hierarchy.

Two families map onto CLI exit codes: ``DataError`` (bad input, exit 2) and
``RuntimeFailure`` (network trouble, divergence; exit 3).
"""


class BytescamError(Exception):
    """Base class for every error raised by this package."""


class DataError(BytescamError):
    exit_code = 2


class RuntimeFailure(BytescamError):
    exit_code = 3


# tokenizer
class NonHexCharacter(DataError, ValueError):
    def __init__(self, char, offset):
        super().__init__(f"non-hex character {char!r} at offset {offset}")
        self.char = char
        self.offset = offset


class OddLength(DataError, ValueError):
    pass


class EmptyInput(DataError, ValueError):
    pass


# ingest
class InvalidAddress(DataError, ValueError):
    pass


class ParseError(DataError, ValueError):
    def __init__(self, message, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class DuplicateAddress(DataError, ValueError):
    pass


class NotAContract(DataError):
    pass


class MalformedResponse(DataError):
    pass


class NetworkError(RuntimeFailure):
    pass


# training / model
class UnlabeledRecord(DataError, ValueError):
    pass


class MissingClass(DataError, ValueError):
    pass


class ShapeMismatch(BytescamError, ValueError):
    pass


class EmptySequence(DataError, ValueError):
    pass


class DivergenceDetected(RuntimeFailure):
    pass


# serialization
class FormatVersionMismatch(DataError):
    pass


class VocabHashMismatch(DataError):
    pass


class CorruptFile(DataError):
    pass

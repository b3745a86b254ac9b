"""Exception hierarchy shared by every permdroid module."""


class PermdroidError(Exception):
    pass


class OutputUnwritable(PermdroidError, OSError):
    pass


# APK / ZIP container
class ApkError(PermdroidError):
    pass


class BadArchive(ApkError):
    pass


class EntryNotFound(ApkError, KeyError):
    pass


class UnsupportedMethod(ApkError):
    pass


class CrcMismatch(ApkError):
    pass


# Binary XML
class AxmlError(PermdroidError, ValueError):
    pass


class NotAxml(AxmlError):
    pass


class TruncatedChunk(AxmlError):
    pass


class BadStringIndex(AxmlError):
    pass


# Corpus
class CorpusError(PermdroidError, ValueError):
    pass


class MissingFlags(CorpusError):
    pass


class BadMargin(CorpusError):
    pass


class InsufficientClass(CorpusError):
    pass


class MalformedRow(CorpusError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# Tokenizer
class EmptyCorpus(PermdroidError, ValueError):
    pass


class BadMaxLen(PermdroidError, ValueError):
    pass


# Model
class ModelError(PermdroidError):
    pass


class ShapeMismatch(ModelError, ValueError):
    pass


class NonFiniteActivation(ModelError, FloatingPointError):
    pass


class BadLabel(ModelError, ValueError):
    pass


class EmptyDataset(ModelError, ValueError):
    pass


class NoMaskedPositions(ModelError, ValueError):
    pass


class BadMagic(ModelError, ValueError):
    pass


class HeaderMismatch(ModelError, ValueError):
    pass


# Experiments
class LengthMismatch(PermdroidError, ValueError):
    pass


class BadK(PermdroidError, ValueError):
    pass


class EmptyBucket(PermdroidError):
    pass


# Integrity
class TargetUnwritable(PermdroidError, OSError):
    pass


class RootUnreadable(PermdroidError, OSError):
    pass

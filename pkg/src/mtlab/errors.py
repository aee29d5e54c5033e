"""Exception types shared across the pipeline."""


class MtlabError(Exception):
    """Base class for all mtlab errors."""


# corpus
class LineCountMismatch(MtlabError):
    pass


class InvalidEncoding(MtlabError):
    pass


# subword
class VocabTooSmall(MtlabError):
    pass


class UnknownId(MtlabError):
    pass


# numerics
class ShapeMismatch(MtlabError):
    pass


class NotScalar(MtlabError):
    pass


class NoTape(MtlabError):
    pass


# model
class InvalidConfig(MtlabError):
    pass


class IdOutOfRange(MtlabError):
    pass


class EmptyBatch(MtlabError):
    pass


class SequenceTooLong(MtlabError):
    pass


# training
class EmptyCorpus(MtlabError):
    pass


class DivergedLoss(MtlabError):
    pass


class VocabMismatch(MtlabError):
    pass


# metrics / analysis
class LengthMismatch(MtlabError):
    pass


class EmptyInput(MtlabError):
    pass

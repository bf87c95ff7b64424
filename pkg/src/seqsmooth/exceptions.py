"""Exception hierarchy shared by every stage of the pipeline."""


class SeqSmoothError(ValueError):
    """Base class for all package errors."""


class EmptyInput(SeqSmoothError):
    pass


class ParallelMismatch(SeqSmoothError):
    def __init__(self, n_source, n_target):
        self.n_source = n_source
        self.n_target = n_target
        super().__init__(
            f"parallel files differ in length: source has {n_source} lines, "
            f"target has {n_target}"
        )


class VocabError(SeqSmoothError):
    pass


class EmptySequence(SeqSmoothError):
    pass


class FormatError(SeqSmoothError):
    pass


class TruncatedFile(SeqSmoothError):
    pass


class CorruptVector(SeqSmoothError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"non-finite entry in vector {index}")


class DimMismatch(SeqSmoothError):
    pass


class ZeroNorm(SeqSmoothError):
    pass


class EmptyStore(SeqSmoothError):
    pass


class InvalidAlpha(SeqSmoothError):
    pass


class InvalidSwapCount(SeqSmoothError):
    pass


class MissingRelatedSet(SeqSmoothError):
    def __init__(self, corpus_index):
        self.corpus_index = corpus_index
        super().__init__(f"no related set for corpus index {corpus_index}")


class RetrievalFailure(SeqSmoothError):
    def __init__(self, corpus_index, cause):
        self.corpus_index = corpus_index
        self.cause = cause
        super().__init__(f"retrieval failed for corpus index {corpus_index}: {cause}")


class ConfigError(SeqSmoothError):
    pass


class StageError(SeqSmoothError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")

"""Exception hierarchy shared across the package."""


class WordrecError(Exception):
    """Base class for all package errors."""


class ValidationError(WordrecError):
    """Bad input data or configuration (CLI exit code 2)."""


class InventoryError(ValidationError):
    """Unknown or malformed phoneme symbol."""


class LexiconError(ValidationError):
    """Malformed lexicon file or missing word."""


class CorpusFormatError(ValidationError):
    """Unparseable corpus record; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class PairModelError(ValidationError):
    """Malformed pair-model table or serialization."""


class PriorError(ValidationError):
    """Bad prior specification or prior file contents."""


class NoInterpretableCandidate(WordrecError):
    """Every candidate word has zero posterior mass for a token."""


class EvaluationError(WordrecError):
    """Evaluation input does not satisfy a statistical test's requirements."""


class PipelineStageError(WordrecError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause

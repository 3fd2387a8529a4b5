"""Exception types shared across the package.

Everything raised on purpose derives from TextProbeError, so callers can
catch one base class at pipeline boundaries. The CLI maps these onto exit
codes (see cli.py).
"""

from __future__ import annotations


class TextProbeError(Exception):
    """Base class for all errors raised by this package."""


# -- vector / numeric errors -------------------------------------------------

class ZeroVector(TextProbeError):
    """A vector with (near-)zero L2 norm where a direction is required."""


class DimensionMismatch(TextProbeError):
    """Operands have incompatible dimensions."""


class EmptyVector(TextProbeError):
    """An operation that needs at least one component got an empty vector."""


class NonFiniteValue(TextProbeError):
    """NaN or Inf encountered where only finite values are allowed."""


class ShapeMismatch(TextProbeError):
    """Dataset / embedding-matrix shapes do not line up."""


class NonFiniteLoss(TextProbeError):
    """Training loss became NaN or Inf."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


# -- configuration errors ----------------------------------------------------

class InvalidConfig(TextProbeError):
    """A configuration value violates its documented range."""


class InvalidSmoothing(TextProbeError):
    """Label-smoothing coefficient outside [0, 1)."""


class InvalidProfile(TextProbeError):
    """A task profile or prompt template violates its invariants."""


# -- data / format errors ----------------------------------------------------

class ParseError(TextProbeError):
    """A structured text file failed to parse; carries the line number."""

    def __init__(self, message: str, lineno: int | None = None):
        super().__init__(message)
        self.lineno = lineno


class FormatError(TextProbeError):
    """A binary or JSON artifact has the wrong magic, version, or layout."""


class TruncatedFile(TextProbeError):
    """A binary artifact ended before its declared payload."""


class UnknownClassId(TextProbeError):
    """A class id outside the vocabulary."""


class EmptyDataset(TextProbeError):
    """No usable records survived validation."""


class MissingClassDescriptions(TextProbeError):
    """At least one vocabulary class ended up with zero descriptions."""


class MissingLabels(TextProbeError):
    """An embedding bundle without labels was used where labels are required."""


class EmptyReport(TextProbeError):
    """Report rendering requested with zero rows."""


class MissingInput(TextProbeError):
    """A required input file for the requested operation is absent."""


# -- network errors ----------------------------------------------------------

class TransportError(TextProbeError):
    """Low-level transport failure; `transient` marks it as retryable."""

    def __init__(self, message: str, transient: bool = True):
        super().__init__(message)
        self.transient = transient


class EndpointUnreachable(TextProbeError):
    """The completion endpoint kept failing after retries."""

    def __init__(self, message: str, failed_prompt_ids: list[str] | None = None):
        super().__init__(message)
        self.failed_prompt_ids = list(failed_prompt_ids or [])


class MalformedResponse(TextProbeError):
    """The endpoint answered, but not with usable completions."""

    def __init__(self, message: str, prompt_id: str | None = None):
        super().__init__(message)
        self.prompt_id = prompt_id

"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UserError subclasses are operator
mistakes (exit 1), oracle/provider failures are upstream-service problems
(exit 2), and anything else escaping is an internal invariant violation
(exit 3).
"""


class SetscribeError(Exception):
    """Base class for all package errors."""


class UserError(SetscribeError):
    """Bad input, bad config, bad file: the operator can fix it."""


class LexiconError(UserError):
    """Lexicon file failed to parse or violates structural invariants."""


class StoreError(UserError):
    """Embedding store file is malformed, truncated or corrupt."""


class IngestError(UserError):
    """Dataset metadata failed a grouping precondition."""


class TraceError(UserError):
    """Trace file is corrupt or does not match the supplied config/store."""


class ProviderError(SetscribeError):
    """Embedding provider failed after bounded retries."""


class OracleError(SetscribeError):
    """Language/vision oracle transport or schema failure."""


class ScriptError(OracleError):
    """Scripted oracle received a call its fixture does not cover."""


class GraphError(SetscribeError):
    """Concept-graph invariant would be violated by the requested update."""

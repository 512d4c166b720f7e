"""Exception types shared across the pipeline."""


class AmdkgError(Exception):
    """Base class for all package errors."""


class OntologyError(AmdkgError):
    """Raised when an ontology spec document is malformed or inconsistent.

    The message always names the offending section/label so the user can
    locate the problem in the file.
    """


class InputError(AmdkgError):
    """Raised when a pipeline input file is missing or malformed."""


class TransportError(AmdkgError):
    """Raised on HTTP failures talking to an external endpoint.

    ``status`` carries the HTTP status code when one was received, else None.
    """

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class SealedStoreError(AmdkgError):
    """Raised on a write attempt against a store sealed for serving."""

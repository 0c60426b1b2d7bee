"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    pass


class EmptyStoreError(RuntimeError):
    pass


class InsufficientDataError(RuntimeError):
    pass


class UndefinedMetricError(ValueError):
    pass


class StorageError(OSError):
    """I/O failure inside the stratified store; carries the stratum id."""

    def __init__(self, message, stratum=None):
        super().__init__(message)
        self.stratum = stratum

    def __str__(self):
        base = super().__str__()
        if self.stratum is None:
            return base
        return f"stratum {self.stratum}: {base}"

"""Exception types shared across the package."""


class MasrError(Exception):
    """Base class for package errors."""


class DomainError(MasrError, ValueError):
    """Input lies outside the domain of an operation (bounds, ranges)."""

    def __init__(self, message, joint=None):
        super().__init__(message)
        self.joint = joint


class ValidationError(MasrError, ValueError):
    """Malformed or inconsistent data (files, paths, polygons)."""


class GenerationError(MasrError, RuntimeError):
    """A randomized generator could not satisfy its constraints."""


class TrainingDiverged(MasrError, RuntimeError):
    """Training produced a non-finite loss."""

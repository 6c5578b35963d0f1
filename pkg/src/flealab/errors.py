"""Exception hierarchy shared by every module."""


class FleaLabError(Exception):
    """Base class for all package errors."""


class DomainError(FleaLabError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConvergenceError(FleaLabError):
    """An iterative or spectral computation failed to reach its tolerance."""

    def __init__(self, message, iterations=None, residual=None, context=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.context = dict(context or {})

    def __str__(self):
        base = super().__str__()
        extra = []
        if self.iterations is not None:
            extra.append(f"iterations={self.iterations}")
        if self.residual is not None:
            extra.append(f"residual={self.residual:.3e}")
        extra.extend(f"{k}={v!r}" for k, v in self.context.items())
        return f"{base} ({', '.join(extra)})" if extra else base


class StabilityError(FleaLabError):
    """Time stepping lost unitarity beyond the allowed drift."""


class CoverageError(FleaLabError):
    """A phase-space grid does not capture enough of a state's mass."""


class ConstructionError(FleaLabError):
    """A random instance could not be certified against its constraints."""


class ConfigError(FleaLabError, ValueError):
    """An experiment configuration failed validation."""


class ReplayMismatch(FleaLabError):
    """Replaying a manifest produced different CSV bytes."""

    def __init__(self, message, files=()):
        super().__init__(message)
        self.files = list(files)

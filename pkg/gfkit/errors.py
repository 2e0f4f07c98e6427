class GfkitError(Exception):
    """Base class for every error raised by gfkit."""


class InvalidCoefficient(GfkitError, ValueError):
    """A structural invariant of (τ, B, ℘) is violated."""


class DomainError(GfkitError, ValueError):
    """A query falls outside the domain where the flow is defined."""


class GridMismatch(GfkitError):
    """Two fields or operators live on different grids."""


class NoConvergence(GfkitError):
    def __init__(self, message: str, iterations: int, residual: float) -> None:
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class BlowUp(GfkitError):
    """A weighted norm left the representable range during a run."""


class NonPositiveData(GfkitError, ValueError):
    """A log-linear fit received nonpositive samples."""


class UnsupportedKernel(GfkitError):
    """The particle oracle cannot interpret the fragmentation kernel."""


class TailOverflow(GfkitError):
    """Mass leaving through x_max exceeded the tolerated fraction of ⟨f,φ⟩."""


class ScenarioError(GfkitError, ValueError):
    """A scenario file is unreadable or inconsistent."""

"""Exception hierarchy shared by the solvers and the command line."""


class HypParabError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(HypParabError, ValueError):
    """Invalid grid, run or model configuration."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f"[{key}"
            if line is not None:
                where += f", line {line}"
            where += "] "
        super().__init__(where + message)


class DegenerateKernelError(HypParabError):
    """The kernel stencil does not overlap the domain enough to normalize."""


class StabilityError(HypParabError):
    """An explicit step was requested with a time step above its stability limit."""


class LinearSolverError(HypParabError):
    """The iterative linear solver failed to reach the requested residual."""


class ModelSpecError(HypParabError):
    """A coefficient function violated one of its declared bounds."""


class PicardConvergenceError(HypParabError):
    """Picard iteration hit the iteration cap without converging."""


class NonContractionError(HypParabError):
    """Window halving reached the minimum window without observing contraction."""


class UnsupportedDimensionError(HypParabError):
    """The requested operation is only available in another space dimension."""

"""Exception and warning types shared across the package."""


class ModelError(ValueError):
    """Inconsistent dimensions or invalid matrices in a system model."""


class SingularInnovationCovariance(ArithmeticError):
    """The innovation covariance S is not numerically positive definite."""


class RankDeficient(ArithmeticError):
    """(CG)^T S^-1 (CG) is singular, so no unbiased input gain exists."""


class NoConvergence(RuntimeError):
    """The augmented Lagrangian loop hit its iteration cap.

    ``result`` holds the best iterate and the final residuals so the caller
    can decide whether to accept or clamp.
    """

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class MaxInnerIterationsWarning(RuntimeWarning):
    """Inner minimization stopped at its iteration cap."""


class AllZeroLikelihoodWarning(RuntimeWarning):
    """Every mode likelihood underflowed to zero; weights were not updated."""


class DegenerateSeparationWarning(RuntimeWarning):
    """Two hypotheses share the same mean and cannot be distinguished."""


class ConfigError(ValueError):
    """Invalid experiment or scenario configuration."""


class RankConditionError(ValueError):
    """A scenario model violates rank(CG) == rank(G) == m."""


class EmptyAfterBurnIn(ValueError):
    """No samples remain once the burn-in steps are discarded."""

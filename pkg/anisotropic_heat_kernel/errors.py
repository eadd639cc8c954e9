"""
Error hierarchy for the toolkit.

Errors caused by bad input also derive from ValueError; numerical failures derive from
RuntimeError, so callers can keep catching the builtin types.
"""

from typing import Any


class HeatKernelError(Exception):
    """Root of every error raised by the toolkit."""


class DomainError(HeatKernelError, ValueError):
    """A point lies outside the computational domain."""


class ClassificationError(HeatKernelError, ValueError):
    """Coefficients are not admissible for Q / regime evaluation."""


class EllipticityError(ClassificationError):
    """Q(x) <= -1 + margin at some node, so the symbol is not uniformly elliptic there."""

    def __init__(self, node: tuple[int, int], q_value: float, bound: float = -1.0):
        self.node = node
        self.q_value = q_value
        self.bound = bound
        super().__init__(f"ellipticity violated at node {node}: Q={q_value:.6g} <= {bound:.6g}")


class ResolutionError(HeatKernelError, ValueError):
    """A grid is too coarse for the requested operation."""


class NoSurrogateError(HeatKernelError, ValueError):
    """No smoothing scale produced a good-class surrogate symbol."""


class MetricError(HeatKernelError, ValueError):
    """The symbol is degenerate at a point where a dual norm was requested."""


class ParameterError(HeatKernelError, ValueError):
    """An argument is outside its admissible range."""


class SupportError(HeatKernelError, ValueError):
    """A grid function does not vanish on the clamped boundary layers."""


class ScalingError(HeatKernelError, ValueError):
    """exp(lambda * phi) would overflow on the grid."""


class CertificateError(HeatKernelError, ValueError):
    """A weight function phi is not admissible for the requested bound."""


class UnderflowError(HeatKernelError, ArithmeticError):
    """A kernel value is too small to take its logarithm reliably."""


class ConvergenceError(HeatKernelError, RuntimeError):
    """An iteration did not converge within its cap."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (last residual {residual:.3e})")


class SolverError(HeatKernelError, RuntimeError):
    """A linear solve or exponential action failed."""

    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class NumericError(HeatKernelError, RuntimeError):
    """A numerical minimization or extrapolation failed."""


class InvariantViolation(HeatKernelError, RuntimeError):
    """An asserted invariant of a run does not hold."""

    def __init__(self, name: str, detail: Any = None):
        self.name = name
        self.detail = detail
        super().__init__(f"invariant '{name}' violated: {detail}")

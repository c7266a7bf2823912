"""Exception hierarchy shared by the package."""


class NetProtectError(Exception):
    pass


class GraphError(NetProtectError, ValueError):
    pass


class DuplicateEdgeError(GraphError):
    """Raised when the same (src, dst) pair is inserted twice."""

    def __init__(self, src, dst, first, second):
        self.src = src
        self.dst = dst
        self.first = first
        self.second = second
        super().__init__(
            f"duplicate edge ({src} -> {dst}): first at position {first}, "
            f"again at position {second}"
        )


class ConvergenceError(NetProtectError, RuntimeError):
    pass


class DomainError(NetProtectError, ValueError):
    """Argument outside the domain of a cost family."""


class FamilyMisuseError(DomainError):
    pass


class StepSizeError(NetProtectError, RuntimeError):
    """Integrator left the admissible state region; the step is too large."""


class GPBuildError(NetProtectError, ValueError):
    pass


class InfeasibleBudgetError(NetProtectError, ValueError):
    def __init__(self, budget, baseline_cost):
        self.budget = budget
        self.baseline_cost = baseline_cost
        super().__init__(
            f"budget {budget!r} is below the cost {baseline_cost!r} of the "
            "unprotected allocation"
        )


class SolverError(NetProtectError, RuntimeError):
    def __init__(self, message, last_iterate=None, residuals=None):
        self.last_iterate = last_iterate
        self.residuals = residuals or {}
        super().__init__(message)


class UndefinedEfficiencyError(NetProtectError, ZeroDivisionError):
    pass

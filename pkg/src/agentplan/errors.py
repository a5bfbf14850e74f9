"""Exception hierarchy shared across the package.

Every domain failure raises an AgentPlanError subclass so the CLI can map
them to exit code 1 while genuine bugs still surface as ordinary exceptions.
"""


class AgentPlanError(Exception):
    """Base class for all domain errors."""


# graph
class UnboundedCycle(AgentPlanError):
    pass


class CyclicGraph(AgentPlanError):
    pass


class PortMismatch(AgentPlanError):
    pass


# dsl
class DslSyntaxError(AgentPlanError):
    def __init__(self, message, span=None):
        super().__init__(message)
        self.span = span


class DuplicateId(DslSyntaxError):
    pass


class UnknownKind(DslSyntaxError):
    pass


class UnknownModel(AgentPlanError):
    pass


class MissingTokenCounts(AgentPlanError):
    pass


class PlanMismatch(AgentPlanError):
    pass


# hardware
class MissingTdp(AgentPlanError):
    pass


# perf
class ModelTooLarge(AgentPlanError):
    pass


# optimizer
class ZeroPerf(AgentPlanError):
    pass


class ShapeMismatch(AgentPlanError):
    pass


class NonlinearConstraint(AgentPlanError):
    pass


class Infeasible(AgentPlanError):
    pass


class Unbounded(AgentPlanError):
    pass


class CycleLimit(AgentPlanError):
    pass


class BudgetExceeded(AgentPlanError):
    pass


class TooLarge(AgentPlanError):
    pass


# planner
class BaselineInfeasible(AgentPlanError):
    pass


class BaselineMissing(AgentPlanError):
    pass


# simulator
class InvalidPlan(AgentPlanError):
    pass


class ZeroDuration(AgentPlanError):
    pass

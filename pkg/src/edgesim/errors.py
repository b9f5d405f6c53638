"""Exception hierarchy shared by every module of the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class ScenarioError(SimError):
    """A scenario document is malformed or fails validation."""


# topology
class DanglingReference(ScenarioError):
    pass


class DuplicateId(ScenarioError):
    pass


class DisconnectedGraph(ScenarioError):
    pass


class NoPath(SimError):
    pass


class NotInSlice(SimError):
    pass


class UnknownSlice(SimError):
    pass


# workload
class OrphanSubscription(ScenarioError):
    pass


class CyclicPipeline(ScenarioError):
    pass


class UnknownTaskInPipeline(ScenarioError):
    pass


class InvalidWorkload(ScenarioError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


# placement
class Infeasible(SimError):
    pass


class InconsistentClass(SimError):
    pass


class TooLarge(SimError):
    pass


class NoFeasible(SimError):
    pass


# kpi
class EmptySamples(SimError):
    pass


class BothZero(SimError):
    pass


class NoUtilizationSamples(SimError):
    pass


class IoFailure(SimError):
    pass


class MissingPolicy(SimError):
    pass


# calibrate
class NoRoot(SimError):
    pass


class NonConvergence(SimError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(message)


class TargetsError(ScenarioError):
    pass

"""Exception hierarchy shared by every module of the twin."""


class TwinError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class ConfigError(TwinError):
    """Invalid configuration or usage (CLI exit code 2)."""


# sdof_core
class NonPositiveParameter(TwinError):
    pass


class Overdamped(TwinError):
    pass


class DegenerateMass(TwinError):
    pass


class DegenerateStiffness(TwinError):
    pass


# degradation / sensing
class NegativeFrequency(TwinError):
    pass


# inversion
class InvalidFrequency(TwinError):
    pass


class ResultOutOfRange(TwinError):
    pass


class ComplexRoot(TwinError):
    pass


class UndampedAmbiguity(TwinError):
    pass


class AllObservationsRejected(TwinError):
    pass


# mixture model / sampler
class NonFiniteLikelihood(TwinError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EmptyEnsemble(TwinError):
    pass


class NotASimplex(TwinError):
    pass


class TargetNonFinite(TwinError):
    def __init__(self, message, step=None, particle=None):
        super().__init__(message)
        self.step = step
        self.particle = particle


class ConfigInvalid(ConfigError):
    pass


class OptimizerFailed(TwinError):
    pass


class InsufficientData(TwinError):
    pass


class NonMonotoneTimestamps(TwinError):
    pass


class ProvenanceMismatch(TwinError):
    pass

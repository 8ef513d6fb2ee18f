"""Exception hierarchy shared by all modules."""


class LpAnomalyError(Exception):
    """Base class for every error raised by this package."""


# plan_store
class MissingFile(LpAnomalyError):
    pass


class DuplicateObservation(LpAnomalyError):
    def __init__(self, case_id, key):
        super().__init__(f"duplicate observation for case {case_id!r}, key {key}")
        self.case_id = case_id
        self.key = key


class BadNumeric(LpAnomalyError):
    def __init__(self, source, line, text):
        super().__init__(f"{source}:{line}: cannot parse value {text!r}")
        self.source = source
        self.line = line
        self.text = text


class BadRow(LpAnomalyError):
    pass


class UnknownVariable(LpAnomalyError, KeyError):
    pass


# ecod
class EmptySamples(LpAnomalyError, ValueError):
    pass


class DegenerateSamples(LpAnomalyError, ValueError):
    pass


class IneligibleVariable(LpAnomalyError):
    pass


# pair_select
class UnknownGroup(LpAnomalyError):
    pass


class LengthMismatch(LpAnomalyError, ValueError):
    pass


class InsufficientJointSamples(LpAnomalyError):
    pass


class SingularFit(LpAnomalyError):
    pass


# bivariate
class DegeneratePair(LpAnomalyError):
    pass


class SingularCovariance(LpAnomalyError):
    pass


# synth
class InfeasibleScenario(LpAnomalyError):
    pass


class UnknownTarget(LpAnomalyError):
    pass


# cli / artifact
class ArtifactVersionError(LpAnomalyError):
    pass


class ConfigError(LpAnomalyError):
    pass

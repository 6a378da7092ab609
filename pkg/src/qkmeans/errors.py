"""Exception hierarchy. Contract violations on arguments raise plain ValueError."""


class QKMeansError(Exception):
    """Base class for failures of the pipeline.

    ``stage`` is filled in by :func:`qkmeans.scheme.solve` when the error
    escapes one of its stages.
    """

    exit_code = 1

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class ConfigError(QKMeansError, ValueError):
    exit_code = 2


class DegenerateDatasetError(QKMeansError, ValueError):
    exit_code = 2


class BruteForceInfeasible(QKMeansError):
    exit_code = 3


class SamplerStarvation(QKMeansError):
    exit_code = 4


class ListSizeCapExceeded(QKMeansError):
    exit_code = 5

    def __init__(self, message, size=None, cap=None, stage=None):
        super().__init__(message, stage=stage)
        self.size = size
        self.cap = cap

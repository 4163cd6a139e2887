"""
Domain errors. Every error carries the process exit code the CLI returns for it.
"""
from typing import Any, List, Optional


class PipelineError(Exception):
    exit_code = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigError(PipelineError):
    """Invalid space, configuration, experiment file or argument"""

    exit_code = 2


class InvalidConfigurationError(ConfigError):
    def __init__(self, violations: List[Any]):
        names = ", ".join(f"{v.name} ({v.rule})" for v in violations)
        super().__init__(f"Invalid configuration: {names}")
        self.violations = violations


class DimensionMismatchError(ConfigError):
    pass


class MissingInputError(PipelineError):
    """A stage input file or directory does not exist"""

    exit_code = 3


class AllEvaluationsFailedError(PipelineError):
    exit_code = 4


class NonFiniteStateError(PipelineError):
    pass


class EvaluationTimeoutError(PipelineError):
    pass

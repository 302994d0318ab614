"""
Lab exceptions
Typed errors raised by the numerical services, mapped to exit codes by the CLI
"""
from typing import Any, Dict, Optional


class LabError(Exception):
    """Base class for every error raised by the lab"""

    exit_code: int = 1

    def __init__(self, detail: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(detail)
        self.detail = detail
        self.context = dict(context or {})

    def __str__(self) -> str:
        if not self.context:
            return self.detail
        extras = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.detail} ({extras})"


class ConfigError(LabError):
    """Experiment config failed to parse or validate"""

    exit_code = 2


class ProfileError(LabError):
    """Coefficient profile violates ellipticity, positivity or decay hypotheses"""


class SeminormDivergenceError(LabError):
    """Symbol seminorm does not stay bounded: function is not in S^{-kappa}"""


class PreconditionError(LabError):
    """Operation called outside its admissible parameter range"""


class SupportError(PreconditionError):
    """Initial data reach the truncation boundary within the requested time"""


class SolverError(LabError):
    """Banded factorization, eigensolver or residual certification failed"""


class NearResonanceError(SolverError):
    """Singular pivot: the truncated problem is (numerically) resonant at this z"""


class ConvergenceError(LabError):
    """Iterative estimate did not converge (power iteration, seminorm refinement)"""


class AccuracyError(LabError):
    """Time-step refinement guard could not reach the requested accuracy"""


class ArtifactError(LabError):
    """Run directory is missing expected artifacts"""

    exit_code = 3

"""
Experiment schemas
Validated experiment configuration and the run record written next to the artifacts
"""
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Dict, List, Optional, Union
from datetime import datetime
import enum
import math

from app.schemas.profile import GridConfig, ProfileConfig
from app.schemas.report import (
    CheckResult,
    DecayReport,
    HypothesisConstants,
    HypothesisReport,
    ItemStatus,
    MourreAudit,
    ScalingReport,
    SynthesisReport,
    Verdict,
)
from app.schemas.scan import PowerSettings, ScanTarget


class Suite(str, enum.Enum):
    """Experiment suites selectable in a config"""
    COEFFS = "coeffs"
    RESOLVENT_SCAN = "resolvent-scan"
    WEIGHT_SCAN = "weight-scan"
    THETA_SCAN = "theta-scan"
    IDENTITY_TESTS = "identity-tests"
    DECAY_RUN = "decay-run"
    PROFILE_COMPARE = "profile-compare"
    HUYGENS = "huygens"
    MOURRE = "mourre"
    SYNTHESIS_CHECK = "synthesis-check"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _increasing(values: List[float], label: str) -> List[float]:
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{label} must be strictly increasing")
    return values


class NumericsConfig(_Section):
    """Seeds and tolerances shared by every suite"""
    seed: int = Field(20240601, description="Seed for random test vectors")
    power: PowerSettings = Field(default_factory=PowerSettings)
    cap_strength: float = Field(0.0, ge=0, description="Absorbing potential strength (0 disables)")


class InitialDataConfig(_Section):
    """Smooth bump data f = f_amp b(r / support), g = g_amp b(r / support), b(s) = exp(1 - 1/(1 - s^2))"""
    support: float = Field(1.0, gt=0, description="Support radius R0")
    f_amp: float = 1.0
    g_amp: float = 0.0


class CoeffsParams(_Section):
    points_per_octave: int = Field(16, ge=4)
    sharpness_margin: float = Field(0.5, gt=0, description="Extra decay demanded of a in the sharpness witness")


class ResolventScanParams(_Section):
    orders: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    targets: List[ScanTarget] = Field(default_factory=lambda: [ScanTarget.DERIVATIVE, ScanTarget.DIFFERENCE])
    angle: float = Field(math.pi / 2, gt=0, lt=math.pi)
    r_samples: List[float] = Field(default_factory=lambda: [1e-3 * 300 ** (k / 11) for k in range(12)])
    delta: Optional[float] = Field(None, ge=0, description="Weight exponent (default n + 1.6)")
    ball_radius: Optional[float] = Field(None, gt=0, description="Use 1_{B(R)} weights instead of <r>^{-delta}")
    tolerance: float = Field(0.15, gt=0)
    drop_largest: int = Field(2, ge=0)
    high_frequency: List[float] = Field(default_factory=list, description="tau values for the |z|^{-1} spot check")

    @field_validator("orders")
    @classmethod
    def check_orders(cls, values: List[int]) -> List[int]:
        if any(not 0 <= n <= 6 for n in values):
            raise ValueError("derivative orders must lie in [0, 6]")
        return values


class WeightScanParams(_Section):
    s_values: List[float] = Field(default_factory=lambda: [0.5, 1.0])
    delta_offset: float = Field(0.5, description="delta = s + offset")
    r_samples: List[float] = Field(default_factory=lambda: [1e-3 * 300 ** (k / 11) for k in range(12)])


class ThetaScanParams(_Section):
    sigmas: List[int] = Field(default_factory=lambda: [0, 1, 2])
    s: Union[float, Dict[int, float], None] = Field(
        None, description="Sobolev index, one value or one per sigma (default: window midpoint per sigma)"
    )
    rho: Optional[float] = Field(None, gt=0, description="Weight gain (default rho1)")
    angle: float = Field(math.pi / 2, gt=0, lt=math.pi)
    r_samples: List[float] = Field(default_factory=lambda: [1e-3 * 300 ** (k / 11) for k in range(12)])


class IdentityParams(_Section):
    z_real: float = 0.3
    z_imag: float = Field(0.4, gt=0)
    expansion_depth: int = Field(3, ge=0, le=5)
    derivative_order: int = Field(4, ge=1, le=6)
    adjoint_n: int = Field(256, ge=16)


class DecayParams(_Section):
    data: InitialDataConfig = Field(default_factory=InitialDataConfig)
    delta: Optional[float] = Field(None, gt=0, description="Weight exponent of the perturbed comparison (default d + 3)")
    radius: Optional[float] = Field(None, gt=0, description="Ball radius (default: support radius)")
    times: List[float] = Field(default_factory=lambda: [10.0 * 6 ** (k / 9) for k in range(10)])
    perturbed: bool = Field(True, description="Also evolve the configured profile")
    dt: Optional[float] = Field(None, gt=0, description="Time step of the perturbed runs (default h/2)")

    @field_validator("times")
    @classmethod
    def check_times(cls, values: List[float]) -> List[float]:
        return _increasing(values, "times")


class ProfileCompareParams(_Section):
    data: InitialDataConfig = Field(default_factory=InitialDataConfig)
    delta: Optional[float] = Field(None, gt=0, description="Weight exponent (default d + 3)")
    radius: Optional[float] = Field(None, gt=0)
    times: List[float] = Field(default_factory=lambda: [2.0 * 1.25 ** k for k in range(16)])
    t_lo: Optional[float] = Field(None, ge=0, description="Fit window start (default 4 diam(support))")
    dt: Optional[float] = Field(None, gt=0, description="Time step (default h/2)")

    @field_validator("times")
    @classmethod
    def check_times(cls, values: List[float]) -> List[float]:
        return _increasing(values, "times")


class HuygensParams(_Section):
    data: InitialDataConfig = Field(default_factory=lambda: InitialDataConfig(g_amp=1.0))
    times: List[float] = Field(default_factory=lambda: [3.0, 5.0])
    tolerance: float = Field(1e-3, gt=0)
    refine: bool = Field(True, description="Repeat at doubled resolution and require a 3x decrease")


class MourreParams(_Section):
    radii: List[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2])
    angle: float = Field(math.pi / 12, gt=0, lt=math.pi / 2)
    refinement_levels: int = Field(3, ge=2)
    upsilon: float = Field(10.0, ge=1)
    k_bound: bool = True
    hypotheses: bool = True


class SynthesisParams(_Section):
    data: InitialDataConfig = Field(default_factory=lambda: InitialDataConfig(g_amp=0.5))
    mus: List[float] = Field(default_factory=lambda: [0.25, 0.5])
    times: List[float] = Field(default_factory=lambda: [2.0, 5.0, 10.0])
    tau_max: float = Field(40.0, gt=0)


_SECTIONS = {
    Suite.COEFFS: ("coeffs", CoeffsParams),
    Suite.RESOLVENT_SCAN: ("resolvent_scan", ResolventScanParams),
    Suite.WEIGHT_SCAN: ("weight_scan", WeightScanParams),
    Suite.THETA_SCAN: ("theta_scan", ThetaScanParams),
    Suite.IDENTITY_TESTS: ("identity_tests", IdentityParams),
    Suite.DECAY_RUN: ("decay_run", DecayParams),
    Suite.PROFILE_COMPARE: ("profile_compare", ProfileCompareParams),
    Suite.HUYGENS: ("huygens", HuygensParams),
    Suite.MOURRE: ("mourre", MourreParams),
    Suite.SYNTHESIS_CHECK: ("synthesis_check", SynthesisParams),
}


class ExperimentConfig(_Section):
    """One experiment: profile, grid, numerics and the parameters of the selected suite"""
    name: str = Field(..., min_length=1, max_length=80)
    suite: Suite
    profile: ProfileConfig = Field(default_factory=ProfileConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    plots: bool = False
    output_dir: Optional[str] = None

    coeffs: Optional[CoeffsParams] = None
    resolvent_scan: Optional[ResolventScanParams] = None
    weight_scan: Optional[WeightScanParams] = None
    theta_scan: Optional[ThetaScanParams] = None
    identity_tests: Optional[IdentityParams] = None
    decay_run: Optional[DecayParams] = None
    profile_compare: Optional[ProfileCompareParams] = None
    huygens: Optional[HuygensParams] = None
    mourre: Optional[MourreParams] = None
    synthesis_check: Optional[SynthesisParams] = None

    @model_validator(mode="after")
    def resolve_suite_section(self):
        """Fill the selected suite's section with defaults; other sections must be absent"""
        selected, model = _SECTIONS[self.suite]
        for field_name, _ in _SECTIONS.values():
            if field_name != selected and getattr(self, field_name) is not None:
                raise ValueError(f"section [{field_name}] does not belong to suite '{self.suite.value}'")
        if getattr(self, selected) is None:
            setattr(self, selected, model())
        return self

    @property
    def params(self) -> _Section:
        return getattr(self, _SECTIONS[self.suite][0])


class RunRecord(BaseModel):
    """Pointer file of a run directory"""
    experiment_id: str = Field(..., description="First 12 hex digits of sha256(resolved config)")
    name: str
    suite: Suite
    timestamp: datetime
    artifacts: List[str]
    verdicts: Dict[str, int] = Field(default_factory=dict, description="Count per verdict")
    verdict: Verdict
    failures: int = Field(0, description="Items that raised instead of reporting")

    @property
    def exit_code(self) -> int:
        return 1 if self.verdict == Verdict.VIOLATION else 0


class SuiteOutcome(BaseModel):
    """Everything a suite measured, in submission order"""
    constants: Optional[HypothesisConstants] = None
    scaling: List[ScalingReport] = Field(default_factory=list)
    decay: List[DecayReport] = Field(default_factory=list)
    checks: List[CheckResult] = Field(default_factory=list)
    mourre: List[MourreAudit] = Field(default_factory=list)
    hypotheses: List[HypothesisReport] = Field(default_factory=list)
    synthesis: List[SynthesisReport] = Field(default_factory=list)
    failures: List[str] = Field(default_factory=list, description="Items that raised a lab error")

    def extend(self, other: "SuiteOutcome") -> "SuiteOutcome":
        self.constants = self.constants or other.constants
        for name in ("scaling", "decay", "checks", "mourre", "hypotheses", "synthesis", "failures"):
            getattr(self, name).extend(getattr(other, name))
        return self

    def verdicts(self) -> List[Verdict]:
        """Every verdict carried by the outcome; a failed hypothesis item counts as a violation"""
        verdicts = [r.verdict for r in self.scaling]
        verdicts += [r.verdict for r in self.decay]
        verdicts += [c.verdict for c in self.checks]
        verdicts += [a.verdict for a in self.mourre]
        verdicts += [s.verdict for s in self.synthesis]
        for report in self.hypotheses:
            for item in report.items:
                if item.status == ItemStatus.FAIL:
                    verdicts.append(Verdict.VIOLATION)
                elif item.status == ItemStatus.PASS:
                    verdicts.append(Verdict.CONSISTENT)
        return verdicts

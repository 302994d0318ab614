"""
Report schemas
Verdicts and the serializable results produced by every experiment suite
"""
from pydantic import BaseModel, Field
from typing import Dict, List, Optional
import enum


class Verdict(str, enum.Enum):
    """Outcome of comparing a measured exponent with a predicted upper bound"""
    CONSISTENT = "CONSISTENT"
    VIOLATION = "VIOLATION"
    INCONCLUSIVE = "INCONCLUSIVE"


class ItemStatus(str, enum.Enum):
    """Status of an individually audited hypothesis item"""
    PASS = "PASS"
    FAIL = "FAIL"
    SKIPPED = "SKIPPED"


class SeminormEstimate(BaseModel):
    """Symbol-class seminorm sup_{m <= max_order} sup_r <r>^{kappa+m} |d^m phi|"""
    kappa: float = Field(..., ge=0)
    max_order: int = Field(..., ge=0)
    value: float = Field(..., description="Sup over the sample grid")
    argmax_r: float = Field(0.0, description="Radius where the sup is attained")
    per_order: List[float] = Field(default_factory=list, description="Sup for each derivative order")


class HypothesisConstants(BaseModel):
    """Constants read off the sample grid for a coefficient profile"""
    c_g: float = Field(..., description="Ellipticity constant of g")
    c_w: float = Field(..., description="Ellipticity constant of w")
    decay_metric: float = Field(..., description="sup (|g-1|+|w-1|) <r>^{rho0}")
    decay_damping: float = Field(..., description="sup |a| <r>^{1+rho0}")
    a_max: float
    w_inv_sqrt_max: float = Field(..., description="sup w^{-1/2}")
    speed_bound: float = Field(..., description="gamma = max(C_G, C_w)")


class ScalingSample(BaseModel):
    """One frequency sample of a scan"""
    r: float
    norm: Optional[float] = None
    ell_argmax: Optional[int] = None
    error: Optional[str] = None


class ScalingReport(BaseModel):
    """Weighted norms along a ray and their fitted log-log slope"""
    experiment_id: str
    kind: str
    angle: float
    samples: List[ScalingSample]
    fitted_slope: Optional[float] = None
    intercept: Optional[float] = None
    residual: Optional[float] = None
    predicted_exponent: float
    tolerance: float
    verdict: Verdict
    sharp: bool = Field(False, description="Slope within 0.2 of the prediction (informational)")
    failures: int = 0
    notes: List[str] = Field(default_factory=list)
    delta_left: Optional[float] = Field(None, description="Weight exponent applied on the left")
    delta_right: Optional[float] = Field(None, description="Weight exponent applied on the right")

    @property
    def norms(self) -> List[float]:
        return [s.norm for s in self.samples if s.norm is not None]


class SeriesFit(BaseModel):
    """Fitted decay slope for one time series"""
    name: str
    slope: Optional[float] = None
    predicted_exponent: float
    t_lo: float
    t_hi: float
    verdict: Verdict
    note: str = ""


class DecayReport(BaseModel):
    """Time series of local/weighted norms with fitted decay rates"""
    experiment_id: str
    label: str = ""
    times: List[float]
    series: Dict[str, List[float]]
    fits: List[SeriesFit]
    ratio_monotone: Optional[bool] = None
    delta: float
    notes: List[str] = Field(default_factory=list)

    @property
    def verdict(self) -> Verdict:
        return combine_verdicts(fit.verdict for fit in self.fits)


class SynthesisReport(BaseModel):
    """Contour synthesis of u(t) compared with time stepping"""
    experiment_id: str
    mu: float
    times: List[float]
    deviations: List[float]
    tail_change: List[float] = Field(..., description="Relative change when the tau-range is halved")
    tolerance: float = Field(0.02, description="Largest accepted relative deviation")
    verdict: Verdict

    @property
    def max_deviation(self) -> float:
        return max(self.deviations) if self.deviations else 0.0


class MourreAudit(BaseModel):
    """Projected commutator positivity at one frequency"""
    z_real: float
    z_imag: float
    eta: float
    window_size: int = Field(..., description="Eigenvectors with cutoff weight above 1e-8")
    positivity_margin: Optional[float] = None
    margin_ratio: Optional[float] = Field(None, description="positivity_margin / |z|^2")
    commutator_residual: Optional[float] = None
    k_bound: Optional[float] = None
    verdict: Verdict


class HypothesisItem(BaseModel):
    """One audited item of the conjugate-operator hypotheses"""
    name: str
    status: ItemStatus
    value: Optional[float] = None
    bound: Optional[float] = None
    reason: str = ""


class HypothesisReport(BaseModel):
    """Audit of the checkable conjugate-operator hypotheses at one z"""
    z_real: float
    z_imag: float
    upsilon: float
    items: List[HypothesisItem]

    def status_of(self, name: str) -> ItemStatus:
        for item in self.items:
            if item.name == name:
                return item.status
        raise KeyError(name)


class CheckResult(BaseModel):
    """Scalar check against a threshold (identities, residuals, oracles)"""
    name: str
    value: float
    threshold: float
    verdict: Verdict
    note: str = ""


def combine_verdicts(verdicts) -> Verdict:
    """VIOLATION dominates, then INCONCLUSIVE, then CONSISTENT"""
    verdicts = list(verdicts)
    if Verdict.VIOLATION in verdicts:
        return Verdict.VIOLATION
    if Verdict.INCONCLUSIVE in verdicts:
        return Verdict.INCONCLUSIVE
    return Verdict.CONSISTENT

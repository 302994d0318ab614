"""
Scan schemas
Frequency-ray scan specifications for the scaling experiments
"""
from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import List, Optional
import enum
import math


class ScanTarget(str, enum.Enum):
    """Operator family measured along a ray"""
    DERIVATIVE = "derivative"
    FREE_DERIVATIVE = "free-derivative"
    DIFFERENCE = "difference"


class PowerSettings(BaseModel):
    """Power-iteration parameters"""
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(20240601, description="Seed of the start vector")
    tol: float = Field(1e-4, gt=0, description="Relative stopping tolerance")
    max_iter: int = Field(500, ge=1)


class ScanSpec(BaseModel):
    """Weighted norms of R^(n), R_0^(n) or their difference along z = r e^{i angle}"""
    model_config = ConfigDict(extra="forbid")

    target: ScanTarget
    n: int = Field(0, ge=0, le=6, description="Derivative order")
    angle: float = Field(math.pi / 2, gt=0, lt=math.pi, description="Ray angle in radians")
    r_samples: List[float] = Field(..., min_length=2)
    delta_left: float = Field(..., ge=0)
    delta_right: float = Field(..., ge=0)
    s_left: float = 0.0
    s_right: float = 0.0
    ell_max: int = Field(0, ge=0)
    predicted_exponent: float
    tolerance: float = Field(0.15, gt=0)
    residual_threshold: float = Field(0.25, gt=0, description="Fits with larger RMS misfit are INCONCLUSIVE")
    drop_largest: int = Field(2, ge=0, description="Largest-r samples excluded from the fit")
    cap_strength: float = Field(0.0, ge=0)
    ball_radius: Optional[float] = Field(None, gt=0)
    power: PowerSettings = Field(default_factory=PowerSettings)

    @field_validator("r_samples")
    @classmethod
    def check_samples(cls, values: List[float]) -> List[float]:
        if any(not 0 < r <= 1 for r in values):
            raise ValueError("frequency samples must lie in (0, 1]")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("frequency samples must be strictly increasing")
        return values

    @property
    def label(self) -> str:
        return f"{self.target.value}-n{self.n}"

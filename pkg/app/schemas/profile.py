"""
Profile and grid schemas for experiment config validation
"""
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import List, Literal, Optional


class BumpConfig(BaseModel):
    """Additive Gaussian bump on one coefficient"""
    model_config = ConfigDict(extra="forbid")

    target: Literal["g", "w", "a"] = Field(..., description="Coefficient receiving the bump")
    center: float = Field(..., ge=0, description="Bump center (radius)")
    width: float = Field(..., gt=0, description="Gaussian width")
    height: float = Field(..., description="Bump height")


class ProfileConfig(BaseModel):
    """Coefficient family g = 1 + g_amp <r>^{-rho0}, w likewise, a = a_amp <r>^{-1-rho0}"""
    model_config = ConfigDict(extra="forbid")

    d: int = Field(3, ge=1, le=9, description="Space dimension")
    rho0: float = Field(1.0, description="Long-range decay exponent in (0, 1]")
    rho1: Optional[float] = Field(None, description="Improvement exponent in (0, rho0); defaults to rho0/2")
    g_amp: float = Field(0.0, description="Metric perturbation amplitude")
    w_amp: float = Field(0.0, description="Density perturbation amplitude")
    a_amp: float = Field(0.0, description="Damping amplitude")
    bumps: List[BumpConfig] = Field(default_factory=list)

    @model_validator(mode="after")
    def resolve_rho1(self):
        """rho1 defaults to rho0 / 2"""
        if self.rho1 is None:
            self.rho1 = self.rho0 / 2
        return self


class GridConfig(BaseModel):
    """Radial grid shared by all sectors of a run"""
    model_config = ConfigDict(extra="forbid")

    n: int = Field(4096, ge=16, description="Interior grid points")
    r_max: float = Field(120.0, gt=0, description="Truncation radius (Dirichlet)")
    ell_max: int = Field(0, ge=0, description="Largest spherical-harmonic sector scanned")

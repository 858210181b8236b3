from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .dynamics import DiskRegion, FlowSpec, Region
from .families import (
    AnharmonicTorusFamily,
    GeneralizedOscillatorFamily,
    HamiltonianFamily,
    PolynomialGauge,
    QuarticFamily,
    RegaugedFamily,
)


class OscillatorSpec(BaseModel):
    """H = (X q^2 + 2 Y q p + Z p^2) / 2, parameters x = (X, Y, Z)"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kind: Literal["oscillator"] = "oscillator"
    gauge: Optional[PolynomialGauge] = Field(default=None, description="Optional regauging Phi -> Phi + g(x)")

    def build(self) -> HamiltonianFamily:
        family = GeneralizedOscillatorFamily()
        if self.gauge is not None:
            return RegaugedFamily(family, self.gauge)
        return family


class QuarticSpec(BaseModel):
    """H = p^2 / 2 + lam q^4 / 4, parameters x = (lam,)"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kind: Literal["quartic"] = "quartic"

    def build(self) -> HamiltonianFamily:
        return QuarticFamily()


class AnharmonicTorusSpec(BaseModel):
    """h(I) = sum omega_i I_i + beta_i I_i^2 / 2 with a constant-curvature chart deformation"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kind: Literal["anharmonic-torus"] = "anharmonic-torus"
    omega: list[float] = Field(description="Linear frequencies, one per degree of freedom")
    beta: list[float] = Field(description="Anharmonic coefficients d Omega_i / d I_i")
    curvature: list[float] = Field(description="Hannay curvature per angle in the chosen plane")
    param_dim: int = Field(default=2, ge=2, description="Parameter space dimension")
    plane: tuple[int, int] = Field(default=(0, 1), description="Parameter plane carrying the curvature")
    ripple: float = Field(default=0.0, description="Amplitude of the zero-mean chart ripple")

    @model_validator(mode="after")
    def check_lengths(self):
        if not (len(self.omega) == len(self.beta) == len(self.curvature) >= 1):
            raise ValueError("omega, beta and curvature need one entry per degree of freedom")
        return self

    def build(self) -> HamiltonianFamily:
        return AnharmonicTorusFamily(
            omega=self.omega,
            beta=self.beta,
            curvature=self.curvature,
            param_dim=self.param_dim,
            plane=self.plane,
            ripple=self.ripple,
        )


FamilySpec = Annotated[Union[OscillatorSpec, QuarticSpec, AnharmonicTorusSpec], Field(discriminator="kind")]


class ToleranceConfig(BaseModel):
    """Every numerical tolerance a run uses; the report echoes the effective values"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    fd_step: float = Field(default=1e-5, gt=0, description="Parameter finite-difference step delta_x")
    action_step: float = Field(default=1e-5, gt=0, description="Action finite-difference step delta_I")
    degeneracy: float = Field(default=1e-9, gt=0, description="|det dOmega/dI| below this is degenerate")
    relation: float = Field(default=1e-6, gt=0, description="Max residual |wrap(beta_m - m.theta)|")
    oracle: float = Field(default=1e-3, gt=0, description="Max |theta - theta_oracle|")
    closure: float = Field(default=1e-9, gt=0, description="Fubini-Study closure of an evolved loop")
    sigma: float = Field(default=3.0, gt=0, description="Monte Carlo drift threshold in standard errors")
    koopman: float = Field(default=1e-10, gt=0, description="composition_apply vs evolve discrepancy")
    group_law: float = Field(default=1e-14, gt=0, description="|U_t U_s psi - U_{t+s} psi|")
    spectral: float = Field(default=1e-8, gt=0, description="Phase-derivative recovery of m.Omega")
    resonance: float = Field(default=1e-9, gt=0, description="|k.Omega| below this is resonant")


class OracleConfig(BaseModel):
    """Slow-drive adiabatic oracle settings"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    eps_list: list[float] = Field(default=[1e-3, 5e-4], min_length=2, description="Decreasing drive rates")
    initial_angles: int = Field(default=8, ge=1, description="Equidistributed Phi_0 values averaged over")
    steps_per_period: int = Field(default=64, ge=8, description="Frozen-parameter sub-steps per fastest period")
    scheme: Literal["exact-oscillator"] = "exact-oscillator"


class MonteCarloConfig(BaseModel):
    """Liouville measure-invariance check settings"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    samples: int = Field(default=100_000, ge=1000, description="Number of sample points N")
    chunk_size: int = Field(default=10_000, ge=1, description="Points per seeded substream")
    region: Region = Field(default_factory=DiskRegion, description="Sampling region")
    observables: list[str] = Field(default=["q", "p", "q_positive", "radial"], min_length=1)
    duration: float = Field(default=10.0, description="Flow time t")
    dt: float = Field(default=1e-3, gt=0, description="Leapfrog step")
    scheme: str = Field(default="exact-oscillator", description="One of FlowSpec.SCHEMES")

    @model_validator(mode="after")
    def check_scheme(self):
        if self.scheme not in FlowSpec.SCHEMES:
            raise ValueError(f"unknown scheme '{self.scheme}', expected one of {FlowSpec.SCHEMES}")
        return self

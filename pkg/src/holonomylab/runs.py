import math
from abc import ABC, abstractmethod
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

from .config import FamilySpec, MonteCarloConfig, OracleConfig, ToleranceConfig
from .loops import ParamLoop


class BaseRun(BaseModel, ABC):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)
    command: str
    seed: int = Field(default=0, ge=0, description="Seed of all random streams")
    workers: int = Field(default=1, ge=1, description="Worker threads; results do not depend on it")
    output: Optional[str] = Field(default=None, description="Report path")
    tables: bool = Field(default=False, description="Also write flat CSV tables")
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)

    @abstractmethod
    def accept(self, visitor):
        raise NotImplementedError


class LoopRun(BaseRun):
    """Runs over a parameter loop of a family at fixed actions mu"""

    family: FamilySpec
    mu: list[float] = Field(min_length=1, description="Actions of the invariant torus")
    loop: ParamLoop
    segments: int = Field(default=256, ge=8, description="Loop discretization K")
    quadrature: int = Field(default=128, ge=4, description="Torus quadrature Q per angle")
    convergence: Optional[list[int]] = Field(default=None, description="Segment counts for a convergence sweep")


class HannayRun(LoopRun):
    command: Literal["hannay"] = "hannay"
    oracle: Optional[OracleConfig] = None

    def accept(self, visitor):
        return visitor.visit_hannay(self)


class BerryRun(LoopRun):
    command: Literal["berry"] = "berry"
    modes: list[list[int]] = Field(min_length=1, description="Mode vectors m")

    def accept(self, visitor):
        return visitor.visit_berry(self)


class VerifyRelationRun(LoopRun):
    command: Literal["verify-relation"] = "verify-relation"
    modes: Optional[list[list[int]]] = Field(
        default=None, description="Mode vectors; defaults to m e_i for m in -3..3 along every axis"
    )
    oracle: Optional[OracleConfig] = None

    def accept(self, visitor):
        return visitor.visit_verify_relation(self)


class ModeAmplitude(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    mode: list[int]
    re: float = 0.0
    im: float = 0.0


class AAPhaseRun(BaseRun):
    command: Literal["aa-phase"] = "aa-phase"
    omega: list[float] = Field(min_length=1, description="Torus frequencies Omega")
    n_max: int = Field(default=16, ge=0, description="Mode truncation bound")
    amplitudes: list[ModeAmplitude] = Field(min_length=1, description="Initial state c_m")
    period: float = Field(gt=0, description="Evolution time T at which psi(T) returns to the ray of psi(0)")
    chain_samples: int = Field(default=10_000, ge=3, description="Samples of the Pancharatnam chain")

    @model_validator(mode="after")
    def check_modes(self):
        if any(len(a.mode) != len(self.omega) for a in self.amplitudes):
            raise ValueError(f"every amplitude mode needs {len(self.omega)} components")
        return self

    def accept(self, visitor):
        return visitor.visit_aa_phase(self)


class KoopmanCheckRun(BaseRun):
    command: Literal["koopman-check"] = "koopman-check"
    omega: list[float] = Field(default=[1.0, math.sqrt(2.0)], min_length=1, description="Torus frequencies")
    n_max: int = Field(default=8, ge=0)
    quadrature: int = Field(default=32, ge=4, description="Grid size Q for composition_apply")
    times: tuple[float, float] = Field(default=(0.7, 1.3), description="Durations (t, s) for the group law")
    states: int = Field(default=5, ge=1, description="Random states checked")

    def accept(self, visitor):
        return visitor.visit_koopman_check(self)


class LiouvilleCheckRun(BaseRun):
    command: Literal["liouville-check"] = "liouville-check"
    family: FamilySpec
    x: list[float] = Field(min_length=1, description="Frozen parameter point")
    monte_carlo: MonteCarloConfig = Field(default_factory=MonteCarloConfig)

    def accept(self, visitor):
        return visitor.visit_liouville_check(self)


class ResonanceRun(BaseRun):
    command: Literal["resonance"] = "resonance"
    omega: list[float] = Field(min_length=1, description="Frequency vector Omega")
    k_max: int = Field(default=10, ge=1, description="Largest |k|_inf searched")

    def accept(self, visitor):
        return visitor.visit_resonance(self)


RunConfig = Annotated[
    Union[HannayRun, BerryRun, AAPhaseRun, VerifyRelationRun, KoopmanCheckRun, LiouvilleCheckRun, ResonanceRun],
    Field(discriminator="command"),
]

COMMANDS = ("hannay", "berry", "aa-phase", "verify-relation", "koopman-check", "liouville-check", "resonance")

run_adapter = TypeAdapter(RunConfig)


def parse_run(data: dict) -> BaseRun:
    return run_adapter.validate_python(data)

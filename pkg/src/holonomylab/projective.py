from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DegenerateChainError, InputError, NormalizationError, NotALoopError, ShapeError
from .koopman import FourierState, generator_spectrum
from .utils.angles import wrap_scalar

logger = logging.getLogger(__name__)

NORM_TOL = 1e-12
DEGENERATE_OVERLAP = 1e-14
DEFAULT_CLOSURE_TOL = 1e-9


def _vector(state: Union[Ray, FourierState, ArrayLike]) -> NDArray[np.complex128]:
    if isinstance(state, Ray):
        return state.vector
    if isinstance(state, FourierState):
        return state.to_dense().reshape(-1)
    return np.asarray(state, dtype=np.complex128).reshape(-1)


class Ray(BaseModel):
    """A point of the projective space P(H), held as a unit representative"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vector: NDArray[np.complex128]

    @model_validator(mode="after")
    def check_unit(self):
        vector = np.asarray(self.vector, dtype=np.complex128).reshape(-1)
        norm = float(np.linalg.norm(vector))
        if abs(norm - 1.0) > NORM_TOL:
            raise NormalizationError(f"ray representative has norm {norm}, expected 1")
        vector.setflags(write=False)
        object.__setattr__(self, "vector", vector)
        return self

    @classmethod
    def of(cls, state: Union[FourierState, ArrayLike]) -> Ray:
        """Normalize a non-zero state onto its ray"""
        vector = _vector(state)
        norm = float(np.linalg.norm(vector))
        if norm == 0:
            raise NormalizationError("the zero vector spans no ray")
        return cls(vector=vector / norm)


class StateLoop(BaseModel):
    """Samples psi_0, ..., psi_{K-1} of a closed curve in H; the chain closes back to psi_0"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    states: NDArray[np.complex128] = Field(description="Representatives, shape (K, dim)")

    @model_validator(mode="after")
    def check_states(self):
        states = np.asarray(self.states, dtype=np.complex128)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ShapeError(f"state loop needs shape (K, dim), got {states.shape}")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        return self

    @classmethod
    def from_states(cls, states: Sequence[Union[Ray, FourierState, ArrayLike]]) -> StateLoop:
        vectors = [_vector(s) for s in states]
        if len({v.shape for v in vectors}) > 1:
            raise ShapeError("all states of a loop must live in the same space")
        return cls(states=np.stack(vectors))

    def __len__(self) -> int:
        return self.states.shape[0]

    def reversed(self) -> StateLoop:
        return StateLoop(states=self.states[::-1].copy())

    def overlaps(self) -> NDArray[np.complex128]:
        """<psi_k | psi_{k+1}> for k = 0..K-1, the last pairing back to psi_0"""
        following = np.roll(self.states, -1, axis=0)
        return np.sum(np.conj(self.states) * following, axis=1)


def _unit_distance(u: NDArray[np.complex128], v: NDArray[np.complex128]) -> float:
    # 2 asin(|v - e^{i arg<u|v>} u| / 2) equals arccos|<u|v>| but stays accurate near 0
    overlap = complex(np.vdot(u, v))
    if overlap == 0:
        return math.pi / 2
    chord = float(np.linalg.norm(v - (overlap / abs(overlap)) * u))
    return 2 * math.asin(min(1.0, chord / 2))


def fs_distance(psi: Union[Ray, FourierState, ArrayLike], phi: Union[Ray, FourierState, ArrayLike]) -> float:
    """Fubini-Study distance arccos |<psi|phi>| / (|psi| |phi|), in [0, pi/2]"""
    u, v = _vector(psi), _vector(phi)
    if u.shape != v.shape:
        raise ShapeError(f"states of dimension {u.shape[0]} and {v.shape[0]}")
    u_norm, v_norm = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if u_norm == 0 or v_norm == 0:
        raise NormalizationError("distance to the zero vector is undefined")
    return _unit_distance(u / u_norm, v / v_norm)


def aa_connection_value(psi: ArrayLike, tangent: ArrayLike) -> complex:
    """A(X) = i Im <psi|X> at a unit-norm psi"""
    psi = _vector(psi)
    tangent = _vector(tangent)
    if psi.shape != tangent.shape:
        raise ShapeError(f"state of dimension {psi.shape[0]} with tangent of dimension {tangent.shape[0]}")
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > NORM_TOL:
        raise NormalizationError(f"connection evaluated off the unit sphere (|psi| = {norm})")
    return 1j * complex(np.vdot(psi, tangent)).imag


def horizontality_defect(samples: ArrayLike, dt: float) -> float:
    """max_k |<psi_k | dpsi/dt>| with central-difference derivatives at interior samples"""
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.ndim != 2 or samples.shape[0] < 3:
        raise InputError(f"horizontality needs at least 3 samples, got shape {samples.shape}")
    derivative = (samples[2:] - samples[:-2]) / (2 * dt)
    return float(np.max(np.abs(np.sum(np.conj(samples[1:-1]) * derivative, axis=1))))


def discrete_holonomy(loop: StateLoop, tol: float = DEGENERATE_OVERLAP) -> float:
    """arg prod <psi_k|psi_{k+1}> over the closed chain, in (-pi, pi]

    The per-link angles are summed with fsum before wrapping, so reversing the chain negates the
    result and rephasing any representative leaves it unchanged.
    """
    overlaps = loop.overlaps()
    norms = np.linalg.norm(loop.states, axis=1)
    scale = norms * np.roll(norms, -1)
    small = np.flatnonzero(np.abs(overlaps) <= tol * scale)
    if small.size:
        raise DegenerateChainError(f"consecutive states {int(small[0])} and {int(small[0]) + 1} are orthogonal")
    return wrap_scalar(math.fsum(np.angle(overlaps).tolist()))


class AAPhaseResult(BaseModel):
    beta: float = Field(description="Geometric phase arg<psi(0)|psi(T)> - <H> T, wrapped")
    total_phase: float = Field(description="arg <psi(0)|psi(T)>")
    dynamical_phase: float = Field(description="<H> T, unwrapped")
    expectation: float = Field(description="<H> on the normalized state")
    period: float
    closure_distance: float = Field(description="Fubini-Study distance between psi(0) and psi(T)")
    chain_beta: float = Field(description="Geometric phase from the sampled Pancharatnam chain")
    chain_samples: int


def aa_phase_from_evolution(
    state: FourierState,
    omega: Sequence[float],
    period: float,
    chain_samples: int = 8192,
    closure_tol: float = DEFAULT_CLOSURE_TOL,
) -> AAPhaseResult:
    """Aharonov-Anandan phase of psi(t) = exp(+iHt) psi over [0, period]

    The generator acts on |m> as m.Omega, so the dynamical phase is +<H> T and the geometric phase
    is arg<psi(0)|psi(T)> - <H> T.
    """
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (state.n,):
        raise ShapeError(f"{omega.shape[0]} frequencies for a {state.n}-torus state")
    if chain_samples < 3:
        raise InputError(f"the sampled chain needs at least 3 states, got {chain_samples}")
    norm = state.norm()
    if norm == 0:
        raise NormalizationError("cannot evolve the zero state")

    amplitudes = state.amplitudes / norm
    spectrum = np.asarray(generator_spectrum(omega, state.modes))
    final = amplitudes * np.exp(1j * spectrum * period)
    overlap = complex(np.vdot(amplitudes, final))
    closure = _unit_distance(amplitudes, final)
    if closure > closure_tol:
        raise NotALoopError(f"psi(T) is not on the ray of psi(0): Fubini-Study distance {closure:.3e} at T={period}")

    expectation = float(np.dot(np.abs(amplitudes) ** 2, spectrum))
    total = math.atan2(overlap.imag, overlap.real)
    dynamical = expectation * period
    beta = wrap_scalar(total - dynamical)

    times = period * np.arange(chain_samples) / chain_samples
    samples = amplitudes[None, :] * np.exp(1j * np.outer(times, spectrum))
    chain_beta = wrap_scalar(-discrete_holonomy(StateLoop(states=samples)))
    logger.debug(f"A-A phase over T={period}: total={total:.12f}, dynamical={dynamical:.12f}, beta={beta:.12f}")

    return AAPhaseResult(
        beta=beta,
        total_phase=total,
        dynamical_phase=dynamical,
        expectation=expectation,
        period=period,
        closure_distance=closure,
        chain_beta=chain_beta,
        chain_samples=chain_samples,
    )

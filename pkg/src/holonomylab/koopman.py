from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .dynamics import torus_nodes
from .errors import AliasingError, ConfigurationError, ShapeError
from .families import HamiltonianFamily, IntegrableFamily, PointLike, as_actions

logger = logging.getLogger(__name__)

DEFAULT_N_MAX = 16

ModeVector = tuple[int, ...]


class FourierState(BaseModel):
    """A truncated element of L2(T^n): amplitudes c_m on mode vectors |m_i| <= n_max

    Storage is sparse; modes not listed have zero amplitude.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int = Field(description="Torus dimension")
    n_max: int = Field(default=DEFAULT_N_MAX, description="Per-component truncation bound")
    modes: NDArray[np.int64] = Field(description="Mode vectors, shape (k, n)")
    amplitudes: NDArray[np.complex128] = Field(description="Complex amplitudes, shape (k,)")

    @model_validator(mode="after")
    def check_shapes(self):
        modes = np.asarray(self.modes, dtype=np.int64).reshape(-1, self.n)
        amplitudes = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if modes.shape[0] != amplitudes.shape[0]:
            raise ShapeError(f"{modes.shape[0]} modes but {amplitudes.shape[0]} amplitudes")
        if modes.size and np.max(np.abs(modes)) > self.n_max:
            raise ShapeError(f"mode entries exceed the truncation bound {self.n_max}")
        if len({tuple(m) for m in modes.tolist()}) != modes.shape[0]:
            raise ShapeError("mode vectors must be distinct")
        if not np.all(np.isfinite(amplitudes)):
            raise ShapeError("amplitudes must be finite")
        modes.setflags(write=False)
        amplitudes.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "amplitudes", amplitudes)
        return self

    @classmethod
    def from_mapping(cls, amplitudes: Mapping[Sequence[int], complex], n: int, n_max: int = DEFAULT_N_MAX):
        modes = [tuple(int(k) for k in m) for m in amplitudes]
        if any(len(m) != n for m in modes):
            raise ShapeError(f"every mode vector must have {n} components")
        return cls(
            n=n,
            n_max=n_max,
            modes=np.array(modes, dtype=np.int64).reshape(-1, n),
            amplitudes=np.array(list(amplitudes.values()), dtype=np.complex128),
        )

    @classmethod
    def basis(cls, mode: Sequence[int], n_max: int = DEFAULT_N_MAX) -> FourierState:
        return cls.from_mapping({tuple(mode): 1.0}, n=len(mode), n_max=n_max)

    @classmethod
    def random(cls, rng: np.random.Generator, n: int, n_max: int, occupied: Optional[int] = None) -> FourierState:
        """Normalized state with Gaussian amplitudes on `occupied` random modes (all modes by default)"""
        box = _box_modes(n, n_max)
        if occupied is not None and occupied < len(box):
            box = box[np.sort(rng.choice(len(box), size=occupied, replace=False))]
        amplitudes = rng.standard_normal(len(box)) + 1j * rng.standard_normal(len(box))
        amplitudes /= np.linalg.norm(amplitudes)
        return cls(n=n, n_max=n_max, modes=box, amplitudes=amplitudes)

    @classmethod
    def from_dense(cls, dense: NDArray[np.complex128], n_max: int) -> FourierState:
        n = dense.ndim
        box = _box_modes(n, n_max)
        return cls(n=n, n_max=n_max, modes=box, amplitudes=dense[tuple((box + n_max).T)])

    def to_dense(self) -> NDArray[np.complex128]:
        """Amplitudes on the full truncation box, indexed by m + n_max"""
        dense = np.zeros((2 * self.n_max + 1,) * self.n, dtype=np.complex128)
        if self.modes.size:
            dense[tuple((self.modes + self.n_max).T)] = self.amplitudes
        return dense

    def amplitude(self, mode: Sequence[int]) -> complex:
        matches = np.flatnonzero(np.all(self.modes == np.asarray(mode), axis=1))
        return complex(self.amplitudes[matches[0]]) if matches.size else 0j

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def weights(self) -> NDArray[np.float64]:
        return np.abs(self.amplitudes) ** 2

    def expectation(self, omega: Sequence[float]) -> float:
        """<H> = sum |c_m|^2 m.Omega, the exact generator expectation"""
        spectrum = np.asarray(generator_spectrum(omega, self.modes))
        return float(np.dot(self.weights(), spectrum) / self.norm() ** 2)

    def to_report(self) -> list[dict]:
        return [
            {"mode": [int(k) for k in m], "re": float(c.real), "im": float(c.imag)}
            for m, c in zip(self.modes, self.amplitudes)
        ]


def _box_modes(n: int, n_max: int) -> NDArray[np.int64]:
    axis = np.arange(-n_max, n_max + 1)
    return np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n).astype(np.int64)


class KoopmanPropagator(BaseModel):
    """U_t = exp(+i H t) for the torus translation at frequencies Omega"""

    model_config = ConfigDict(frozen=True)

    omega: tuple[float, ...]
    t: float

    @field_validator("omega")
    @classmethod
    def check_omega(cls, value):
        if not all(math.isfinite(v) for v in value):
            raise ValueError(f"frequencies must be finite, got {value}")
        return value

    @field_validator("t")
    @classmethod
    def check_t(cls, value):
        if not math.isfinite(value):
            raise ValueError(f"duration must be finite, got {value}")
        return value


def generator_spectrum(omega: Sequence[float], modes) -> list[float]:
    """Eigenvalues m.Omega of the generator on |m>"""
    omega = np.asarray(omega, dtype=np.float64)
    modes = np.asarray(modes, dtype=np.float64).reshape(-1, omega.shape[0])
    return (modes @ omega).tolist()


def evolve(state: FourierState, prop: KoopmanPropagator) -> FourierState:
    if len(prop.omega) != state.n:
        raise ShapeError(f"propagator has {len(prop.omega)} frequencies, state lives on a {state.n}-torus")
    if prop.t == 0:
        return state
    phases = (state.modes @ np.asarray(prop.omega)) * prop.t
    return FourierState(
        n=state.n, n_max=state.n_max, modes=state.modes, amplitudes=state.amplitudes * np.exp(1j * phases)
    )


def composition_apply(state: FourierState, omega: Sequence[float], t: float, quadrature: int) -> FourierState:
    """(U_t psi)(Phi) = psi(Phi + Omega t), evaluated on a Q^n grid and projected back by FFT"""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (state.n,):
        raise ShapeError(f"{omega.shape[0]} frequencies for a {state.n}-torus state")
    if quadrature <= 2 * state.n_max:
        raise AliasingError(f"quadrature {quadrature} must exceed 2*N_max = {2 * state.n_max}")

    nodes = torus_nodes(state.n, quadrature)
    shifted = nodes + omega * t
    values = np.exp(1j * (shifted @ state.modes.T)) @ state.amplitudes
    coefficients = np.fft.fftn(values.reshape((quadrature,) * state.n)) / quadrature**state.n

    box = _box_modes(state.n, state.n_max)
    projected = coefficients[tuple((box % quadrature).T)]
    return FourierState(n=state.n, n_max=state.n_max, modes=box, amplitudes=projected)


class KoopmanFactory(BaseModel):
    """Propagators of a family's Koopman lift on the torus I = mu"""

    model_config = ConfigDict(frozen=True)

    family: str
    x: tuple[float, ...]
    mu: tuple[float, ...]
    omega: tuple[float, ...]

    def propagator(self, t: float) -> KoopmanPropagator:
        return KoopmanPropagator(omega=self.omega, t=t)

    def evolve(self, state: FourierState, t: float) -> FourierState:
        return evolve(state, self.propagator(t))


def koopman_from_family(family: HamiltonianFamily, x: PointLike, mu: Sequence[float]) -> KoopmanFactory:
    if not isinstance(family, IntegrableFamily):
        raise ConfigurationError(f"family {family.name} has no action-angle energy, so no Koopman frequencies")
    actions = as_actions(mu, family.n_dof)
    coords = family.check_admissible(x)
    omega = family.frequency(actions, coords)
    logger.debug(f"Koopman lift of {family.name} at x={coords.tolist()}, mu={actions.tolist()}: Omega={omega}")
    return KoopmanFactory(
        family=family.name, x=tuple(coords.tolist()), mu=tuple(actions.tolist()), omega=tuple(omega.tolist())
    )

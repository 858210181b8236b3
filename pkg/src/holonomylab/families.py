from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from typing import ClassVar, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.optimize import brentq
from scipy.special import beta as beta_function

from .errors import ChartUnavailableError, DomainError, LevelSetError, SingularPointError
from .utils.angles import TWO_PI, angle_difference, to_unit_interval

logger = logging.getLogger(__name__)

DEFAULT_ACTION_STEP = 1e-5
DEFAULT_DEGENERACY_TOL = 1e-9


class ParamPoint(BaseModel):
    """A point x of the parameter manifold P"""

    model_config = ConfigDict(frozen=True)

    coords: tuple[float, ...] = Field(description="Parameter coordinates")

    @field_validator("coords")
    @classmethod
    def check_finite(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not all(math.isfinite(c) for c in value):
            raise ValueError(f"parameter coordinates must be finite, got {value}")
        return value

    def as_array(self) -> NDArray[np.float64]:
        return np.asarray(self.coords, dtype=np.float64)


PointLike = Union[ParamPoint, Sequence[float], NDArray[np.float64]]


def as_coords(x: PointLike, dim: Optional[int] = None) -> NDArray[np.float64]:
    """Convert a parameter point to a finite 1-D float array"""
    coords = x.as_array() if isinstance(x, ParamPoint) else np.asarray(x, dtype=np.float64).reshape(-1)
    if dim is not None and coords.shape != (dim,):
        raise DomainError(f"expected {dim} parameter coordinates, got {coords.shape[0]}")
    if not np.all(np.isfinite(coords)):
        raise DomainError(f"parameter coordinates must be finite, got {tuple(coords)}")
    return coords


def as_actions(I: ArrayLike, n_dof: int) -> NDArray[np.float64]:
    actions = np.atleast_1d(np.asarray(I, dtype=np.float64))
    if actions.shape != (n_dof,):
        raise DomainError(f"expected {n_dof} action values, got shape {actions.shape}")
    return actions


class NondegeneracyCheck(BaseModel):
    determinant: float = Field(description="det dOmega/dI")
    degenerate: bool = Field(description="True when |det| is below the tolerance")
    method: str = Field(description="analytic or central-difference")


class HamiltonianFamily(ABC):
    """A parametrized Hamiltonian system over an admissible parameter region"""

    name: ClassVar[str] = "family"

    def __init__(self, param_dim: int, n_dof: int = 1):
        self.param_dim = param_dim
        self.n_dof = n_dof

    def admissibility_violation(self, x: NDArray[np.float64]) -> Optional[str]:
        """Return a description of the violated inequality, or None"""
        return None

    def check_admissible(self, x: PointLike) -> NDArray[np.float64]:
        coords = as_coords(x, self.param_dim)
        violation = self.admissibility_violation(coords)
        if violation is not None:
            raise DomainError(f"{self.name} parameters {tuple(coords.tolist())} are inadmissible: {violation}")
        return coords

    def is_admissible(self, x: PointLike) -> bool:
        try:
            self.check_admissible(x)
        except DomainError:
            return False
        return True

    @property
    def has_chart(self) -> bool:
        return False


class IntegrableFamily(HamiltonianFamily):
    """Families with an energy function of the actions, H = h(I; x)"""

    @abstractmethod
    def energy(self, I: ArrayLike, x: PointLike) -> float:
        pass

    def analytic_frequency(self, I: NDArray[np.float64], x: NDArray[np.float64]) -> Optional[NDArray[np.float64]]:
        return None

    def analytic_frequency_jacobian(
        self, I: NDArray[np.float64], x: NDArray[np.float64]
    ) -> Optional[NDArray[np.float64]]:
        return None

    def frequency(self, I: ArrayLike, x: PointLike, step: float = DEFAULT_ACTION_STEP) -> NDArray[np.float64]:
        """Omega = dH/dI, analytic when the family provides it"""
        actions = as_actions(I, self.n_dof)
        coords = self.check_admissible(x)
        analytic = self.analytic_frequency(actions, coords)
        if analytic is not None:
            return np.asarray(analytic, dtype=np.float64).reshape(self.n_dof)
        return self.numerical_frequency(actions, coords, step)

    def numerical_frequency(self, I: ArrayLike, x: PointLike, step: float = DEFAULT_ACTION_STEP) -> NDArray[np.float64]:
        actions = as_actions(I, self.n_dof)
        coords = self.check_admissible(x)
        omega = np.empty(self.n_dof)
        for i in range(self.n_dof):
            shift = np.zeros(self.n_dof)
            shift[i] = step
            omega[i] = (self.energy(actions + shift, coords) - self.energy(actions - shift, coords)) / (2 * step)
        return omega

    def nondegeneracy(
        self,
        I: ArrayLike,
        x: PointLike,
        step: float = DEFAULT_ACTION_STEP,
        tol: float = DEFAULT_DEGENERACY_TOL,
        numerical: bool = False,
    ) -> NondegeneracyCheck:
        """det dOmega/dI and the degeneracy flag; never raises on degeneracy"""
        actions = as_actions(I, self.n_dof)
        coords = self.check_admissible(x)
        jacobian = None if numerical else self.analytic_frequency_jacobian(actions, coords)
        method = "analytic"
        if jacobian is None:
            method = "central-difference"
            jacobian = np.empty((self.n_dof, self.n_dof))
            for j in range(self.n_dof):
                shift = np.zeros(self.n_dof)
                shift[j] = step
                plus = self.frequency(actions + shift, coords, step)
                minus = self.frequency(actions - shift, coords, step)
                jacobian[:, j] = (plus - minus) / (2 * step)
        det = float(np.linalg.det(np.asarray(jacobian, dtype=np.float64).reshape(self.n_dof, self.n_dof)))
        degenerate = abs(det) < tol
        if degenerate:
            logger.debug(f"{self.name}: frequency map degenerate at I={actions.tolist()} (det={det:.3e})")
        return NondegeneracyCheck(determinant=det, degenerate=degenerate, method=method)


class CanonicalFamily(HamiltonianFamily):
    """Families given in canonical coordinates (q, p) with one degree of freedom"""

    @abstractmethod
    def hamiltonian(self, q: ArrayLike, p: ArrayLike, x: PointLike) -> NDArray[np.float64]:
        pass

    def hamiltonian_gradient(
        self, q: ArrayLike, p: ArrayLike, x: PointLike, step: float = 1e-6
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        q = np.asarray(q, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        dq = (self.hamiltonian(q + step, p, x) - self.hamiltonian(q - step, p, x)) / (2 * step)
        dp = (self.hamiltonian(q, p + step, x) - self.hamiltonian(q, p - step, x)) / (2 * step)
        return dq, dp

    def split_gradients(self, x: PointLike) -> Optional[tuple[Callable, Callable]]:
        """(dV/dq, dT/dp) when H = T(p) + V(q), otherwise None"""
        return None

    def numeric_action(self, energy: float, x: PointLike, quadrature: int = 256) -> float:
        coords = self.check_admissible(x)
        return numeric_action(energy, lambda q, p: self.hamiltonian(q, p, coords), quadrature)


class ChartFamily(CanonicalFamily, IntegrableFamily):
    """Canonical families with a global action-angle chart"""

    gauge: str = "default"

    @property
    def has_chart(self) -> bool:
        return True

    @abstractmethod
    def aa_forward(self, q: ArrayLike, p: ArrayLike, x: PointLike) -> tuple[NDArray, NDArray]:
        pass

    @abstractmethod
    def aa_inverse(self, I: ArrayLike, phi: ArrayLike, x: PointLike) -> tuple[NDArray, NDArray]:
        pass

    def energy(self, I: ArrayLike, x: PointLike) -> float:
        actions = as_actions(I, self.n_dof)
        q, p = self.aa_inverse(actions[0], 0.0, x)
        return float(self.hamiltonian(q, p, x))


class GeneralizedOscillatorFamily(ChartFamily):
    """H(q, p; X, Y, Z) = (X q^2 + 2 Y q p + Z p^2) / 2 on Z > 0, XZ - Y^2 > 0"""

    name: ClassVar[str] = "oscillator"
    gauge = "atan2(-P, Q)"

    def __init__(self):
        super().__init__(param_dim=3, n_dof=1)

    def admissibility_violation(self, x: NDArray[np.float64]) -> Optional[str]:
        X, Y, Z = x
        if not Z > 0:
            return f"Z > 0 violated (Z = {Z})"
        if not X * Z - Y * Y > 0:
            return f"XZ - Y^2 > 0 violated (XZ - Y^2 = {X * Z - Y * Y})"
        return None

    def normal_form(self, x: PointLike) -> tuple[float, float, float, float]:
        """Coefficients (a, b, c, omega) of Q = a q, P = b q + c p"""
        X, Y, Z = self.check_admissible(x)
        omega = math.sqrt(X * Z - Y * Y)
        return math.sqrt(omega / Z), Y / math.sqrt(omega * Z), math.sqrt(Z / omega), omega

    def flow_matrix(self, x: PointLike, t: float) -> NDArray[np.float64]:
        """Exact time-t flow on (q, p): N^-1 R(omega t) N"""
        a, b, c, omega = self.normal_form(x)
        cos, sin = math.cos(omega * t), math.sin(omega * t)
        normal = np.array([[a, 0.0], [b, c]])
        inverse = np.array([[c, 0.0], [-b, a]])
        rotation = np.array([[cos, sin], [-sin, cos]])
        return inverse @ rotation @ normal

    def hamiltonian(self, q: ArrayLike, p: ArrayLike, x: PointLike) -> NDArray[np.float64]:
        X, Y, Z = as_coords(x, 3)
        q = np.asarray(q, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        return 0.5 * (X * q * q + 2 * Y * q * p + Z * p * p)

    def hamiltonian_gradient(self, q, p, x, step: float = 1e-6):
        X, Y, Z = as_coords(x, 3)
        q = np.asarray(q, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        return X * q + Y * p, Y * q + Z * p

    def split_gradients(self, x: PointLike):
        X, Y, Z = self.check_admissible(x)
        if Y != 0:
            return None
        return (lambda q: X * q), (lambda p: Z * p)

    def aa_forward(self, q, p, x):
        a, b, c, _ = self.normal_form(x)
        q = np.asarray(q, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        if np.any((q == 0) & (p == 0)):
            raise SingularPointError("angle undefined at (q, p) = (0, 0): action is 0")
        Q = a * q
        P = b * q + c * p
        return 0.5 * (Q * Q + P * P), to_unit_interval(np.arctan2(-P, Q))

    def aa_inverse(self, I, phi, x):
        a, b, c, _ = self.normal_form(x)
        I = np.asarray(I, dtype=np.float64)
        if np.any(I <= 0):
            raise DomainError(f"action must be positive, got {np.min(I)}")
        radius = np.sqrt(2 * I)
        phi = np.asarray(phi, dtype=np.float64)
        Q = radius * np.cos(phi)
        P = -radius * np.sin(phi)
        q = c * Q
        return q, a * (P - b * q)

    def energy(self, I, x) -> float:
        return float(as_actions(I, 1)[0] * self.normal_form(x)[3])

    def analytic_frequency(self, I, x):
        return np.array([oscillator_frequency(x)])

    def analytic_frequency_jacobian(self, I, x):
        return np.zeros((1, 1))


def oscillator_frequency(x: PointLike) -> float:
    """omega = sqrt(XZ - Y^2) of the generalized oscillator"""
    return GeneralizedOscillatorFamily().normal_form(x)[3]


class QuarticFamily(CanonicalFamily):
    """H = p^2 / 2 + lam q^4 / 4, no closed-form chart"""

    name: ClassVar[str] = "quartic"

    def __init__(self):
        super().__init__(param_dim=1, n_dof=1)

    def admissibility_violation(self, x):
        if not x[0] > 0:
            return f"lambda > 0 violated (lambda = {x[0]})"
        return None

    def hamiltonian(self, q, p, x):
        (lam,) = as_coords(x, 1)
        q = np.asarray(q, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        return 0.5 * p * p + 0.25 * lam * q**4

    def hamiltonian_gradient(self, q, p, x, step: float = 1e-6):
        (lam,) = as_coords(x, 1)
        return lam * np.asarray(q, dtype=np.float64) ** 3, np.asarray(p, dtype=np.float64)

    def split_gradients(self, x):
        (lam,) = self.check_admissible(x)
        return (lambda q: lam * q**3), (lambda p: p)

    def exact_action(self, energy: float, x: PointLike) -> float:
        """Closed form (1/2pi) closed-integral p dq = sqrt(2E) q_max B(1/4, 3/2) / 2pi, q_max = (4E / lam)^(1/4)"""
        (lam,) = self.check_admissible(x)
        if not energy > 0:
            raise LevelSetError(f"quartic level sets need E > 0, got {energy}")
        q_max = (4 * energy / lam) ** 0.25
        return math.sqrt(2 * energy) * q_max * beta_function(0.25, 1.5) / TWO_PI


class PolynomialGauge(BaseModel):
    """Single-valued gauge function g(x) = sum_k c_k prod_j x_j^e_kj"""

    model_config = ConfigDict(frozen=True)

    coefficients: list[float] = Field(description="Term coefficients c_k")
    exponents: list[list[int]] = Field(description="Non-negative exponents e_kj per term")

    def __call__(self, x: NDArray[np.float64]) -> float:
        x = np.asarray(x, dtype=np.float64)
        total = 0.0
        for coefficient, powers in zip(self.coefficients, self.exponents):
            total += coefficient * float(np.prod(x ** np.asarray(powers)))
        return total

    def gradient(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        grad = np.zeros_like(x)
        for coefficient, powers in zip(self.coefficients, self.exponents):
            powers = np.asarray(powers)
            for j in range(x.shape[0]):
                if powers[j] == 0:
                    continue
                reduced = powers.copy()
                reduced[j] -= 1
                grad[j] += coefficient * powers[j] * float(np.prod(x**reduced))
        return grad


class RegaugedFamily(ChartFamily):
    """A chart family with its angle origin moved by Phi -> Phi + g(x)"""

    def __init__(self, base: ChartFamily, gauge: Callable[[NDArray[np.float64]], float]):
        super().__init__(param_dim=base.param_dim, n_dof=base.n_dof)
        self.base = base
        self.gauge_function = gauge
        self.name = f"{base.name}+gauge"
        self.gauge = f"{base.gauge} + g(x)"

    def admissibility_violation(self, x):
        return self.base.admissibility_violation(x)

    def hamiltonian(self, q, p, x):
        return self.base.hamiltonian(q, p, x)

    def hamiltonian_gradient(self, q, p, x, step: float = 1e-6):
        return self.base.hamiltonian_gradient(q, p, x, step)

    def split_gradients(self, x):
        return self.base.split_gradients(x)

    def aa_forward(self, q, p, x):
        coords = self.check_admissible(x)
        I, phi = self.base.aa_forward(q, p, coords)
        return I, to_unit_interval(phi + self.gauge_function(coords))

    def aa_inverse(self, I, phi, x):
        coords = self.check_admissible(x)
        return self.base.aa_inverse(I, np.asarray(phi, dtype=np.float64) - self.gauge_function(coords), coords)

    def energy(self, I, x):
        return self.base.energy(I, x)

    def analytic_frequency(self, I, x):
        return self.base.analytic_frequency(I, x)

    def analytic_frequency_jacobian(self, I, x):
        return self.base.analytic_frequency_jacobian(I, x)


class AbstractIntegrableFamily(IntegrableFamily):
    """An n-dof family given directly in action-angle form

    h(I, x) is the energy; chart_deformation(I, phi, x, j) returns dPhi/dx_j at a fixed phase-space
    point, for angle grids phi of shape (..., n), with result shape (..., n).
    """

    name: ClassVar[str] = "abstract"

    def __init__(
        self,
        h: Callable[[NDArray, NDArray], float],
        chart_deformation: Callable[[NDArray, NDArray, NDArray, int], NDArray],
        n_dof: int,
        param_dim: int,
        frequency: Optional[Callable[[NDArray, NDArray], NDArray]] = None,
        frequency_jacobian: Optional[Callable[[NDArray, NDArray], NDArray]] = None,
        admissible: Optional[Callable[[NDArray], Optional[str]]] = None,
    ):
        super().__init__(param_dim=param_dim, n_dof=n_dof)
        self._h = h
        self._deformation = chart_deformation
        self._frequency = frequency
        self._frequency_jacobian = frequency_jacobian
        self._admissible = admissible

    def admissibility_violation(self, x):
        return None if self._admissible is None else self._admissible(x)

    def energy(self, I, x) -> float:
        return float(self._h(as_actions(I, self.n_dof), as_coords(x, self.param_dim)))

    def analytic_frequency(self, I, x):
        return None if self._frequency is None else self._frequency(I, x)

    def analytic_frequency_jacobian(self, I, x):
        return None if self._frequency_jacobian is None else self._frequency_jacobian(I, x)

    def chart_deformation(self, I: ArrayLike, phi: NDArray, x: PointLike, direction: int) -> NDArray[np.float64]:
        if not 0 <= direction < self.param_dim:
            raise DomainError(f"parameter direction {direction} out of range for {self.param_dim} parameters")
        actions = as_actions(I, self.n_dof)
        values = np.asarray(self._deformation(actions, phi, as_coords(x, self.param_dim), direction))
        return values.reshape(np.shape(phi))


class AnharmonicTorusFamily(AbstractIntegrableFamily):
    """h(I) = sum omega_i I_i + beta_i I_i^2 / 2 with a constant-curvature chart deformation

    dPhi_i/dx = kappa_i (-x_b dx_a + x_a dx_b) / 2 in the plane (a, b), plus a zero-mean ripple, so the
    holonomy of a loop in that plane is kappa_i times its signed area.
    """

    name: ClassVar[str] = "anharmonic-torus"

    def __init__(
        self,
        omega: Sequence[float],
        beta: Sequence[float],
        curvature: Sequence[float],
        param_dim: int = 2,
        plane: tuple[int, int] = (0, 1),
        ripple: float = 0.0,
    ):
        self.omega = np.asarray(omega, dtype=np.float64)
        self.beta = np.asarray(beta, dtype=np.float64)
        self.curvature = np.asarray(curvature, dtype=np.float64)
        n_dof = self.omega.shape[0]
        if self.beta.shape != (n_dof,) or self.curvature.shape != (n_dof,):
            raise DomainError("omega, beta and curvature must have one entry per degree of freedom")
        if param_dim < 2 or not (0 <= plane[0] < param_dim and 0 <= plane[1] < param_dim and plane[0] != plane[1]):
            raise DomainError(f"plane {plane} is not a coordinate plane of a {param_dim}-dimensional parameter space")
        self.plane = plane
        self.ripple = ripple
        super().__init__(
            h=self._energy,
            chart_deformation=self._deformation_form,
            n_dof=n_dof,
            param_dim=param_dim,
            frequency=lambda I, x: self.omega + self.beta * I,
            frequency_jacobian=lambda I, x: np.diag(self.beta),
        )

    def _energy(self, I, x) -> float:
        return float(np.dot(self.omega, I) + 0.5 * np.dot(self.beta, I * I))

    def _deformation_form(self, I, phi, x, direction):
        a, b = self.plane
        if direction == a:
            mean = -0.5 * self.curvature * x[b]
        elif direction == b:
            mean = 0.5 * self.curvature * x[a]
        else:
            mean = np.zeros(self.n_dof)
        return mean + self.ripple * (1.0 + x[direction] ** 2) * np.sin(phi)


def numeric_action(
    energy: float,
    hamiltonian: Callable[[NDArray, NDArray], NDArray],
    quadrature: int = 256,
    center: tuple[float, float] = (0.0, 0.0),
    max_radius: float = 1e6,
) -> float:
    """I = (1/2pi) closed-integral p dq over the level curve H = energy

    The level set must be star-shaped about `center`; each ray radius is found with brentq and the
    enclosed area integrated with the periodic trapezoid rule in the polar angle.
    """
    if quadrature < 4:
        raise DomainError(f"quadrature order must be at least 4, got {quadrature}")
    q0, p0 = center
    if not float(hamiltonian(np.float64(q0), np.float64(p0))) < energy:
        raise LevelSetError(f"energy {energy} does not exceed H at the center {center}: no closed level curve")

    angles = TWO_PI * np.arange(quadrature) / quadrature
    radii = np.empty(quadrature)
    for k, angle in enumerate(angles):
        cos, sin = math.cos(angle), math.sin(angle)

        def excess(r, cos=cos, sin=sin):
            return float(hamiltonian(np.float64(q0 + r * cos), np.float64(p0 + r * sin))) - energy

        upper = 1.0
        while excess(upper) < 0:
            upper *= 2
            if upper > max_radius:
                raise LevelSetError(f"level set H = {energy} is open along polar angle {angle:.6f}")
        radii[k] = brentq(excess, 0.0, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    return float(0.5 * np.mean(radii * radii))


def chart_jacobian_determinant(
    family: ChartFamily, q: ArrayLike, p: ArrayLike, x: PointLike, step: float = 1e-6
) -> NDArray[np.float64]:
    """det d(Phi, I)/d(q, p) by central differences; 1 for a canonical chart"""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    I_qp, phi_qp = family.aa_forward(q + step, p, x)
    I_qm, phi_qm = family.aa_forward(q - step, p, x)
    I_pp, phi_pp = family.aa_forward(q, p + step, x)
    I_pm, phi_pm = family.aa_forward(q, p - step, x)
    dI_dq = (I_qp - I_qm) / (2 * step)
    dI_dp = (I_pp - I_pm) / (2 * step)
    dphi_dq = angle_difference(phi_qp, phi_qm) / (2 * step)
    dphi_dp = angle_difference(phi_pp, phi_pm) / (2 * step)
    return dphi_dq * dI_dp - dphi_dp * dI_dq


def torus_energy_spread(family: ChartFamily, I: float, x: PointLike, points: int = 64) -> float:
    """max over an angle grid of |H(inverse(I, phi)) - H(inverse(I, 0))|"""
    phi = TWO_PI * np.arange(points) / points
    q, p = family.aa_inverse(np.full(points, I), phi, x)
    energies = family.hamiltonian(q, p, x)
    return float(np.max(np.abs(energies - energies[0])))

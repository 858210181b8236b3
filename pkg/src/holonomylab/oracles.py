"""Reference computations that share no code path with the connection-based holonomy"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from typing import Literal, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, Field

from .errors import ConfigurationError, InputError, OracleDomainError
from .families import GeneralizedOscillatorFamily, HamiltonianFamily, PointLike, as_coords
from .loops import LoopBase
from .utils.angles import TWO_PI, angle_difference
from .utils.parallel import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_STEPS_PER_PERIOD = 64
DEFAULT_INITIAL_ANGLES = 8
CONVERGENCE_FLOOR = 1e-14


class AdiabaticRun(BaseModel):
    """One slow traversal of the loop at drive rate eps, averaged over initial angles"""

    eps: float = Field(description="Drive rate; the loop takes time 1/eps")
    steps: int = Field(description="Frozen-parameter sub-steps")
    initial_angles: list[float]
    geometric_angle: float = Field(description="Mean over initial angles of Phi_T - Phi_0 - integral omega dt")
    geometric_spread: float = Field(description="Standard deviation of the same over initial angles")
    dynamical_angle: float = Field(description="integral omega(x(t)) dt")
    final_action: float = Field(description="Mean action after the traversal")
    action_drift: float = Field(description="Mean |I(T) - I(0)|")
    action_envelope: float = Field(description="Mean over initial angles of max_t |I(t) - I(0)|")


class OracleResult(BaseModel):
    runs: list[AdiabaticRun]
    theta: float = Field(description="Extrapolated eps -> 0 geometric angle")
    extrapolation: Literal["richardson"] = "richardson"
    extrapolation_pair: tuple[float, float]
    successive_ratios: list[float] = Field(
        default_factory=list, description="|theta(eps_i) - theta(eps_i+1)| / |theta(eps_i+1) - theta(eps_i+2)|"
    )
    envelope_ratios: list[float] = Field(default_factory=list, description="Action envelope ratios between runs")


def _oscillator_only(family: HamiltonianFamily) -> GeneralizedOscillatorFamily:
    if not isinstance(family, GeneralizedOscillatorFamily):
        raise ConfigurationError(f"the adiabatic oracle integrates the oscillator exactly; got family {family.name}")
    return family


def _normal_forms(points: NDArray[np.float64]) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """Vectorized (a, b, c, omega) of the oscillator at each row of points"""
    X, Y, Z = points.T
    discriminant = X * Z - Y * Y
    if np.any(Z <= 0) or np.any(discriminant <= 0):
        bad = int(np.flatnonzero((Z <= 0) | (discriminant <= 0))[0])
        raise OracleDomainError(f"loop leaves the oscillator domain at {tuple(points[bad].tolist())}")
    omega = np.sqrt(discriminant)
    return np.sqrt(omega / Z), Y / np.sqrt(omega * Z), np.sqrt(Z / omega), omega


def _adiabatic_run(
    family: GeneralizedOscillatorFamily,
    mu: float,
    loop: LoopBase,
    eps: float,
    initial_angles: int,
    steps_per_period: int,
) -> AdiabaticRun:
    duration = 1.0 / eps
    outline = loop.evaluate(np.arange(256) / 256)
    omega_max = float(np.max(_normal_forms(outline)[3]))
    steps = math.ceil(duration * omega_max / TWO_PI * steps_per_period)
    dt = duration / steps

    # parameters are frozen at each sub-step midpoint; angles are read in the chart at sub-step edges
    a_mid, b_mid, c_mid, omega_mid = _normal_forms(loop.evaluate((np.arange(steps) + 0.5) / steps))
    edges = loop.evaluate(np.arange(steps + 1) / steps)
    edges[-1] = edges[0]
    a_edge, b_edge, c_edge, _ = _normal_forms(edges)

    cos, sin = np.cos(omega_mid * dt), np.sin(omega_mid * dt)
    bc = b_mid * c_mid
    m00, m01 = cos + bc * sin, c_mid * c_mid * sin
    m10, m11 = -(a_mid * a_mid + b_mid * b_mid) * sin, cos - bc * sin

    phi0 = TWO_PI * np.arange(initial_angles) / initial_angles
    q, p = family.aa_inverse(np.full(initial_angles, mu), phi0, edges[0])

    big_q = np.empty((steps + 1, initial_angles))
    big_p = np.empty((steps + 1, initial_angles))
    big_q[0] = a_edge[0] * q
    big_p[0] = b_edge[0] * q + c_edge[0] * p
    for k in range(steps):
        q, p = m00[k] * q + m01[k] * p, m10[k] * q + m11[k] * p
        big_q[k + 1] = a_edge[k + 1] * q
        big_p[k + 1] = b_edge[k + 1] * q + c_edge[k + 1] * p

    angles = np.arctan2(-big_p, big_q)
    turned = np.sum(angle_difference(angles[1:], angles[:-1]), axis=0)
    dynamical = math.fsum((omega_mid * dt).tolist())
    geometric = turned - dynamical
    actions = 0.5 * (big_q * big_q + big_p * big_p)
    change = np.abs(actions - mu)

    logger.debug(f"adiabatic run eps={eps:g}: {steps} steps, geometric angle {np.mean(geometric):.9f}")
    return AdiabaticRun(
        eps=eps,
        steps=steps,
        initial_angles=phi0.tolist(),
        geometric_angle=float(np.mean(geometric)),
        geometric_spread=float(np.std(geometric)),
        dynamical_angle=dynamical,
        final_action=float(np.mean(actions[-1])),
        action_drift=float(np.mean(change[-1])),
        action_envelope=float(np.mean(np.max(change, axis=0))),
    )


def adiabatic_hannay_oracle(
    family: HamiltonianFamily,
    mu: float,
    loop: LoopBase,
    eps_list: Sequence[float],
    initial_angles: int = DEFAULT_INITIAL_ANGLES,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    workers: int = 1,
) -> OracleResult:
    """Hannay angle from slowly driving the oscillator around the loop and removing the dynamical angle

    Each run integrates the exact frozen-parameter flow on sub-steps of the drive, accumulates the
    unwrapped angle and subtracts integral omega dt. The two smallest rates are Richardson-extrapolated
    to eps -> 0, assuming the error is linear in eps.
    """
    oscillator = _oscillator_only(family)
    if len(eps_list) < 2:
        raise InputError(f"the oracle extrapolates from at least two drive rates, got {len(eps_list)}")
    if any(not e > 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InputError(f"drive rates must be positive and strictly decreasing, got {list(eps_list)}")
    if not mu > 0:
        raise OracleDomainError(f"action must be positive, got {mu}")
    if steps_per_period < 8:
        raise InputError(f"need at least 8 sub-steps per period, got {steps_per_period}")

    runs = ordered_map(
        lambda eps: _adiabatic_run(oscillator, mu, loop, eps, initial_angles, steps_per_period), eps_list, workers
    )
    values = [run.geometric_angle for run in runs]
    coarse, fine = eps_list[-2], eps_list[-1]
    theta = (coarse * values[-1] - fine * values[-2]) / (coarse - fine)

    successive = [
        abs(values[i] - values[i + 1]) / abs(values[i + 1] - values[i + 2])
        for i in range(len(values) - 2)
        if values[i + 1] != values[i + 2]
    ]
    for ratio in successive:
        if not 1.5 <= ratio <= 3.0:
            logger.warning(f"oracle differences shrink by {ratio:.2f} between runs; expected about 2 for halved eps")
    envelopes = [
        runs[i].action_envelope / runs[i + 1].action_envelope
        for i in range(len(runs) - 1)
        if runs[i + 1].action_envelope > 0
    ]
    logger.info(f"adiabatic oracle: theta = {theta:.9f} from eps = {coarse:g}, {fine:g}")
    return OracleResult(
        runs=runs,
        theta=theta,
        extrapolation_pair=(coarse, fine),
        successive_ratios=successive,
        envelope_ratios=envelopes,
    )


def oscillator_hannay_form(x: PointLike) -> NDArray[np.float64]:
    """Closed-form averaged one-form of the oscillator: -(Z dY - Y dZ) / (2 omega Z)"""
    X, Y, Z = GeneralizedOscillatorFamily().check_admissible(x)
    omega = math.sqrt(X * Z - Y * Y)
    return np.array([[0.0, -1.0 / (2 * omega), Y / (2 * omega * Z)]])


def reference_loop_integral(
    form: Callable[[NDArray[np.float64]], ArrayLike], loop: LoopBase, samples: int = 4096
) -> NDArray[np.float64]:
    """closed-integral form(gamma(s)) gamma'(s) ds by the periodic trapezoid rule on the smooth loop"""
    s = np.arange(samples) / samples
    points = loop.evaluate(s)
    tangents = loop.tangent(s)
    values = np.stack([np.asarray(form(as_coords(x)), dtype=np.float64) @ t for x, t in zip(points, tangents)])
    return values.mean(axis=0)


class ConvergenceSweep(BaseModel):
    resolutions: list[int]
    values: list[list[float]]
    errors: list[float] = Field(description="max |value - reference| per resolution")
    reference: list[float]
    reference_source: Literal["supplied", "finest"]
    order: Optional[float] = Field(default=None, description="Fitted algebraic order p in err ~ C r^-p")
    status: Literal["algebraic", "spectral", "exact"]
    floor: float = CONVERGENCE_FLOOR


def convergence_sweep(
    computation: Callable[[int], ArrayLike],
    resolutions: Sequence[int],
    reference: Optional[ArrayLike] = None,
    floor: float = CONVERGENCE_FLOOR,
    workers: int = 1,
) -> ConvergenceSweep:
    """Run a computation at increasing resolutions and classify how its error decays

    Without a reference value the finest resolution serves as one and is left out of the fit.
    """
    resolutions = [int(r) for r in resolutions]
    if len(resolutions) < 3:
        raise InputError(f"a convergence sweep needs at least 3 resolutions, got {len(resolutions)}")
    if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
        raise InputError(f"resolutions must increase, got {resolutions}")

    values = [np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in ordered_map(computation, resolutions, workers)]
    if reference is None:
        target = values[-1]
        compared = list(range(len(values) - 1))
        source = "finest"
    else:
        target = np.atleast_1d(np.asarray(reference, dtype=np.float64))
        compared = list(range(len(values)))
        source = "supplied"
    errors = [float(np.max(np.abs(values[i] - target))) for i in compared]

    order = None
    if all(e <= floor for e in errors):
        status = "exact"
    elif errors[-1] <= floor:
        status = "spectral"
    else:
        status = "algebraic"
        fit = [(resolutions[i], e) for i, e in zip(compared, errors) if e > floor]
        if len(fit) >= 2:
            slope, _ = np.polyfit(np.log([r for r, _ in fit]), np.log([e for _, e in fit]), 1)
            order = float(-slope)

    return ConvergenceSweep(
        resolutions=resolutions,
        values=[v.tolist() for v in values],
        errors=errors,
        reference=target.tolist(),
        reference_source=source,
        order=order,
        status=status,
        floor=floor,
    )

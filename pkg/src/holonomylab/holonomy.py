from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, Field

from .dynamics import torus_average, torus_nodes
from .errors import (
    ChartUnavailableError,
    DegenerateChainError,
    InputError,
    OverlapDomainError,
    ShapeError,
    StencilError,
    StepTooLargeError,
)
from .families import (
    AbstractIntegrableFamily,
    ChartFamily,
    HamiltonianFamily,
    IntegrableFamily,
    NondegeneracyCheck,
    PointLike,
    as_actions,
    as_coords,
)
from .loops import ConstantLoop, LoopBase
from .utils.angles import TWO_PI, angle_difference, winding_number, wrap_scalar
from .utils.parallel import ordered_map

logger = logging.getLogger(__name__)

# theta = HANNAY_ORIENTATION * closed-integral A; +1 agrees with the adiabatic angle shift
HANNAY_ORIENTATION = 1

DEFAULT_SEGMENTS = 256
DEFAULT_QUADRATURE = 128
DEFAULT_FD_STEP = 1e-5
MAX_HALVINGS = 20
OVERLAP_FLOOR = 1e-12


def _check_hannay_family(family: HamiltonianFamily) -> None:
    if isinstance(family, (ChartFamily, AbstractIntegrableFamily)):
        return
    raise ChartUnavailableError(f"family {family.name} has no action-angle chart to differentiate")


class HannayOneFormSample(BaseModel):
    """A_ij(x) = <dPhi_i/dx_j>_torus at one parameter point"""

    x: tuple[float, ...]
    mu: tuple[float, ...]
    connection: list[list[float]] = Field(description="Rows per angle, columns per parameter")
    steps: list[float] = Field(default_factory=list, description="Final finite-difference step per direction")
    quadrature: int
    evaluations: int = Field(default=0, description="Phase-space points passed through the chart")

    def matrix(self) -> NDArray[np.float64]:
        return np.asarray(self.connection, dtype=np.float64)


def hannay_one_form(
    family: HamiltonianFamily,
    mu: ArrayLike,
    x: PointLike,
    quadrature: int = DEFAULT_QUADRATURE,
    step: float = DEFAULT_FD_STEP,
) -> HannayOneFormSample:
    _check_hannay_family(family)
    coords = family.check_admissible(x)
    actions = as_actions(mu, family.n_dof)

    if isinstance(family, AbstractIntegrableFamily):
        columns = []
        for j in range(family.param_dim):
            average = torus_average(
                lambda nodes, j=j: family.chart_deformation(actions, nodes, coords, j), family.n_dof, quadrature
            )
            columns.append(np.atleast_1d(average))
        return HannayOneFormSample(
            x=tuple(coords.tolist()),
            mu=tuple(actions.tolist()),
            connection=np.stack(columns, axis=1).tolist(),
            quadrature=quadrature,
            evaluations=family.param_dim * quadrature**family.n_dof,
        )

    if quadrature < 4:
        raise InputError(f"quadrature order must be at least 4, got {quadrature}")
    phi = TWO_PI * np.arange(quadrature) / quadrature
    q, p = family.aa_inverse(np.full(quadrature, actions[0]), phi, coords)
    row = []
    final_steps = []
    evaluations = quadrature
    for j in range(family.param_dim):
        derivative, used, attempts = _angle_derivative(family, q, p, coords, j, step)
        row.append(float(np.mean(derivative)))
        final_steps.append(used)
        evaluations += 2 * quadrature * attempts
    return HannayOneFormSample(
        x=tuple(coords.tolist()),
        mu=tuple(actions.tolist()),
        connection=[row],
        steps=final_steps,
        quadrature=quadrature,
        evaluations=evaluations,
    )


def _angle_derivative(
    family: ChartFamily, q: NDArray, p: NDArray, coords: NDArray, direction: int, step: float
) -> tuple[NDArray[np.float64], float, int]:
    """Central difference of Phi_x(q, p) in x_direction, halving the step while any jump exceeds pi/2"""
    delta = step
    for attempt in range(1, MAX_HALVINGS + 2):
        plus = coords.copy()
        minus = coords.copy()
        plus[direction] += delta
        minus[direction] -= delta
        if not (family.is_admissible(plus) and family.is_admissible(minus)):
            raise StencilError(
                f"stencil x +- {delta:g} e_{direction} around {tuple(coords.tolist())} leaves the domain"
            )
        _, phi_plus = family.aa_forward(q, p, plus)
        _, phi_minus = family.aa_forward(q, p, minus)
        jump = angle_difference(phi_plus, phi_minus)
        if np.max(np.abs(jump)) <= math.pi / 2:
            return jump / (2 * delta), delta, attempt
        logger.debug(f"angle jump {np.max(np.abs(jump)):.3f} at step {delta:g}; halving")
        delta /= 2
    raise StepTooLargeError(f"angle differences stay above pi/2 after {MAX_HALVINGS} halvings of step {step:g}")


class HannayHolonomy(BaseModel):
    theta: list[float] = Field(description="Hannay angles wrapped to (-pi, pi]")
    theta_raw: list[float] = Field(description="Unwrapped accumulated angles")
    winding: list[int] = Field(description="Full turns contained in theta_raw")
    segments: int
    quadrature: int
    evaluations: int = Field(default=0, description="Phase-space points passed through the chart")
    orientation: int = HANNAY_ORIENTATION


def _loop_vertices(family: HamiltonianFamily, loop: LoopBase, segments: int) -> NDArray[np.float64]:
    if segments < 8:
        raise InputError(f"a loop needs at least 8 segments, got {segments}")
    return loop.check_admissible(family, segments)


def hannay_holonomy(
    family: HamiltonianFamily,
    mu: ArrayLike,
    loop: LoopBase,
    segments: int = DEFAULT_SEGMENTS,
    quadrature: int = DEFAULT_QUADRATURE,
    step: float = DEFAULT_FD_STEP,
    workers: int = 1,
) -> HannayHolonomy:
    """theta = sigma closed-integral <dPhi/dx>.dx by the midpoint rule on the loop's chords"""
    _check_hannay_family(family)
    actions = as_actions(mu, family.n_dof)
    vertices = _loop_vertices(family, loop, segments)
    deltas = np.diff(vertices, axis=0)
    midpoints = 0.5 * (vertices[:-1] + vertices[1:])

    def contribution(k: int) -> tuple[NDArray[np.float64], int]:
        if not np.any(deltas[k]):
            return np.zeros(family.n_dof), 0
        form = hannay_one_form(family, actions, midpoints[k], quadrature, step)
        return form.matrix() @ deltas[k], form.evaluations

    parts = ordered_map(contribution, range(segments), workers)
    increments = np.stack([increment for increment, _ in parts])
    theta_raw = [HANNAY_ORIENTATION * math.fsum(increments[:, i].tolist()) for i in range(family.n_dof)]
    logger.debug(f"Hannay holonomy of {family.name} over {segments} segments: {theta_raw}")
    return HannayHolonomy(
        theta=[wrap_scalar(t) for t in theta_raw],
        theta_raw=theta_raw,
        winding=[winding_number(t) for t in theta_raw],
        segments=segments,
        quadrature=quadrature,
        evaluations=sum(count for _, count in parts),
    )


def _segment_shifts(
    family: HamiltonianFamily, actions: NDArray, x1: NDArray, x2: NDArray, quadrature: int
) -> tuple[NDArray[np.float64], int]:
    """Angle shifts Phi_x2(y) - Phi_x1(y) over the torus I = mu at the chord midpoint, shape (nodes, n),
    and the number of phase-space points passed through the chart

    Sampling at the midpoint makes the shifts of the reversed link the exact negatives.
    """
    if not family.is_admissible(x2):
        raise OverlapDomainError(f"overlap target {tuple(x2.tolist())} is outside the chart domain")
    middle = 0.5 * (x1 + x2)
    if not family.is_admissible(middle):
        raise OverlapDomainError(f"chord midpoint {tuple(middle.tolist())} is outside the chart domain")
    if isinstance(family, AbstractIntegrableFamily):
        nodes = torus_nodes(family.n_dof, quadrature)
        shift = np.zeros_like(nodes)
        evaluations = 0
        for j, dx in enumerate(x2 - x1):
            if dx != 0:
                shift += family.chart_deformation(actions, nodes, middle, j) * dx
                evaluations += len(nodes)
        return shift, evaluations

    phi = TWO_PI * np.arange(quadrature) / quadrature
    q, p = family.aa_inverse(np.full(quadrature, actions[0]), phi, middle)
    _, phi1 = family.aa_forward(q, p, x1)
    _, phi2 = family.aa_forward(q, p, x2)
    return angle_difference(phi2, phi1)[:, None], 3 * quadrature


def _as_mode(mode: Sequence[int], n_dof: int) -> NDArray[np.int64]:
    vector = np.asarray(mode, dtype=np.int64).reshape(-1)
    if vector.shape != (n_dof,):
        raise ShapeError(f"mode {tuple(mode)} has {vector.shape[0]} components, the torus has {n_dof}")
    return vector


def berry_overlap(
    mode: Sequence[int],
    family: HamiltonianFamily,
    mu: ArrayLike,
    x1: PointLike,
    x2: PointLike,
    quadrature: int = DEFAULT_QUADRATURE,
) -> complex:
    """<m; x1 | m; x2> = torus average of exp(i m.(Phi_x2 - Phi_x1)) at fixed phase-space points"""
    _check_hannay_family(family)
    m = _as_mode(mode, family.n_dof)
    actions = as_actions(mu, family.n_dof)
    start = family.check_admissible(x1)
    end = as_coords(x2, family.param_dim)
    if not np.any(m) or np.array_equal(start, end):
        return 1.0 + 0.0j
    shifts, _ = _segment_shifts(family, actions, start, end, quadrature)
    return complex(np.mean(np.exp(1j * (shifts @ m))))


def _overlap_table(
    modes: NDArray[np.int64],
    family: HamiltonianFamily,
    actions: NDArray,
    vertices: NDArray,
    quadrature: int,
    workers: int,
) -> tuple[NDArray[np.complex128], int]:
    """Overlaps of each consecutive vertex pair (rows) for each mode (columns), and the chart evaluations"""

    def row(k: int) -> tuple[NDArray[np.complex128], int]:
        x1, x2 = vertices[k], vertices[k + 1]
        if np.array_equal(x1, x2):
            return np.ones(len(modes), dtype=np.complex128), 0
        shifts, evaluations = _segment_shifts(family, actions, x1, x2, quadrature)
        values = np.mean(np.exp(1j * (shifts @ modes.T)), axis=0)
        values[~np.any(modes, axis=1)] = 1.0
        return values, evaluations

    rows = ordered_map(row, range(len(vertices) - 1), workers)
    return np.stack([values for values, _ in rows]), sum(count for _, count in rows)


def _chain_phase(overlaps: NDArray[np.complex128]) -> float:
    small = np.flatnonzero(np.abs(overlaps) < OVERLAP_FLOOR)
    if small.size:
        raise DegenerateChainError(
            f"overlap {abs(overlaps[small[0]]):.3e} on segment {int(small[0])}; refine the loop discretization"
        )
    return wrap_scalar(math.fsum(np.angle(overlaps).tolist()))


def berry_phase(
    mode: Sequence[int],
    family: HamiltonianFamily,
    mu: ArrayLike,
    loop: LoopBase,
    segments: int = DEFAULT_SEGMENTS,
    quadrature: int = DEFAULT_QUADRATURE,
    workers: int = 1,
) -> float:
    """Gauge-invariant discrete Berry phase arg prod <m; x_k | m; x_{k+1}> of the eigenvector |m>"""
    return berry_phases([mode], family, mu, loop, segments, quadrature, workers)[0]


def berry_phases(
    modes: Sequence[Sequence[int]],
    family: HamiltonianFamily,
    mu: ArrayLike,
    loop: LoopBase,
    segments: int = DEFAULT_SEGMENTS,
    quadrature: int = DEFAULT_QUADRATURE,
    workers: int = 1,
) -> list[float]:
    return berry_chain(modes, family, mu, loop, segments, quadrature, workers).phases


class BerryChain(BaseModel):
    modes: list[tuple[int, ...]]
    phases: list[float]
    segments: int
    quadrature: int
    evaluations: int = Field(description="Phase-space points passed through the chart")


def berry_chain(
    modes: Sequence[Sequence[int]],
    family: HamiltonianFamily,
    mu: ArrayLike,
    loop: LoopBase,
    segments: int = DEFAULT_SEGMENTS,
    quadrature: int = DEFAULT_QUADRATURE,
    workers: int = 1,
) -> BerryChain:
    """Berry phases of several modes from one shared table of link overlaps"""
    _check_hannay_family(family)
    mode_array = np.stack([_as_mode(m, family.n_dof) for m in modes])
    actions = as_actions(mu, family.n_dof)
    vertices = _loop_vertices(family, loop, segments)
    table, evaluations = _overlap_table(mode_array, family, actions, vertices, quadrature, workers)
    return BerryChain(
        modes=[tuple(int(k) for k in m) for m in mode_array],
        phases=[_chain_phase(table[:, i]) for i in range(len(mode_array))],
        segments=segments,
        quadrature=quadrature,
        evaluations=evaluations,
    )


class ModeRelation(BaseModel):
    mode: tuple[int, ...]
    berry_phase: float = Field(description="Discrete Berry phase of |m>")
    s_value: float = Field(description="m . theta_raw, the unwrapped prediction")
    predicted: float = Field(description="m . theta_raw wrapped to (-pi, pi]")
    residual: float = Field(description="|wrap(beta - m . theta_raw)|")


class ZeroCheck(BaseModel):
    """S(0) = 0 on both readings: the zero mode, and the constant loop"""

    zero_mode_phase: Optional[float] = Field(default=None, description="Berry phase of m = 0 on the loop")
    constant_loop_theta: list[float]
    constant_loop_phases: list[float]
    holds: bool


class HolonomyReport(BaseModel):
    family: str
    gauge: str
    mu: list[float]
    loop: dict
    segments: int
    quadrature: int
    fd_step: float
    orientation: int = HANNAY_ORIENTATION
    theta: list[float]
    theta_raw: list[float]
    winding: list[int]
    relations: list[ModeRelation]
    s_graph: list[tuple[float, float]] = Field(description="Pairs (m . theta_raw, beta_m)")
    max_residual: float
    tolerance: float
    relation_holds: bool
    zero_check: ZeroCheck
    nondegeneracy: Optional[NondegeneracyCheck] = None
    evaluations: int = Field(default=0, description="Phase-space points passed through the chart on the loop")


def relation_report(
    modes: Sequence[Sequence[int]],
    family: HamiltonianFamily,
    mu: ArrayLike,
    loop: LoopBase,
    segments: int = DEFAULT_SEGMENTS,
    quadrature: int = DEFAULT_QUADRATURE,
    step: float = DEFAULT_FD_STEP,
    tolerance: float = 1e-6,
    workers: int = 1,
) -> HolonomyReport:
    """Tabulate beta_m against m . theta for each mode and check S(0) = 0"""
    if not modes:
        raise InputError("relation report needs at least one mode")
    actions = as_actions(mu, family.n_dof)
    hannay = hannay_holonomy(family, actions, loop, segments, quadrature, step, workers)
    chain = berry_chain(modes, family, actions, loop, segments, quadrature, workers)
    phases = chain.phases
    theta_raw = np.asarray(hannay.theta_raw)

    relations = []
    for mode, beta in zip(modes, phases):
        m = _as_mode(mode, family.n_dof)
        s_value = math.fsum((m * theta_raw).tolist())
        relations.append(
            ModeRelation(
                mode=tuple(int(k) for k in m),
                berry_phase=beta,
                s_value=s_value,
                predicted=wrap_scalar(s_value),
                residual=abs(wrap_scalar(beta - s_value)),
            )
        )
    max_residual = max(r.residual for r in relations)

    base = ConstantLoop(point=tuple(loop.vertices(segments)[0].tolist()))
    constant = hannay_holonomy(family, actions, base, segments, quadrature, step)
    constant_phases = berry_phases(modes, family, actions, base, segments, quadrature)
    zero_phase = next((r.berry_phase for r in relations if not any(r.mode)), None)
    zero_holds = (
        all(t == 0.0 for t in constant.theta_raw)
        and all(abs(b) <= tolerance for b in constant_phases)
        and (zero_phase is None or abs(zero_phase) <= tolerance)
    )

    nondegeneracy = None
    if isinstance(family, IntegrableFamily):
        nondegeneracy = family.nondegeneracy(actions, base.point)
        if nondegeneracy.degenerate:
            logger.info(f"{family.name}: frequency map is degenerate at the base point; the relation is still reported")

    if max_residual > tolerance:
        logger.warning(f"relation residual {max_residual:.3e} exceeds tolerance {tolerance:.1e}")

    return HolonomyReport(
        family=family.name,
        gauge=getattr(family, "gauge", "intrinsic"),
        mu=actions.tolist(),
        loop=loop.model_dump(),
        segments=segments,
        quadrature=quadrature,
        fd_step=step,
        theta=hannay.theta,
        theta_raw=hannay.theta_raw,
        winding=hannay.winding,
        relations=relations,
        s_graph=[(r.s_value, r.berry_phase) for r in relations],
        max_residual=max_residual,
        tolerance=tolerance,
        relation_holds=max_residual <= tolerance,
        zero_check=ZeroCheck(
            zero_mode_phase=zero_phase,
            constant_loop_theta=constant.theta_raw,
            constant_loop_phases=constant_phases,
            holds=zero_holds,
        ),
        nondegeneracy=nondegeneracy,
        evaluations=hannay.evaluations + chain.evaluations,
    )


from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from typing import Annotated, ClassVar, Literal, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import ConfigurationError, DomainError, InputError, ResourceError, ShapeError
from .families import CanonicalFamily, GeneralizedOscillatorFamily, RegaugedFamily, as_coords
from .utils.angles import TWO_PI
from .utils.parallel import SUBSTREAM_SCHEME, ordered_map, substream

logger = logging.getLogger(__name__)

DEFAULT_MAX_NODES = 2**22
DRIFT_FLOOR = 1e-12


class PhasePoint(BaseModel):
    """A point y = (q, p) of phase space"""

    model_config = ConfigDict(frozen=True)

    q: tuple[float, ...]
    p: tuple[float, ...]

    @field_validator("q", "p")
    @classmethod
    def check_finite(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not all(math.isfinite(v) for v in value):
            raise ValueError(f"phase-space coordinates must be finite, got {value}")
        return value


class FlowSpec(BaseModel):
    """The time-t map of H(.; x) with a chosen integration scheme"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    SCHEMES: ClassVar[tuple[str, ...]] = ("exact-oscillator", "leapfrog")

    family: CanonicalFamily
    x: tuple[float, ...]
    dt: float = Field(default=1e-3, gt=0, description="Leapfrog step")
    scheme: str = Field(default="exact-oscillator", description="exact-oscillator or leapfrog")


def _oscillator_of(family: CanonicalFamily) -> Optional[GeneralizedOscillatorFamily]:
    if isinstance(family, RegaugedFamily):
        family = family.base
    return family if isinstance(family, GeneralizedOscillatorFamily) else None


def flow_arrays(q: ArrayLike, p: ArrayLike, spec: FlowSpec, t: float) -> tuple[NDArray, NDArray]:
    """Evolve arrays of 1-dof points by t under spec"""
    if not math.isfinite(t):
        raise DomainError(f"flow duration must be finite, got {t}")
    q = np.array(q, dtype=np.float64)
    p = np.array(p, dtype=np.float64)

    if spec.scheme == "exact-oscillator":
        oscillator = _oscillator_of(spec.family)
        if oscillator is None:
            raise ConfigurationError(f"scheme exact-oscillator needs the oscillator family, got {spec.family.name}")
        if t == 0:
            return q, p
        matrix = oscillator.flow_matrix(spec.x, t)
        return matrix[0, 0] * q + matrix[0, 1] * p, matrix[1, 0] * q + matrix[1, 1] * p

    if spec.scheme == "leapfrog":
        split = spec.family.split_gradients(spec.x)
        if split is None:
            raise ConfigurationError(f"leapfrog needs a separable Hamiltonian; {spec.family.name} at {spec.x} is not")
        potential_gradient, kinetic_gradient = split
        steps = math.ceil(abs(t) / spec.dt)
        if steps == 0:
            return q, p
        h = t / steps
        p = p - 0.5 * h * potential_gradient(q)
        for step in range(steps):
            q = q + h * kinetic_gradient(p)
            kick = h if step < steps - 1 else 0.5 * h
            p = p - kick * potential_gradient(q)
        return q, p

    raise ConfigurationError(f"unknown integration scheme '{spec.scheme}', expected one of {FlowSpec.SCHEMES}")


def flow(point: PhasePoint, spec: FlowSpec, t: float) -> PhasePoint:
    q, p = flow_arrays(point.q, point.p, spec, t)
    return PhasePoint(q=tuple(q.tolist()), p=tuple(p.tolist()))


def flow_jacobian_determinant(point: PhasePoint, spec: FlowSpec, t: float, step: float = 1e-6) -> float:
    """det of the time-t map's Jacobian by central differences"""
    q0, p0 = point.q[0], point.p[0]
    qs = np.array([q0 + step, q0 - step, q0, q0])
    ps = np.array([p0, p0, p0 + step, p0 - step])
    q, p = flow_arrays(qs, ps, spec, t)
    dq_dq, dp_dq = (q[0] - q[1]) / (2 * step), (p[0] - p[1]) / (2 * step)
    dq_dp, dp_dp = (q[2] - q[3]) / (2 * step), (p[2] - p[3]) / (2 * step)
    return float(dq_dq * dp_dp - dq_dp * dp_dq)


class DiskRegion(BaseModel):
    kind: Literal["disk"] = "disk"
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def sample(self, rng: np.random.Generator, count: int, hamiltonian=None) -> tuple[NDArray, NDArray]:
        if not self.radius > 0:
            raise DomainError(f"disk region is empty (radius = {self.radius})")
        r = self.radius * np.sqrt(rng.random(count))
        angle = TWO_PI * rng.random(count)
        return self.center[0] + r * np.cos(angle), self.center[1] + r * np.sin(angle)


class BoxRegion(BaseModel):
    kind: Literal["box"] = "box"
    lower: tuple[float, float] = (-1.0, -1.0)
    upper: tuple[float, float] = (1.0, 1.0)

    def sample(self, rng: np.random.Generator, count: int, hamiltonian=None) -> tuple[NDArray, NDArray]:
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        if np.any(upper <= lower):
            raise DomainError(f"box region is empty (lower = {self.lower}, upper = {self.upper})")
        points = lower + (upper - lower) * rng.random((count, 2))
        return points[:, 0], points[:, 1]


class SublevelRegion(BaseModel):
    """Uniform points of {H <= energy}, an invariant set, by rejection from a bounding box"""

    kind: Literal["sublevel"] = "sublevel"
    energy: float = 1.0
    half_width: float = Field(default=4.0, description="Half width of the bounding box used for rejection")

    MAX_ROUNDS: ClassVar[int] = 1000

    def sample(self, rng: np.random.Generator, count: int, hamiltonian=None) -> tuple[NDArray, NDArray]:
        if hamiltonian is None:
            raise ConfigurationError("sublevel region needs the flow's Hamiltonian")
        q_accepted: list[NDArray] = []
        p_accepted: list[NDArray] = []
        accepted = 0
        for _ in range(self.MAX_ROUNDS):
            candidates = self.half_width * (2 * rng.random((count, 2)) - 1)
            mask = hamiltonian(candidates[:, 0], candidates[:, 1]) <= self.energy
            q_accepted.append(candidates[mask, 0])
            p_accepted.append(candidates[mask, 1])
            accepted += int(mask.sum())
            if accepted >= count:
                return np.concatenate(q_accepted)[:count], np.concatenate(p_accepted)[:count]
        if accepted == 0:
            raise DomainError(f"sublevel region H <= {self.energy} is empty inside the sampling box")
        raise DomainError(f"sublevel region H <= {self.energy} too small to fill {count} samples")


Region = Annotated[Union[DiskRegion, BoxRegion, SublevelRegion], Field(discriminator="kind")]


def named_observables(names: Sequence[str], spec: FlowSpec) -> dict[str, Callable[[NDArray, NDArray], NDArray]]:
    """Built-in phase-space observables by name"""
    table: dict[str, Callable[[NDArray, NDArray], NDArray]] = {
        "q": lambda q, p: q,
        "p": lambda q, p: p,
        "radial": lambda q, p: q * q + p * p,
        "q_positive": lambda q, p: (q > 0).astype(np.float64),
        "energy": lambda q, p: spec.family.hamiltonian(q, p, spec.x),
    }
    unknown = [name for name in names if name not in table]
    if unknown:
        raise ConfigurationError(f"unknown observables {unknown}, expected some of {sorted(table)}")
    return {name: table[name] for name in names}


class DriftReport(BaseModel):
    observables: list[str] = Field(description="Observable names")
    pre_means: list[float] = Field(description="Sample means before the flow")
    post_means: list[float] = Field(description="Sample means after the flow")
    drifts: list[float] = Field(description="|mean of f(T y) - f(y)| per observable")
    standard_errors: list[float] = Field(description="Monte Carlo standard error of the paired drift")
    max_pointwise_change: list[float] = Field(description="max |f(T y) - f(y)| over samples")
    pass_flags: list[bool] = Field(description="drift within the sigma threshold")
    sigma_threshold: float
    samples: int
    duration: float
    seed: int
    chunk_size: int
    substreams: int
    stream_scheme: str = SUBSTREAM_SCHEME

    @property
    def passed(self) -> bool:
        return all(self.pass_flags)


def liouville_drift(
    spec: FlowSpec,
    t: float,
    samples: int,
    observables: Union[Sequence[str], dict[str, Callable]],
    region: Union[DiskRegion, BoxRegion, SublevelRegion],
    seed: int,
    chunk_size: int = 10_000,
    sigma_threshold: float = 3.0,
    workers: int = 1,
) -> DriftReport:
    """Monte Carlo check that uniform measure on the region is carried to a measure with equal means"""
    if samples < 1000:
        raise InputError(f"liouville_drift needs at least 1000 samples, got {samples}")
    if not isinstance(observables, dict):
        observables = named_observables(observables, spec)
    names = list(observables)
    functions = list(observables.values())

    def hamiltonian(q, p):
        return spec.family.hamiltonian(q, p, spec.x)

    chunks = math.ceil(samples / chunk_size)

    def run_chunk(index: int) -> NDArray[np.float64]:
        count = min(chunk_size, samples - index * chunk_size)
        q, p = region.sample(substream(seed, index), count, hamiltonian)
        q_t, p_t = flow_arrays(q, p, spec, t)
        sums = np.empty((len(functions), 5))
        for k, fn in enumerate(functions):
            before = np.asarray(fn(q, p), dtype=np.float64)
            after = np.asarray(fn(q_t, p_t), dtype=np.float64)
            change = after - before
            sums[k] = (before.sum(), after.sum(), change.sum(), (change * change).sum(), np.max(np.abs(change)))
        return sums

    per_chunk = np.stack(ordered_map(run_chunk, range(chunks), workers))
    totals = per_chunk[:, :, :4].sum(axis=0)
    max_change = per_chunk[:, :, 4].max(axis=0)

    pre_mean = totals[:, 0] / samples
    post_mean = totals[:, 1] / samples
    mean_change = totals[:, 2] / samples
    change_var = np.maximum(totals[:, 3] / samples - mean_change**2, 0.0) * samples / (samples - 1)
    standard_error = np.sqrt(change_var / samples)
    drift = np.abs(mean_change)
    # conserved observables change by rounding only
    pass_flags = [bool(d <= sigma_threshold * se or d <= DRIFT_FLOOR) for d, se in zip(drift, standard_error)]

    for name, d, se, ok in zip(names, drift, standard_error, pass_flags):
        if not ok:
            logger.warning(f"Liouville drift of {name} is {d:.3e}, beyond {sigma_threshold} x {se:.3e}")

    return DriftReport(
        observables=names,
        pre_means=pre_mean.tolist(),
        post_means=post_mean.tolist(),
        drifts=drift.tolist(),
        standard_errors=standard_error.tolist(),
        max_pointwise_change=max_change.tolist(),
        pass_flags=pass_flags,
        sigma_threshold=sigma_threshold,
        samples=samples,
        duration=t,
        seed=seed,
        chunk_size=chunk_size,
        substreams=chunks,
    )


class ResonanceVerdict(BaseModel):
    resonant: bool
    witness: Optional[tuple[int, ...]] = Field(default=None, description="First k with |k.Omega| < tol")
    k_max: int
    tol: float
    smallest_combination: float = Field(description="min |k.Omega| over the searched vectors")
    searched: int = Field(description="Number of vectors examined (one per +-k pair)")


def resonance_classify(
    omega: Sequence[float], k_max: int, tol: float, max_vectors: int = 10**7
) -> ResonanceVerdict:
    """Search 0 < |k|_inf <= k_max for |k.Omega| < tol

    Vectors are scanned shell by shell in |k|_inf, lexicographically within a shell, one
    representative per +-k pair (first nonzero entry positive).
    """
    omega = np.asarray(omega, dtype=np.float64).reshape(-1)
    if k_max < 1 or not tol > 0:
        raise InputError(f"need k_max >= 1 and tol > 0, got k_max={k_max}, tol={tol}")
    n = omega.shape[0]
    if n * math.log(2 * k_max + 1) > math.log(max_vectors):
        raise ResourceError(f"resonance search over (2*{k_max}+1)^{n} vectors exceeds the limit {max_vectors}")

    axis = np.arange(-k_max, k_max + 1)
    vectors = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    shell = np.max(np.abs(vectors), axis=1)
    first_nonzero = vectors[np.arange(len(vectors)), np.argmax(vectors != 0, axis=1)]
    keep = (shell > 0) & (first_nonzero > 0)
    vectors, shell = vectors[keep], shell[keep]
    vectors = vectors[np.argsort(shell, kind="stable")]

    combinations = np.abs(vectors @ omega)
    hits = np.flatnonzero(combinations < tol)
    smallest = float(combinations.min())
    if hits.size:
        witness = tuple(int(k) for k in vectors[hits[0]])
        return ResonanceVerdict(
            resonant=True, witness=witness, k_max=k_max, tol=tol, smallest_combination=smallest, searched=len(vectors)
        )
    return ResonanceVerdict(resonant=False, k_max=k_max, tol=tol, smallest_combination=smallest, searched=len(vectors))


def fibrewise_hamiltonian_field(
    f: Callable[[NDArray, NDArray, NDArray], float],
    point: PhasePoint,
    x: Sequence[float],
    step: float = 1e-6,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """X_f = (df/dp, -df/dq) at fixed x, the field with i_X(dq ^ dp) = d_M f"""
    q = np.asarray(point.q, dtype=np.float64)
    p = np.asarray(point.p, dtype=np.float64)
    coords = as_coords(x)
    df_dq, df_dp = _phase_gradient(f, q, p, coords, step)
    return df_dp, -df_dq


def _phase_gradient(f, q, p, x, step):
    df_dq = np.empty_like(q)
    df_dp = np.empty_like(p)
    for i in range(q.shape[0]):
        e = np.zeros_like(q)
        e[i] = step
        df_dq[i] = (f(q + e, p, x) - f(q - e, p, x)) / (2 * step)
        df_dp[i] = (f(q, p + e, x) - f(q, p - e, x)) / (2 * step)
    return df_dq, df_dp


def contraction_defect(
    f: Callable[[NDArray, NDArray, NDArray], float],
    point: PhasePoint,
    x: Sequence[float],
    field: tuple[NDArray, NDArray],
    step: float = 1e-4,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Components (dq, dp) of i_X(dq ^ dp) - d_M f, with d_M f from an independent stencil"""
    q = np.asarray(point.q, dtype=np.float64)
    p = np.asarray(point.p, dtype=np.float64)
    df_dq, df_dp = _phase_gradient(f, q, p, as_coords(x), step)
    field_q, field_p = field
    return -np.asarray(field_p) - df_dq, np.asarray(field_q) - df_dp


def torus_nodes(n: int, quadrature: int, max_nodes: int = DEFAULT_MAX_NODES) -> NDArray[np.float64]:
    """Tensor-product trapezoid nodes on [0, 2pi)^n, shape (Q^n, n)"""
    if n < 1:
        raise InputError(f"torus dimension must be positive, got {n}")
    if quadrature < 4:
        raise InputError(f"quadrature order must be at least 4, got {quadrature}")
    if n * math.log(quadrature) > math.log(max_nodes):
        raise ResourceError(f"{quadrature}^{n} torus nodes exceed the limit {max_nodes}")
    axis = TWO_PI * np.arange(quadrature) / quadrature
    return np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)


def torus_average(
    sampler: Callable[[NDArray[np.float64]], ArrayLike],
    n: int,
    quadrature: int,
    max_nodes: int = DEFAULT_MAX_NODES,
):
    """Average of a 2pi-periodic sampler over the n-torus with the uniform trapezoid rule

    The sampler receives all nodes at once as an array of shape (Q^n, n) and returns values with
    leading dimension Q^n (or a scalar for constant samplers).
    """
    nodes = torus_nodes(n, quadrature, max_nodes)
    values = np.asarray(sampler(nodes))
    if values.ndim == 0:
        return values[()]
    if values.shape[0] != nodes.shape[0]:
        raise ShapeError(f"sampler returned leading dimension {values.shape[0]}, expected {nodes.shape[0]}")
    return values.mean(axis=0)


def time_average(
    observable: Callable[[NDArray[np.float64]], ArrayLike],
    omega: Sequence[float],
    phi0: Sequence[float],
    duration: float,
    samples: int = 1_000_000,
) -> float:
    """Time average of an angle observable along Phi(t) = Phi0 + Omega t"""
    omega = np.asarray(omega, dtype=np.float64)
    phi0 = np.asarray(phi0, dtype=np.float64)
    if omega.shape != phi0.shape:
        raise ShapeError(f"Omega {omega.shape} and Phi0 {phi0.shape} differ in dimension")
    times = duration * np.arange(samples) / samples
    values = np.asarray(observable(phi0 + times[:, None] * omega), dtype=np.float64)
    return float(values.mean())

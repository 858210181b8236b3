from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Annotated, Literal, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DomainError, InputError
from .families import HamiltonianFamily
from .utils.angles import TWO_PI


class LoopBase(BaseModel, ABC):
    """A closed curve gamma: [0, 1] -> P with gamma(0) = gamma(1)"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)
    kind: str

    @property
    @abstractmethod
    def dimension(self) -> int:
        pass

    @abstractmethod
    def evaluate(self, s: ArrayLike) -> NDArray[np.float64]:
        """Points gamma(s), shape (len(s), m)"""

    @abstractmethod
    def tangent(self, s: ArrayLike) -> NDArray[np.float64]:
        """Derivatives gamma'(s), shape (len(s), m)"""

    @abstractmethod
    def reversed(self) -> LoopBase:
        pass

    def vertices(self, segments: int) -> NDArray[np.float64]:
        """K + 1 sampled points with the last equal to the first, bit for bit"""
        if segments < 1:
            raise InputError(f"a loop needs at least one segment, got {segments}")
        points = self.evaluate(np.arange(segments + 1) / segments)
        points[-1] = points[0]
        return points

    def check_admissible(self, family: HamiltonianFamily, segments: int) -> NDArray[np.float64]:
        if self.dimension != family.param_dim:
            raise DomainError(f"loop lives in R^{self.dimension} but {family.name} has {family.param_dim} parameters")
        points = self.vertices(segments)
        for point in points:
            family.check_admissible(point)
        return points


class ConstantLoop(LoopBase):
    kind: Literal["constant"] = "constant"
    point: tuple[float, ...] = Field(description="The base point x0")

    @property
    def dimension(self) -> int:
        return len(self.point)

    def evaluate(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        return np.tile(np.asarray(self.point, dtype=np.float64), (s.shape[0], 1))

    def tangent(self, s):
        return np.zeros_like(self.evaluate(s))

    def reversed(self) -> ConstantLoop:
        return self


class CircleLoop(LoopBase):
    """center + radius (cos u e_a + sin u e_b), u = 2pi turns (s + warp sin(2pi s) / 2pi) + phase"""

    kind: Literal["circle"] = "circle"
    center: tuple[float, ...]
    radius: float = Field(gt=0)
    plane: tuple[int, int] = Field(default=(0, 1), description="Coordinate plane (a, b)")
    turns: int = Field(default=1, ge=1, description="Number of traversals")
    phase: float = Field(default=0.0, description="Angle of the base point")
    warp: float = Field(default=0.0, gt=-1, lt=1, description="Non-uniform reparametrization strength")
    reverse: bool = False

    @model_validator(mode="after")
    def check_plane(self):
        a, b = self.plane
        if a == b or not (0 <= a < len(self.center) and 0 <= b < len(self.center)):
            raise ValueError(f"plane {self.plane} is not a coordinate plane of R^{len(self.center)}")
        return self

    @property
    def dimension(self) -> int:
        return len(self.center)

    def _angle(self, s: NDArray[np.float64]) -> NDArray[np.float64]:
        u = s + self.warp * np.sin(TWO_PI * s) / TWO_PI
        return TWO_PI * self.turns * u + self.phase

    def _forward(self, s: NDArray[np.float64]) -> NDArray[np.float64]:
        angle = self._angle(s)
        points = np.tile(np.asarray(self.center, dtype=np.float64), (s.shape[0], 1))
        a, b = self.plane
        points[:, a] += self.radius * np.cos(angle)
        points[:, b] += self.radius * np.sin(angle)
        return points

    def evaluate(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        return self._forward(1.0 - s if self.reverse else s)

    def tangent(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        forward_s = 1.0 - s if self.reverse else s
        angle = self._angle(forward_s)
        speed = TWO_PI * self.turns * (1 + self.warp * np.cos(TWO_PI * forward_s))
        if self.reverse:
            speed = -speed
        tangents = np.zeros((s.shape[0], self.dimension))
        a, b = self.plane
        tangents[:, a] = -self.radius * np.sin(angle) * speed
        tangents[:, b] = self.radius * np.cos(angle) * speed
        return tangents

    def vertices(self, segments: int) -> NDArray[np.float64]:
        if self.reverse:
            return self.model_copy(update={"reverse": False}).vertices(segments)[::-1].copy()
        return super().vertices(segments)

    def reversed(self) -> CircleLoop:
        return self.model_copy(update={"reverse": not self.reverse})

    def signed_area(self) -> float:
        return (-1 if self.reverse else 1) * self.turns * math.pi * self.radius**2


class PolylineLoop(LoopBase):
    """Closed polygon through the vertices, parametrized by arc length"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, populate_by_name=True)

    kind: Literal["polyline"] = "polyline"
    corners: list[tuple[float, ...]] = Field(
        min_length=2, alias="vertices", description="Polygon vertices; the loop closes itself"
    )
    reverse: bool = False

    @model_validator(mode="after")
    def check_corners(self):
        if len({len(c) for c in self.corners}) != 1:
            raise ValueError("all polyline vertices must have the same dimension")
        if not np.any(self._edge_lengths() > 0):
            raise ValueError("polyline vertices are all equal")
        return self

    @property
    def dimension(self) -> int:
        return len(self.corners[0])

    def _ordered(self) -> NDArray[np.float64]:
        corners = np.asarray(self.corners, dtype=np.float64)
        return corners[::-1] if self.reverse else corners

    def _edge_lengths(self) -> NDArray[np.float64]:
        corners = np.asarray(self.corners, dtype=np.float64)
        return np.linalg.norm(np.roll(corners, -1, axis=0) - corners, axis=1)

    def _locate(self, s: ArrayLike):
        """Edge index and arc-length offset of each parameter value"""
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        corners = self._ordered()
        edges = np.roll(corners, -1, axis=0) - corners
        lengths = np.linalg.norm(edges, axis=1)
        cumulative = np.concatenate(([0.0], np.cumsum(lengths)))
        position = np.mod(s, 1.0) * cumulative[-1]
        index = np.clip(np.searchsorted(cumulative, position, side="right") - 1, 0, len(corners) - 1)
        safe_lengths = np.where(lengths > 0, lengths, 1.0)
        return corners, edges, safe_lengths, cumulative, index, position - cumulative[index]

    def evaluate(self, s):
        corners, edges, lengths, _, index, offset = self._locate(s)
        return corners[index] + (offset / lengths[index])[:, None] * edges[index]

    def tangent(self, s):
        _, edges, lengths, cumulative, index, _ = self._locate(s)
        return edges[index] / lengths[index][:, None] * cumulative[-1]

    def vertices(self, segments: int) -> NDArray[np.float64]:
        """Corners are always vertices; segments are shared among edges by length"""
        corners = self._ordered()
        edges = np.roll(corners, -1, axis=0) - corners
        lengths = np.linalg.norm(edges, axis=1)
        live = np.flatnonzero(lengths > 0)
        if segments < len(live):
            raise InputError(f"{segments} segments cannot cover {len(live)} polyline edges")
        share = lengths[live] / lengths[live].sum() * segments
        counts = np.maximum(np.floor(share).astype(int), 1)
        remainder = share - np.floor(share)
        while counts.sum() < segments:
            pick = int(np.argmax(remainder))
            counts[pick] += 1
            remainder[pick] = -1.0
        while counts.sum() > segments:
            pick = int(np.argmax(np.where(counts > 1, counts, 0)))
            counts[pick] -= 1
        points = []
        for edge, count in zip(live, counts):
            fractions = np.arange(count) / count
            points.append(corners[edge] + fractions[:, None] * edges[edge])
        points.append(corners[live[0]][None, :])
        return np.concatenate(points)

    def reversed(self) -> PolylineLoop:
        return self.model_copy(update={"reverse": not self.reverse})


ParamLoop = Annotated[Union[ConstantLoop, CircleLoop, PolylineLoop], Field(discriminator="kind")]

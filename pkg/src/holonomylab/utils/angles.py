import numpy as np
from numpy.typing import ArrayLike, NDArray

TWO_PI = 2.0 * np.pi


def wrap_angle(angle: ArrayLike) -> NDArray[np.float64]:
    """Reduce angles to (-pi, pi]

    Odd away from the endpoint: wrap(-a) = -wrap(a) bit for bit, and values inside are unchanged.
    """
    angle = np.asarray(angle, dtype=np.float64)
    wrapped = angle - TWO_PI * np.round(angle / TWO_PI)
    wrapped = np.where(wrapped <= -np.pi, wrapped + TWO_PI, wrapped)
    return np.where(wrapped > np.pi, wrapped - TWO_PI, wrapped)


def wrap_scalar(angle: float) -> float:
    return float(wrap_angle(angle))


def to_unit_interval(angle: ArrayLike) -> NDArray[np.float64]:
    """Reduce angles to [0, 2pi)"""
    reduced = np.mod(np.asarray(angle, dtype=np.float64), TWO_PI)
    # mod can round up to exactly 2pi for tiny negative inputs
    return np.where(reduced >= TWO_PI, 0.0, reduced)


def angle_difference(later: ArrayLike, earlier: ArrayLike) -> NDArray[np.float64]:
    """Shortest signed difference later - earlier, in (-pi, pi]"""
    return wrap_angle(np.asarray(later, dtype=np.float64) - np.asarray(earlier, dtype=np.float64))


def winding_number(unwrapped: float) -> int:
    assert np.isfinite(unwrapped), "unwrapped angle must be finite"
    return int(round((unwrapped - wrap_scalar(unwrapped)) / TWO_PI))

"""Fourth-order finite differences on uniform grids.

Interior points use five-point central stencils; the two points nearest each
end use one-sided stencils of the same order (mirrored at the right end).
Periodic variants along chart axes use ``np.roll``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import MetricError, issue

FloatArray = NDArray[np.float64]

MIN_POINTS = 9

_D1_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D1_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0

_D2_EDGE0 = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0
_D2_EDGE1 = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0


def _check_axis(f: FloatArray, axis: int) -> int:
    n = f.shape[axis]
    if n < MIN_POINTS:
        raise MetricError([issue("grid", "too few points for fourth-order stencils",
                                 f">= {MIN_POINTS}", n)])
    return n


def _edge(f: FloatArray, coeffs: FloatArray, start: int, step: int) -> FloatArray:
    # weighted sum over f[start + step*k], k = 0..len(coeffs)-1 along axis 0
    idx = start + step * np.arange(len(coeffs))
    return np.tensordot(coeffs, f[idx], axes=(0, 0))


def d1(f: FloatArray, h: float, axis: int = 0) -> FloatArray:
    """First derivative along ``axis`` with spacing ``h``."""
    f = np.moveaxis(np.asarray(f, dtype=np.float64), axis, 0)
    n = _check_axis(f, 0)
    out = np.empty_like(f)
    out[2:n - 2] = (f[0:n - 4] - 8.0 * f[1:n - 3] + 8.0 * f[3:n - 1] - f[4:n]) / 12.0
    out[0] = _edge(f, _D1_EDGE0, 0, 1)
    out[1] = _edge(f, _D1_EDGE1, 0, 1)
    # mirrored stencils change sign for odd derivatives
    out[n - 1] = -_edge(f, _D1_EDGE0, n - 1, -1)
    out[n - 2] = -_edge(f, _D1_EDGE1, n - 1, -1)
    return np.moveaxis(out / h, 0, axis)


def d2(f: FloatArray, h: float, axis: int = 0) -> FloatArray:
    """Second derivative along ``axis`` with spacing ``h``."""
    f = np.moveaxis(np.asarray(f, dtype=np.float64), axis, 0)
    n = _check_axis(f, 0)
    out = np.empty_like(f)
    out[2:n - 2] = (-f[0:n - 4] + 16.0 * f[1:n - 3] - 30.0 * f[2:n - 2]
                    + 16.0 * f[3:n - 1] - f[4:n]) / 12.0
    out[0] = _edge(f, _D2_EDGE0, 0, 1)
    out[1] = _edge(f, _D2_EDGE1, 0, 1)
    out[n - 1] = _edge(f, _D2_EDGE0, n - 1, -1)
    out[n - 2] = _edge(f, _D2_EDGE1, n - 1, -1)
    return np.moveaxis(out / (h * h), 0, axis)


def d1_periodic(f: FloatArray, h: float, axis: int) -> FloatArray:
    return (np.roll(f, 2, axis) - 8.0 * np.roll(f, 1, axis)
            + 8.0 * np.roll(f, -1, axis) - np.roll(f, -2, axis)) / (12.0 * h)


def d2_periodic(f: FloatArray, h: float, axis: int) -> FloatArray:
    return (-np.roll(f, 2, axis) + 16.0 * np.roll(f, 1, axis) - 30.0 * f
            + 16.0 * np.roll(f, -1, axis) - np.roll(f, -2, axis)) / (12.0 * h * h)


# --- ghost-padded central differences ---
#
# ``f`` carries ``ghost`` extra points on each side; results cover the
# unpadded points. Stencils are sums and differences of mirrored pairs, so an
# exactly even or odd input gives an exactly even or odd result.


def _shifted(f: FloatArray, ghost: int) -> Callable[[int], FloatArray]:
    n = f.size - 2 * ghost
    if n < 1 or ghost < 3:
        raise MetricError([issue("ghost", "padded stencils need three ghost points", ">= 3", ghost)])
    return lambda k: f[ghost + k:ghost + k + n]


def padded_d1(f: FloatArray, h: float, ghost: int = 3) -> FloatArray:
    at = _shifted(f, ghost)
    return (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)


def padded_d2(f: FloatArray, h: float, ghost: int = 3) -> FloatArray:
    at = _shifted(f, ghost)
    return (16.0 * (at(1) + at(-1)) - (at(2) + at(-2)) - 30.0 * at(0)) / (12.0 * h * h)


def padded_d3(f: FloatArray, h: float, ghost: int = 3) -> FloatArray:
    at = _shifted(f, ghost)
    return (8.0 * (at(2) - at(-2)) - 13.0 * (at(1) - at(-1)) - (at(3) - at(-3))) / (8.0 * h ** 3)


def padded_d2_sixth(f: FloatArray, h: float, ghost: int = 3) -> FloatArray:
    """Sixth-order second derivative; its error keeps the sign of curvature next to a flat region."""
    at = _shifted(f, ghost)
    return (2.0 * (at(3) + at(-3)) - 27.0 * (at(2) + at(-2)) + 270.0 * (at(1) + at(-1))
            - 490.0 * at(0)) / (180.0 * h * h)


def padded_d1_sixth(f: FloatArray, h: float, ghost: int = 3) -> FloatArray:
    """Sixth-order first derivative; keeps ``(1 - w_s²)/w²`` accurate next to a pole."""
    at = _shifted(f, ghost)
    return ((at(3) - at(-3)) - 9.0 * (at(2) - at(-2)) + 45.0 * (at(1) - at(-1))) / (60.0 * h)

"""
Interpolation kernels used by every ODgrid engine.

1D monotone cubics (Stineman, Akima, Steffen) share one piecewise cubic Hermite
evaluator; the methods only differ in how the knot slopes are estimated. 2D uses
either a true bicubic Hermite patch (finite difference node derivatives) or Keys
cubic convolution; the asymmetric hybrid grids use a monotone cubic along the
equity axis blended linearly along the second axis; 3D is trilinear.

Outside the knot range every kernel extrapolates linearly from the nearest boundary
using the boundary derivative.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import Akima1DInterpolator, RegularGridInterpolator

from core.errors import OrderingError, ParameterError, SizeError, SpacingError

logger = logging.getLogger(__name__)

MIN_KNOTS = 6
MIN_CUBIC_NODES_2D = 4
UNIFORM_TOL = 1e-12
KEYS_A = -0.5


class InterpMethod(enum.Enum):
    STINEMAN = "stineman"
    AKIMA = "akima"
    STEFFEN = "steffen"
    BICUBIC = "bicubic"
    KEYS = "keys"
    CUBIC_LINEAR = "cubic_linear"
    TRILINEAR = "trilinear"

    @property
    def is_1d(self) -> bool:
        return self in (InterpMethod.STINEMAN, InterpMethod.AKIMA, InterpMethod.STEFFEN)

    @classmethod
    def parse(cls, value) -> 'InterpMethod':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ParameterError(f"unknown interpolation method '{value}' (expected one of {names})")


def check_axis(xs, name: str = "xs", min_len: int = 2) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.size < min_len:
        raise SizeError(f"{name} needs at least {min_len} points, got {xs.size}")
    if np.any(np.diff(xs) <= 0.0):
        raise OrderingError(f"{name} must be strictly increasing")
    return xs


def uniform_spacing(xs: np.ndarray) -> Optional[float]:
    """Return the common step of an equally spaced axis, or None"""
    if xs.size < 2:
        return None
    h = (xs[-1] - xs[0]) / (xs.size - 1)
    if np.all(np.abs(np.diff(xs) - h) <= UNIFORM_TOL * abs(h) + 4.0 * np.finfo(float).eps * np.abs(xs[1:])):
        return float(h)
    return None


def locate(xs: np.ndarray, q, spacing: Optional[float] = None) -> np.ndarray:
    """
    Index i of the interval [xs[i], xs[i+1]) holding each query, clipped to [0, n-2].

    With a uniform axis the index is a direct lookup (q - xs[0]) / spacing followed by a
    one-node fix-up against rounding; otherwise a binary search.
    """
    q = np.asarray(q, dtype=float)
    last = xs.size - 2
    if spacing:
        raw = np.floor((q - xs[0]) / spacing)
        idx = np.clip(np.nan_to_num(raw, nan=0.0), 0, last).astype(np.intp)
        idx = idx - ((q < xs[idx]) & (idx > 0))
        idx = idx + ((q >= xs[idx + 1]) & (idx < last))
        return idx
    idx = np.searchsorted(xs, q, side="right") - 1
    return np.clip(idx, 0, last)


# ---------------------------------------------------------------------------
# 1D slopes
# ---------------------------------------------------------------------------

def _column_shape(xs: np.ndarray, ys: np.ndarray) -> Tuple[int, ...]:
    return (xs.size - 1,) + (1,) * (ys.ndim - 1)


def _stineman_slopes(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    dx = np.diff(xs).reshape(_column_shape(xs, ys))
    dy = np.diff(ys, axis=0)
    secant = dy / dx

    # geometric weights are not unit free: rescale y to the x range first
    y_range = ys.max(axis=0) - ys.min(axis=0)
    scale = np.where(y_range > 0.0, (xs[-1] - xs[0]) / np.where(y_range > 0.0, y_range, 1.0), 1.0)
    dys = dy * scale
    ms = secant * scale

    m0, m1 = ms[:-1], ms[1:]
    len0 = dx[:-1] ** 2 + dys[:-1] ** 2
    len1 = dx[1:] ** 2 + dys[1:] ** 2
    interior = np.where(m0 * m1 > 0.0, (m0 * len1 + m1 * len0) / (len0 + len1), 0.0) / scale

    slopes = np.empty_like(ys, dtype=float)
    slopes[1:-1] = interior
    first = 2.0 * secant[0] - interior[0]
    last = 2.0 * secant[-1] - interior[-1]
    slopes[0] = np.where(first * secant[0] > 0.0, first, 0.0)
    slopes[-1] = np.where(last * secant[-1] > 0.0, last, 0.0)
    return slopes


def _steffen_slopes(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h = np.diff(xs).reshape(_column_shape(xs, ys))
    s = np.diff(ys, axis=0) / h
    s0, s1 = s[:-1], s[1:]
    h0, h1 = h[:-1], h[1:]
    p = (s0 * h1 + s1 * h0) / (h0 + h1)

    slopes = np.empty_like(ys, dtype=float)
    slopes[1:-1] = (np.sign(s0) + np.sign(s1)) * np.minimum(np.minimum(np.abs(s0), np.abs(s1)), 0.5 * np.abs(p))

    def _end(s_a, s_b, h_a, h_b):
        p_end = s_a * (1.0 + h_a / (h_a + h_b)) - s_b * h_a / (h_a + h_b)
        return np.where(p_end * s_a <= 0.0, 0.0,
                        np.where(np.abs(p_end) > 2.0 * np.abs(s_a), 2.0 * s_a, p_end))

    slopes[0] = _end(s[0], s[1], h[0], h[1])
    slopes[-1] = _end(s[-1], s[-2], h[-1], h[-2])
    return slopes


def _akima_slopes(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    spline = Akima1DInterpolator(xs, ys, axis=0)
    return np.asarray(spline.derivative()(xs), dtype=float)


_SLOPE_SCHEMES = {
    InterpMethod.STINEMAN: _stineman_slopes,
    InterpMethod.AKIMA: _akima_slopes,
    InterpMethod.STEFFEN: _steffen_slopes,
}


def slopes_1d(xs, ys, method: InterpMethod = InterpMethod.STINEMAN) -> np.ndarray:
    """
    Knot slopes for a monotone cubic, computed once per sheet.

    Args:
        xs: strictly increasing abscissae (at least 6)
        ys: ordinates, shape (n,) or (n, m) for m independent columns sharing xs
        method: one of the 1D methods
    """
    method = InterpMethod.parse(method)
    if not method.is_1d:
        raise ParameterError(f"{method.value} is not a 1D interpolation method")
    xs = check_axis(xs, min_len=MIN_KNOTS)
    ys = np.asarray(ys, dtype=float)
    if ys.shape[0] != xs.size:
        raise SizeError(f"ys has {ys.shape[0]} rows for {xs.size} knots")
    return _SLOPE_SCHEMES[method](xs, ys)


# ---------------------------------------------------------------------------
# Hermite evaluation
# ---------------------------------------------------------------------------

def _hermite_weights(t: np.ndarray, h: np.ndarray):
    t2 = t * t
    t3 = t2 * t
    return (2.0 * t3 - 3.0 * t2 + 1.0,
            -2.0 * t3 + 3.0 * t2,
            (t3 - 2.0 * t2 + t) * h,
            (t3 - t2) * h)


def _hermite_weight_derivatives(t: np.ndarray, h: np.ndarray):
    t2 = t * t
    return ((6.0 * t2 - 6.0 * t) / h,
            (-6.0 * t2 + 6.0 * t) / h,
            3.0 * t2 - 4.0 * t + 1.0,
            3.0 * t2 - 2.0 * t)


def _hermite_eval(xs, ys, slopes, q, spacing=None, cols=None) -> np.ndarray:
    """Piecewise cubic Hermite on ys[:, cols] (or ys when 1D) with linear extrapolation"""
    idx = locate(xs, q, spacing)
    x0 = xs[idx]
    h = xs[idx + 1] - x0
    t = (q - x0) / h
    if cols is None:
        y0, y1, m0, m1 = ys[idx], ys[idx + 1], slopes[idx], slopes[idx + 1]
        y_lo, y_hi, m_lo, m_hi = ys[0], ys[-1], slopes[0], slopes[-1]
    else:
        y0, y1 = ys[idx, cols], ys[idx + 1, cols]
        m0, m1 = slopes[idx, cols], slopes[idx + 1, cols]
        y_lo, y_hi, m_lo, m_hi = ys[0, cols], ys[-1, cols], slopes[0, cols], slopes[-1, cols]
    a0, a1, b0, b1 = _hermite_weights(t, h)
    value = a0 * y0 + a1 * y1 + b0 * m0 + b1 * m1
    value = np.where(q < xs[0], y_lo + m_lo * (q - xs[0]), value)
    return np.where(q > xs[-1], y_hi + m_hi * (q - xs[-1]), value)


@dataclass
class Knots1D:
    xs: np.ndarray
    ys: np.ndarray
    slopes: Optional[np.ndarray] = None
    uniform_spacing: Optional[float] = None

    def __post_init__(self):
        self.xs = check_axis(self.xs, min_len=MIN_KNOTS)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.ys.shape != self.xs.shape:
            raise SizeError(f"ys has shape {self.ys.shape}, expected {self.xs.shape}")
        if self.slopes is not None:
            self.slopes = np.asarray(self.slopes, dtype=float)
            if self.slopes.shape != self.xs.shape:
                raise SizeError("slopes must match xs")
        if self.uniform_spacing is not None:
            h = float(self.uniform_spacing)
            if h <= 0.0 or np.any(np.abs(np.diff(self.xs) - h) > UNIFORM_TOL * abs(h) + 4.0 * np.finfo(float).eps * np.abs(self.xs[1:])):
                raise SpacingError(f"xs are not equally spaced by {h}")

    @classmethod
    def build(cls, xs, ys, method: InterpMethod = InterpMethod.STINEMAN) -> 'Knots1D':
        """Knots with slopes computed and the uniform step detected"""
        xs = check_axis(xs, min_len=MIN_KNOTS)
        return cls(xs, ys, slopes_1d(xs, ys, method), uniform_spacing(xs))


def eval_1d(knots: Knots1D, x):
    if knots.slopes is None:
        raise ParameterError("knot slopes must be computed before evaluation")
    q = np.asarray(x, dtype=float)
    value = _hermite_eval(knots.xs, knots.ys, knots.slopes, q, knots.uniform_spacing)
    return float(value) if value.ndim == 0 else value


# ---------------------------------------------------------------------------
# 2D / 3D lattices
# ---------------------------------------------------------------------------

@dataclass
class Lattice2D:
    x1s: np.ndarray
    x2s: np.ndarray
    values: np.ndarray
    d1: Optional[np.ndarray] = field(default=None, repr=False)
    d2: Optional[np.ndarray] = field(default=None, repr=False)
    d12: Optional[np.ndarray] = field(default=None, repr=False)
    row_slopes: Optional[np.ndarray] = field(default=None, repr=False)
    padded: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.x1s = check_axis(self.x1s, "x1s", min_len=1 if np.size(self.x1s) == 1 else 2)
        self.x2s = check_axis(self.x2s, "x2s", min_len=1 if np.size(self.x2s) == 1 else 2)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.x1s.size, self.x2s.size):
            raise SizeError(f"values shape {self.values.shape} does not match axes "
                            f"({self.x1s.size}, {self.x2s.size})")
        self.spacing1 = uniform_spacing(self.x1s)
        self.spacing2 = uniform_spacing(self.x2s)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def with_derivatives(self) -> 'Lattice2D':
        """Central differences inside, one-sided on the edges, once per sheet"""
        self._require_size(MIN_CUBIC_NODES_2D, "bicubic")
        self.d1 = np.gradient(self.values, self.x1s, axis=0, edge_order=1)
        self.d2 = np.gradient(self.values, self.x2s, axis=1, edge_order=1)
        self.d12 = np.gradient(self.d1, self.x2s, axis=1, edge_order=1)
        return self

    def with_row_slopes(self, method: InterpMethod = InterpMethod.STINEMAN) -> 'Lattice2D':
        self.row_slopes = slopes_1d(self.x1s, self.values, method)
        return self

    def with_keys_padding(self) -> 'Lattice2D':
        self._require_size(MIN_CUBIC_NODES_2D, "Keys")
        if self.spacing1 is None or self.spacing2 is None:
            raise SpacingError("Keys convolution needs equally spaced axes")
        self.padded = _keys_pad(_keys_pad(self.values, axis=0), axis=1)
        return self

    def _require_size(self, minimum: int, what: str) -> None:
        if min(self.shape) < minimum:
            raise SizeError(f"{what} interpolation needs at least {minimum}x{minimum} nodes, got {self.shape}")


@dataclass
class Lattice3D:
    x1s: np.ndarray
    x2s: np.ndarray
    x3s: np.ndarray
    values: np.ndarray
    _interpolator: Optional[RegularGridInterpolator] = field(default=None, repr=False)

    def __post_init__(self):
        self.x1s = check_axis(self.x1s, "x1s")
        self.x2s = check_axis(self.x2s, "x2s")
        self.x3s = check_axis(self.x3s, "x3s")
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.x1s.size, self.x2s.size, self.x3s.size)
        if self.values.shape != expected:
            raise SizeError(f"values shape {self.values.shape} does not match axes {expected}")

    @property
    def interpolator(self) -> RegularGridInterpolator:
        if self._interpolator is None:
            # fill_value=None extrapolates linearly from the boundary cell
            self._interpolator = RegularGridInterpolator(
                (self.x1s, self.x2s, self.x3s), self.values,
                method="linear", bounds_error=False, fill_value=None)
        return self._interpolator


def _axis_weights(axis: np.ndarray, spacing, q: np.ndarray):
    clamped = np.clip(q, axis[0], axis[-1])
    idx = locate(axis, clamped, spacing)
    h = axis[idx + 1] - axis[idx]
    t = (clamped - axis[idx]) / h
    return clamped, idx, h, t


def eval_bicubic(lattice: Lattice2D, x1, x2):
    if lattice.d1 is None:
        lattice.with_derivatives()
    q1, q2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    c1, i, h1, t = _axis_weights(lattice.x1s, lattice.spacing1, q1)
    c2, j, h2, u = _axis_weights(lattice.x2s, lattice.spacing2, q2)

    av = _hermite_weights(t, h1)
    bv = _hermite_weights(u, h2)
    ad = _hermite_weight_derivatives(t, h1)
    bd = _hermite_weight_derivatives(u, h2)

    f, fx, fy, fxy = lattice.values, lattice.d1, lattice.d2, lattice.d12
    value = np.zeros_like(t)
    grad1 = np.zeros_like(t)
    grad2 = np.zeros_like(t)
    for a in (0, 1):
        for b in (0, 1):
            ii, jj = i + a, j + b
            f_ab, fx_ab, fy_ab, fxy_ab = f[ii, jj], fx[ii, jj], fy[ii, jj], fxy[ii, jj]
            value += av[a] * bv[b] * f_ab + av[2 + a] * bv[b] * fx_ab \
                + av[a] * bv[2 + b] * fy_ab + av[2 + a] * bv[2 + b] * fxy_ab
            grad1 += ad[a] * bv[b] * f_ab + ad[2 + a] * bv[b] * fx_ab \
                + ad[a] * bv[2 + b] * fy_ab + ad[2 + a] * bv[2 + b] * fxy_ab
            grad2 += av[a] * bd[b] * f_ab + av[2 + a] * bd[b] * fx_ab \
                + av[a] * bd[2 + b] * fy_ab + av[2 + a] * bd[2 + b] * fxy_ab
    value = value + grad1 * (q1 - c1) + grad2 * (q2 - c2)
    return float(value) if value.ndim == 0 else value


def keys_kernel(s, a: float = KEYS_A) -> np.ndarray:
    s = np.abs(s)
    inner = ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0
    outer = ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a
    return np.where(s <= 1.0, inner, np.where(s < 2.0, outer, 0.0))


def keys_kernel_derivative(s, a: float = KEYS_A) -> np.ndarray:
    sign = np.sign(s)
    s = np.abs(s)
    inner = (3.0 * (a + 2.0) * s - 2.0 * (a + 3.0)) * s
    outer = (3.0 * a * s - 10.0 * a) * s + 8.0 * a
    return sign * np.where(s <= 1.0, inner, np.where(s < 2.0, outer, 0.0))


def _keys_pad(values: np.ndarray, axis: int) -> np.ndarray:
    """One ghost node each side, Keys' cubic boundary condition"""
    v = np.moveaxis(values, axis, 0)
    lo = 3.0 * v[0] - 3.0 * v[1] + v[2]
    hi = 3.0 * v[-1] - 3.0 * v[-2] + v[-3]
    padded = np.concatenate([lo[None], v, hi[None]], axis=0)
    return np.moveaxis(padded, 0, axis)


def eval_keys2d(lattice: Lattice2D, x1, x2, clamp_floor: Optional[float] = None):
    if lattice.padded is None:
        lattice.with_keys_padding()
    q1, q2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    c1, i, h1, t = _axis_weights(lattice.x1s, lattice.spacing1, q1)
    c2, j, h2, u = _axis_weights(lattice.x2s, lattice.spacing2, q2)

    offsets = (1.0, 0.0, -1.0, -2.0)
    wx = [keys_kernel(t + o) for o in offsets]
    wy = [keys_kernel(u + o) for o in offsets]
    dwx = [keys_kernel_derivative(t + o) / h1 for o in offsets]
    dwy = [keys_kernel_derivative(u + o) / h2 for o in offsets]

    grid = lattice.padded
    value = np.zeros_like(t)
    grad1 = np.zeros_like(t)
    grad2 = np.zeros_like(t)
    # padded index i+k is node i-1+k
    for k in range(4):
        for m in range(4):
            f = grid[i + k, j + m]
            value += wx[k] * wy[m] * f
            grad1 += dwx[k] * wy[m] * f
            grad2 += wx[k] * dwy[m] * f
    value = value + grad1 * (q1 - c1) + grad2 * (q2 - c2)
    if clamp_floor is not None:
        value = np.maximum(value, clamp_floor)
    return float(value) if value.ndim == 0 else value


def eval_cubic_linear(lattice: Lattice2D, x1, x2, row_slopes: Optional[np.ndarray] = None,
                      method: InterpMethod = InterpMethod.STINEMAN):
    """
    Monotone cubic along x1 on the two x2-rows bracketing the query, blended linearly
    in x2 (linear extrapolation beyond the outer rows).
    """
    if row_slopes is None:
        if lattice.row_slopes is None:
            lattice.with_row_slopes(method)
        row_slopes = lattice.row_slopes
    q1, q2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    x2s = lattice.x2s
    if x2s.size == 1:
        value = _hermite_eval(lattice.x1s, lattice.values, row_slopes, q1, lattice.spacing1,
                              cols=np.zeros(q1.shape, dtype=np.intp))
        return float(value) if value.ndim == 0 else value
    j = locate(x2s, q2, lattice.spacing2)
    w = (q2 - x2s[j]) / (x2s[j + 1] - x2s[j])
    lower = _hermite_eval(lattice.x1s, lattice.values, row_slopes, q1, lattice.spacing1, cols=j)
    upper = _hermite_eval(lattice.x1s, lattice.values, row_slopes, q1, lattice.spacing1, cols=j + 1)
    value = (1.0 - w) * lower + w * upper
    return float(value) if value.ndim == 0 else value


def eval_trilinear(lattice: Lattice3D, x1, x2, x3):
    q1, q2, q3 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float),
                                     np.asarray(x3, dtype=float))
    points = np.stack([q1.ravel(), q2.ravel(), q3.ravel()], axis=-1)
    value = lattice.interpolator(points).reshape(q1.shape)
    return float(value) if value.ndim == 0 else value

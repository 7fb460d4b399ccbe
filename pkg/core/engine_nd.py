"""
Multi-asset ODgrid backward pricers.

Two assets use the five-point stencil (centre, two co-moves, two counter-moves) with
bicubic or Keys interpolation; three assets use the nine-point cube-plus-centre
stencil built on a Cholesky factor, with trilinear interpolation.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Sequence, Union

import numpy as np

from core.engine1d import (BackwardResult, Diffusion1D, GridGeometry1D, build_axis,
                           check_grid_finess, check_steps, skew_bounds)
from core.errors import DegenerateCorrelationError, NumericError, ParameterError
from core.interp import (InterpMethod, Lattice2D, Lattice3D, eval_bicubic, eval_keys2d,
                         eval_trilinear)
from core.market import SSVISurface, YieldCurve, forward_price, implied_vol
from core.payoffs import MultiPayoff

logger = logging.getLogger(__name__)

SPACING_FACTOR_2D = 1.25
SPACING_FACTOR_3D = 9.0 / 8.0
MIN_INTERVALS_2D = 6
MIN_INTERVALS_3D = 2
PSD_TOL = 1e-12
DEGENERATE_TOL = 1e-5

CorrelationInput = Union[float, Sequence[float], np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True)
class Cholesky3:
    a: float
    b: float
    c: float
    d: float
    e: float

    def matrix(self) -> np.ndarray:
        return np.array([[1.0, 0.0, 0.0],
                         [self.a, self.b, 0.0],
                         [self.c, self.d, self.e]])


def cholesky3(r12: float, r13: float, r23: float) -> Cholesky3:
    radicand_b = 1.0 - r12 * r12
    if radicand_b < DEGENERATE_TOL:
        raise DegenerateCorrelationError(f"r12={r12} leaves no independent second driver")
    b = np.sqrt(radicand_b)
    d = (r23 - r13 * r12) / b
    radicand_e = 1.0 - r13 * r13 - d * d
    if radicand_e < -PSD_TOL:
        raise ParameterError(f"correlations ({r12}, {r13}, {r23}) are not positive semi-definite")
    return Cholesky3(float(r12), float(b), float(r13), float(d), float(np.sqrt(max(radicand_e, 0.0))))


def stencil_2d(rho: float) -> np.ndarray:
    """Unit displacements (times sigma_i*sqrt(dt)) of the five equiprobable points"""
    co = np.sqrt(SPACING_FACTOR_2D * max(1.0 + rho, 0.0))
    counter = np.sqrt(SPACING_FACTOR_2D * max(1.0 - rho, 0.0))
    return np.array([[0.0, 0.0],
                     [co, co],
                     [counter, -counter],
                     [-counter, counter],
                     [-co, -co]])


def stencil_3d(chol: Cholesky3) -> np.ndarray:
    """Unit displacements (times sigma_i*sqrt(dt)) of the nine equiprobable points"""
    a, b, c, d, e = chol.a, chol.b, chol.c, chol.d, chol.e
    half = np.array([[1.0, a + b, c + d + e],
                     [1.0, a + b, c + d - e],
                     [1.0, a - b, c - d + e],
                     [1.0, a - b, c - d - e]])
    return np.sqrt(SPACING_FACTOR_3D) * np.vstack([np.zeros((1, 3)), half, -half[::-1]])


def correlation_function(correlation: CorrelationInput, dims: int) -> Callable[[float], np.ndarray]:
    """
    Normalize the accepted correlation inputs into t -> matrix.

    2D takes rho12; 3D takes (r12, r13, r23); either also takes a full matrix or a
    callable of t returning one of those.
    """
    def to_matrix(value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        if value.shape == (dims, dims):
            return value
        if dims == 2 and value.size == 1:
            r = float(value)
            return np.array([[1.0, r], [r, 1.0]])
        if dims == 3 and value.shape == (3,):
            r12, r13, r23 = value
            return np.array([[1.0, r12, r13], [r12, 1.0, r23], [r13, r23, 1.0]])
        raise ParameterError(f"cannot read a {dims}-asset correlation from {value}")

    if callable(correlation):
        return lambda t: validate_correlation(to_matrix(correlation(t)))
    matrix = validate_correlation(to_matrix(correlation))
    return lambda t: matrix


def validate_correlation(matrix: np.ndarray) -> np.ndarray:
    if not np.allclose(matrix, matrix.T, atol=1e-14):
        raise ParameterError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(matrix), 1.0, atol=1e-14):
        raise ParameterError("correlation matrix must have a unit diagonal")
    if np.any(np.abs(matrix) > 1.0 + 1e-14):
        raise ParameterError("correlations must lie in [-1, 1]")
    if np.linalg.eigvalsh(matrix).min() < -PSD_TOL:
        raise ParameterError("correlation matrix is not positive semi-definite")
    return matrix


@dataclass
class GridGeometryND:
    axes: List[GridGeometry1D]
    correlation: Callable[[float], np.ndarray]

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def steps(self) -> int:
        return self.axes[0].steps

    @property
    def dt(self) -> float:
        return self.axes[0].dt

    @property
    def maturity(self) -> float:
        return self.axes[0].maturity

    def time(self, step: int) -> float:
        return self.axes[0].time(step)

    def states(self, step: int) -> List[np.ndarray]:
        return [axis.states(step) for axis in self.axes]

    def spots(self, step: int) -> List[np.ndarray]:
        """Per-asset spot vectors shaped to broadcast over the lattice"""
        out = []
        for i, axis in enumerate(self.axes):
            shape = [1] * self.dims
            shape[i] = -1
            out.append(axis.spots(step).reshape(shape))
        return out

    def stats(self) -> dict:
        counts = [axis.node_count(self.steps) for axis in self.axes]
        return {
            "steps": int(self.steps),
            "dx": [float(axis.dx) for axis in self.axes],
            "terminal_nodes": counts,
            "total_nodes": int(np.prod(counts)),
        }


def spacing_factors(correlation: Callable[[float], np.ndarray], dims: int, maturity: float,
                    steps: int) -> np.ndarray:
    dt = maturity / steps
    worst = np.zeros((dims, dims))
    for n in range(steps + 1):
        worst = np.maximum(worst, np.abs(correlation(n * dt)))
    np.fill_diagonal(worst, 0.0)
    if dims == 2:
        return np.full(2, SPACING_FACTOR_2D * (1.0 + worst[0, 1]))
    return SPACING_FACTOR_3D * (1.0 + worst.max(axis=1))


def build_geometry_nd(surfaces: Sequence[SSVISurface], curve: YieldCurve, maturity: float, steps: int,
                      grid_finess: Union[float, Sequence[float]],
                      correlation: CorrelationInput) -> GridGeometryND:
    dims = len(surfaces)
    if dims not in (2, 3):
        raise ParameterError(f"multi-asset grids take 2 or 3 assets, got {dims}")
    check_steps(maturity, steps)
    finess = np.broadcast_to(np.asarray(grid_finess, dtype=float), (dims,))
    for i, g in enumerate(finess):
        check_grid_finess(g, f"grid_finess[{i}]")
    corr = correlation_function(correlation, dims)
    factors = spacing_factors(corr, dims, maturity, steps)
    dt = maturity / steps
    times = np.arange(steps + 1) * dt
    min_intervals = MIN_INTERVALS_2D if dims == 2 else MIN_INTERVALS_3D

    axes = []
    for surface, factor, g in zip(surfaces, factors, finess):
        spot = surface.spot
        dx = implied_vol(surface, spot, maturity) * np.sqrt(factor * dt) * g
        forwards = np.asarray(forward_price(curve, spot, times))
        axes.append(build_axis(maturity, steps, dx, lambda t, s=surface: skew_bounds(s, s.spot, t),
                               forwards, float(g), min_intervals))
    geometry = GridGeometryND(axes, corr)
    logger.debug(f"{dims}D geometry: {geometry.stats()}")
    return geometry


def _axis_coefficients(geometry: GridGeometryND, diffusions: Sequence[Diffusion1D], step: int):
    """Drift and vol per asset, evaluated once per axis and shaped to broadcast"""
    t = geometry.time(step)
    mus, sigmas = [], []
    for i, (x, diffusion) in enumerate(zip(geometry.states(step), diffusions)):
        shape = [1] * geometry.dims
        shape[i] = -1
        mu, sigma = diffusion.coefficients(x, t)
        mus.append(np.asarray(mu).reshape(shape))
        sigmas.append(np.asarray(sigma).reshape(shape))
    return mus, sigmas


def _check_finite(values: np.ndarray, step: int) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        node = tuple(int(i) for i in np.unravel_index(np.argmax(bad), values.shape))
        raise NumericError("non-finite value in backward step", step=step, node=node)


def _terminal_values(geometry: GridGeometryND, payoff: MultiPayoff) -> np.ndarray:
    values = payoff.values(geometry.spots(geometry.steps))
    _check_finite(values, geometry.steps)
    return values


def price_backward_2d(geometry: GridGeometryND, diffusions: Sequence[Diffusion1D], payoff: MultiPayoff,
                      curve: YieldCurve, method: InterpMethod = InterpMethod.BICUBIC) -> BackwardResult:
    method = InterpMethod.parse(method)
    if geometry.dims != 2 or len(diffusions) != 2:
        raise ParameterError("two-asset pricer needs a 2D geometry and two diffusions")
    if method not in (InterpMethod.BICUBIC, InterpMethod.KEYS):
        raise ParameterError(f"two-asset pricer interpolates with bicubic or keys, not {method.value}")
    start = time.perf_counter()
    N, dt = geometry.steps, geometry.dt
    sqrt_dt = np.sqrt(dt)
    floor = 0.0 if payoff.nonnegative else None
    values = _terminal_values(geometry, payoff)

    for n in range(N - 1, -1, -1):
        x1_next, x2_next = geometry.states(n + 1)
        lattice = Lattice2D(x1_next, x2_next, values)
        if method is InterpMethod.BICUBIC:
            lattice.with_derivatives()
        else:
            lattice.with_keys_padding()

        t = geometry.time(n)
        rho = float(geometry.correlation(t)[0, 1])
        if abs(rho) >= 1.0:
            logger.warning(f"|rho|=1 at t={t:.4f}: one pair of stencil shifts collapses to zero")
        x1, x2 = geometry.states(n)
        (mu1, mu2), (s1, s2) = _axis_coefficients(geometry, diffusions, n)
        c1 = x1[:, None] + mu1 * dt
        c2 = x2[None, :] + mu2 * dt
        total = np.zeros((x1.size, x2.size))
        for z1, z2 in stencil_2d(rho):
            q1 = c1 + z1 * s1 * sqrt_dt
            q2 = c2 + z2 * s2 * sqrt_dt
            if method is InterpMethod.BICUBIC:
                total += eval_bicubic(lattice, q1, q2)
            else:
                total += eval_keys2d(lattice, q1, q2, clamp_floor=floor)
        values = curve.step_discount(t, t + dt) * total / 5.0
        _check_finite(values, n)
        values = payoff.apply_exercise(values, geometry.spots(n), t)

    elapsed = time.perf_counter() - start
    logger.info(f"2D backward ({method.value}): {N} steps, {geometry.stats()['terminal_nodes']} "
                f"terminal nodes, {elapsed:.3f}s")
    return BackwardResult(float(values[0, 0]), [], elapsed)


def price_backward_3d(geometry: GridGeometryND, diffusions: Sequence[Diffusion1D], payoff: MultiPayoff,
                      curve: YieldCurve) -> BackwardResult:
    if geometry.dims != 3 or len(diffusions) != 3:
        raise ParameterError("three-asset pricer needs a 3D geometry and three diffusions")
    start = time.perf_counter()
    N, dt = geometry.steps, geometry.dt
    sqrt_dt = np.sqrt(dt)
    values = _terminal_values(geometry, payoff)

    for n in range(N - 1, -1, -1):
        lattice = Lattice3D(*geometry.states(n + 1), values)
        t = geometry.time(n)
        corr = geometry.correlation(t)
        chol = cholesky3(corr[0, 1], corr[0, 2], corr[1, 2])
        x1, x2, x3 = geometry.states(n)
        (mu1, mu2, mu3), (s1, s2, s3) = _axis_coefficients(geometry, diffusions, n)
        c1 = x1[:, None, None] + mu1 * dt
        c2 = x2[None, :, None] + mu2 * dt
        c3 = x3[None, None, :] + mu3 * dt
        total = np.zeros((x1.size, x2.size, x3.size))
        # one displacement at a time keeps a single lattice-sized query in memory
        for z1, z2, z3 in stencil_3d(chol):
            total += eval_trilinear(lattice, c1 + z1 * s1 * sqrt_dt, c2 + z2 * s2 * sqrt_dt,
                                    c3 + z3 * s3 * sqrt_dt)
        values = curve.step_discount(t, t + dt) * total / 9.0
        _check_finite(values, n)
        values = payoff.apply_exercise(values, geometry.spots(n), t)
        logger.debug(f"3D step {n}: {values.size} nodes")

    elapsed = time.perf_counter() - start
    logger.info(f"3D backward: {N} steps, {geometry.stats()['terminal_nodes']} terminal nodes, {elapsed:.3f}s")
    return BackwardResult(float(values[0, 0, 0]), [], elapsed)

"""
Payoff definitions shared by the grid engines and the Monte Carlo oracle.

Single-asset payoffs receive the grid state x (log of spot over forward) and the spot
s = F(t) * exp(x); multi-asset payoffs receive a sequence of spot arrays.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from core.errors import ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Payoff:
    terminal: Callable[[np.ndarray, np.ndarray], np.ndarray]
    exercise: Optional[Callable[[np.ndarray, np.ndarray, float], np.ndarray]] = None
    nonnegative: bool = False
    name: str = "payoff"

    def values(self, x, s) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.terminal(x, np.asarray(s, dtype=float)), dtype=float), x.shape).copy()

    def apply_exercise(self, values: np.ndarray, x, s, t: float) -> np.ndarray:
        if self.exercise is None:
            return values
        return np.maximum(values, self.exercise(x, s, t))


@dataclass(frozen=True)
class MultiPayoff:
    terminal: Callable[[Sequence[np.ndarray]], np.ndarray]
    exercise: Optional[Callable[[Sequence[np.ndarray], float], np.ndarray]] = None
    nonnegative: bool = False
    name: str = "multi_payoff"

    def values(self, spots: Sequence[np.ndarray]) -> np.ndarray:
        spots = [np.asarray(s, dtype=float) for s in spots]
        shape = np.broadcast_shapes(*(s.shape for s in spots))
        return np.broadcast_to(np.asarray(self.terminal(spots), dtype=float), shape).copy()

    def apply_exercise(self, values: np.ndarray, spots: Sequence[np.ndarray], t: float) -> np.ndarray:
        if self.exercise is None:
            return values
        return np.maximum(values, self.exercise(spots, t))


def call(strike: float) -> Payoff:
    return Payoff(lambda x, s: np.maximum(s - strike, 0.0), nonnegative=True, name=f"call {strike:g}")


def put(strike: float) -> Payoff:
    return Payoff(lambda x, s: np.maximum(strike - s, 0.0), nonnegative=True, name=f"put {strike:g}")


def digital_call(strike: float) -> Payoff:
    return Payoff(lambda x, s: np.where(s > strike, 1.0, 0.0), nonnegative=True, name=f"digital {strike:g}")


def constant(value: float = 1.0) -> Payoff:
    return Payoff(lambda x, s: np.full_like(x, value, dtype=float), nonnegative=value >= 0.0,
                  name=f"constant {value:g}")


def affine_state(a: float, b: float) -> Payoff:
    """a + b * x on the grid state itself"""
    return Payoff(lambda x, s: a + b * x, name=f"affine {a:g}+{b:g}x")


def with_american_exercise(payoff):
    """Early exercise into the terminal payoff at every step"""
    if isinstance(payoff, MultiPayoff):
        return replace(payoff, exercise=lambda spots, t: payoff.terminal(spots),
                       name=f"american {payoff.name}")
    return replace(payoff, exercise=lambda x, s, t: payoff.terminal(x, s), name=f"american {payoff.name}")


def basket_call(strike: float, weights: Sequence[float]) -> MultiPayoff:
    weights = [float(w) for w in weights]
    if not weights:
        raise ParameterError("basket needs at least one weight")

    def terminal(spots):
        _check_dimension(spots, len(weights))
        return np.maximum(sum(w * s for w, s in zip(weights, spots)) - strike, 0.0)
    return MultiPayoff(terminal, nonnegative=True, name=f"basket call {strike:g}")


def basket_put(strike: float, weights: Sequence[float]) -> MultiPayoff:
    weights = [float(w) for w in weights]

    def terminal(spots):
        _check_dimension(spots, len(weights))
        return np.maximum(strike - sum(w * s for w, s in zip(weights, spots)), 0.0)
    return MultiPayoff(terminal, nonnegative=True, name=f"basket put {strike:g}")


def best_of_call(strike: float) -> MultiPayoff:
    return MultiPayoff(lambda spots: np.maximum(np.maximum.reduce(np.broadcast_arrays(*spots)) - strike, 0.0),
                       nonnegative=True, name=f"best-of call {strike:g}")


def spread_call(strike: float, offset: float = 100.0) -> MultiPayoff:
    """(S1 - S2 - (strike - offset))+"""
    def terminal(spots):
        _check_dimension(spots, 2)
        return np.maximum(spots[0] - spots[1] - (strike - offset), 0.0)
    return MultiPayoff(terminal, nonnegative=True, name=f"spread call {strike:g}")


def multi_constant(value: float = 1.0) -> MultiPayoff:
    return MultiPayoff(lambda spots: np.full(np.broadcast_shapes(*(np.shape(s) for s in spots)), value),
                       nonnegative=value >= 0.0, name=f"constant {value:g}")


def single_asset(payoff: Payoff) -> MultiPayoff:
    """View a one-asset payoff as a multi-asset one on the first spot"""
    return MultiPayoff(lambda spots: payoff.terminal(np.zeros_like(spots[0]), spots[0]),
                       nonnegative=payoff.nonnegative, name=payoff.name)


def _check_dimension(spots, expected: int) -> None:
    if len(spots) != expected:
        raise ParameterError(f"payoff expects {expected} assets, got {len(spots)}")

"""
Synthetic market data and the analytics built on it.

YieldCurve and SSVISurface are closed-form; everything else (forwards, Black prices,
Dupire local vol, the Hull-White adjusted vol) derives from them.
"""

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from core.errors import DomainError, ImpliedVolError, ParameterError

logger = logging.getLogger(__name__)

DUPIRE_STRIKE_BUMP = 1e-4   # relative
DUPIRE_TIME_BUMP = 1e-4     # years
DUPIRE_MIN_T = 1e-6
LV_FLOOR = 1e-4
LV_CAP_MULTIPLE = 5.0


def decay_average(u):
    """(1 - e^-u) / u, equal to 1 at u = 0"""
    u = np.asarray(u, dtype=float)
    safe = np.where(np.abs(u) < 1e-10, 1.0, u)
    return np.where(np.abs(u) < 1e-10, 1.0 - 0.5 * u, -np.expm1(-safe) / safe)


def _as_float(value):
    return float(value) if np.ndim(value) == 0 else value


class CurvePoint(NamedTuple):
    zero_rate: float
    discount: float
    forward: float


@dataclass(frozen=True)
class YieldCurve:
    """R(t) = r1 + (r0 - r1)(1 - e^-ct)/(ct), continuously compounded"""
    r0: float
    r1: float
    c: float

    def __post_init__(self):
        if not (np.isfinite(self.r0) and np.isfinite(self.r1)):
            raise ParameterError("curve rates must be finite")
        if not self.c > 0.0:
            raise ParameterError(f"curve curvature c must be positive, got {self.c}")

    @classmethod
    def flat(cls, rate: float) -> 'YieldCurve':
        return cls(rate, rate, 1.0)

    @property
    def is_zero(self) -> bool:
        return self.r0 == 0.0 and self.r1 == 0.0

    def _check(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise DomainError(f"curve time must be non-negative, got {t}")
        return t

    def zero_rate(self, t):
        t = self._check(t)
        return _as_float(self.r1 + (self.r0 - self.r1) * decay_average(self.c * t))

    def log_discount(self, t):
        """t * R(t), the integral of f(0, u) over [0, t]"""
        t = self._check(t)
        return _as_float(self.r1 * t - (self.r0 - self.r1) * np.expm1(-self.c * t) / self.c)

    def discount(self, t):
        return _as_float(np.exp(-np.asarray(self.log_discount(t))))

    def forward_rate(self, t):
        t = self._check(t)
        return _as_float(self.r1 + (self.r0 - self.r1) * np.exp(-self.c * t))

    def step_discount(self, t0: float, t1: float) -> float:
        return float(np.exp(self.log_discount(t0) - self.log_discount(t1)))


def curve_eval(curve: YieldCurve, t: float) -> CurvePoint:
    return CurvePoint(curve.zero_rate(t), curve.discount(t), curve.forward_rate(t))


def forward_price(curve: YieldCurve, spot: float, t,
                  dividend_yield: Optional[Callable[[float], float]] = None):
    """
    F(t) = spot * exp(int_0^t (r - q) du).

    Args:
        dividend_yield: optional q(u); zero when omitted
    """
    growth = np.asarray(curve.log_discount(t), dtype=float)
    if dividend_yield is not None:
        carry = np.vectorize(lambda s: integrate.quad(dividend_yield, 0.0, s)[0])(np.asarray(t, dtype=float))
        growth = growth - carry
    return _as_float(spot * np.exp(growth))


@dataclass(frozen=True)
class SSVISurface:
    spot: float
    v0: float
    v1: float
    c: float
    rho_skew: float
    a: float
    b: float

    def __post_init__(self):
        if not self.spot > 0.0:
            raise ParameterError(f"spot must be positive, got {self.spot}")
        if not (self.v0 > 0.0 and self.v1 > 0.0):
            raise ParameterError("short and long ATM vols must be positive")
        if not self.c > 0.0:
            raise ParameterError(f"vol term curvature must be positive, got {self.c}")
        if not abs(self.rho_skew) < 1.0:
            raise ParameterError(f"|rho_skew| must be below 1, got {self.rho_skew}")
        if not 0.0 < self.b < 1.0:
            raise ParameterError(f"b must lie in (0, 1), got {self.b}")
        ts = np.linspace(0.01, 30.0, 300)
        if np.any(np.diff(self.total_variance(ts)) <= 0.0):
            raise ParameterError("ATM total variance is not increasing in maturity (calendar arbitrage)")

    def atm_vol(self, t):
        t = np.asarray(t, dtype=float)
        ratio = self.v0 ** 2 / self.v1 ** 2 - 1.0
        return _as_float(self.v1 * np.sqrt(1.0 + decay_average(self.c * t) * ratio))

    def total_variance(self, t):
        t = np.asarray(t, dtype=float)
        return _as_float(np.asarray(self.atm_vol(t)) ** 2 * t)

    def skew_phi(self, w):
        w = np.asarray(w, dtype=float)
        return self.a / (w ** self.b * (1.0 + w) ** (1.0 - self.b))

    def flat(self) -> bool:
        return self.a == 0.0 and self.v0 == self.v1


def implied_vol(surface: SSVISurface, K, t):
    K = np.asarray(K, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(K <= 0.0) or np.any(t <= 0.0):
        raise DomainError("implied vol needs positive strike and maturity")
    x = np.log(K / surface.spot)
    w = np.asarray(surface.total_variance(t))
    xphi = x * surface.skew_phi(w)
    r = surface.rho_skew
    variance = w / (2.0 * t) * (1.0 + r * xphi + np.sqrt(1.0 - r * r + (r + xphi) ** 2))
    return _as_float(np.sqrt(variance))


# ---------------------------------------------------------------------------
# Black formula
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BSQuote:
    forward: float
    strike: float
    maturity: float
    vol: float
    df: float = 1.0

    def __post_init__(self):
        if min(self.forward, self.strike, self.maturity, self.df) <= 0.0 or self.vol < 0.0:
            raise ParameterError(f"invalid Black quote {self}")


def black_price(forward, strike, maturity, vol, df=1.0, is_call: bool = True):
    forward = np.asarray(forward, dtype=float)
    strike = np.asarray(strike, dtype=float)
    stdev = np.asarray(vol, dtype=float) * np.sqrt(maturity)
    sign = 1.0 if is_call else -1.0
    intrinsic = np.maximum(sign * (forward - strike), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(stdev > 0.0, stdev, 1.0)
        d1 = (np.log(forward / strike) + 0.5 * safe ** 2) / safe
        d2 = d1 - safe
        value = sign * (forward * norm.cdf(sign * d1) - strike * norm.cdf(sign * d2))
    return _as_float(df * np.where(stdev > 0.0, value, intrinsic))


def black_vega(forward, strike, maturity, vol, df=1.0):
    stdev = vol * np.sqrt(maturity)
    d1 = (np.log(forward / strike) + 0.5 * stdev ** 2) / stdev
    return _as_float(df * forward * np.sqrt(maturity) * norm.pdf(d1))


def bs_price(quote: BSQuote, is_call: bool = True) -> float:
    return black_price(quote.forward, quote.strike, quote.maturity, quote.vol, quote.df, is_call)


def bs_implied_vol(premium: float, forward: float, strike: float, maturity: float,
                   df: float = 1.0, is_call: bool = True) -> float:
    """Invert the Black formula by bracketed root search"""
    sign = 1.0 if is_call else -1.0
    lower = df * max(sign * (forward - strike), 0.0)
    upper = df * (forward if is_call else strike)
    slack = 1e-12 * forward
    if not (lower - slack <= premium <= upper + slack):
        raise ImpliedVolError(f"premium {premium:.10g} outside no-arbitrage bounds "
                              f"[{lower:.10g}, {upper:.10g}]")
    if premium <= lower + slack:
        return 0.0

    def objective(vol):
        return black_price(forward, strike, maturity, vol, df, is_call) - premium

    hi = 5.0
    while objective(hi) < 0.0:
        hi *= 2.0
        if hi > 1e3:
            raise ImpliedVolError(f"no implied vol below {hi} for premium {premium:.10g}")
    return float(optimize.brentq(objective, 1e-12, hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=500))


# ---------------------------------------------------------------------------
# Dupire local vol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalVolSurface:
    surface: SSVISurface
    curve: YieldCurve
    floor: float = LV_FLOOR
    cap_multiple: float = LV_CAP_MULTIPLE

    def __post_init__(self):
        if not self.floor > 0.0:
            raise ParameterError(f"local vol floor must be positive, got {self.floor}")
        if not self.cap_multiple * min(self.surface.v0, self.surface.v1) > self.floor:
            raise ParameterError("local vol cap must exceed the floor")

    @property
    def spot(self) -> float:
        return self.surface.spot

    def cap(self, t):
        return self.cap_multiple * np.asarray(self.surface.atm_vol(np.maximum(t, DUPIRE_MIN_T)))


class DupireTerms(NamedTuple):
    nume: np.ndarray
    deno: np.ndarray
    vega: np.ndarray
    sigma: np.ndarray
    dsigma_dk: np.ndarray
    d2: np.ndarray
    df: np.ndarray
    forward_rate: np.ndarray


def dupire_terms(lv: LocalVolSurface, K, t) -> DupireTerms:
    """Numerator and denominator of Dupire's formula written on implied vols"""
    K = np.asarray(K, dtype=float)
    t = np.maximum(np.asarray(t, dtype=float), DUPIRE_MIN_T)
    if np.any(K <= 0.0):
        raise DomainError("local vol needs positive strikes")
    surface, curve = lv.surface, lv.curve

    sigma = np.asarray(implied_vol(surface, K, t))
    dk = DUPIRE_STRIKE_BUMP * K
    sig_up = np.asarray(implied_vol(surface, K + dk, t))
    sig_dn = np.asarray(implied_vol(surface, K - dk, t))
    sig_k = (sig_up - sig_dn) / (2.0 * dk)
    sig_kk = (sig_up - 2.0 * sigma + sig_dn) / (dk * dk)

    h = DUPIRE_TIME_BUMP
    sig_later = np.asarray(implied_vol(surface, K, t + h))
    sig_earlier = np.asarray(implied_vol(surface, K, np.where(t > h, t - h, t)))
    sig_t = (sig_later - sig_earlier) / np.where(t > h, 2.0 * h, h)

    df = np.asarray(curve.discount(t))
    fwd_rate = np.asarray(curve.forward_rate(t))
    F = np.asarray(forward_price(curve, surface.spot, t))
    sqrt_t = np.sqrt(t)
    d1 = (np.log(F / K) + 0.5 * sigma ** 2 * t) / (sigma * sqrt_t)
    d2 = d1 - sigma * sqrt_t
    vega = K * df * sqrt_t * norm.pdf(d2)

    nume = vega * (sigma / (2.0 * t) + sig_t + fwd_rate * K * sig_k)
    skew = 1.0 + K * d1 * sqrt_t * sig_k
    deno = vega / (2.0 * t * sigma) * (skew ** 2 + K * K * t * sigma * (sig_kk - d1 * sqrt_t * sig_k ** 2))
    return DupireTerms(nume, deno, vega, sigma, sig_k, d2, df, fwd_rate)


def market_digital(lv: LocalVolSurface, K, t):
    """Discounted digital call -dC/dK read off the implied vol smile"""
    terms = dupire_terms(lv, K, t)
    return _as_float(terms.df * norm.cdf(terms.d2) - terms.vega * terms.dsigma_dk)


def clamp_local_vol(lv: LocalVolSurface, variance, deno, t):
    """sqrt(variance) within [floor, cap]; a bad denominator yields the cap"""
    cap = lv.cap(t)
    with np.errstate(invalid="ignore"):
        vol = np.sqrt(np.maximum(variance, 0.0))
    vol = np.clip(vol, lv.floor, cap)
    bad = ~np.isfinite(deno) | (deno <= 0.0) | ~np.isfinite(variance)
    return np.where(bad, cap, vol)


def dupire_local_vol(lv: LocalVolSurface, K, t):
    terms = dupire_terms(lv, K, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        variance = terms.nume / terms.deno
    return _as_float(clamp_local_vol(lv, variance, terms.deno, np.maximum(t, DUPIRE_MIN_T)))


def hw_adjusted_vol(sigma_s: float, sigma_r: float, k: float, rho_sr: float, t: float) -> float:
    """Black vol of an equity with constant vol under Hull-White rates"""
    if not k > 0.0:
        raise ParameterError(f"mean reversion must be positive, got {k}")
    if t <= 0.0:
        return float(sigma_s)
    g1 = decay_average(k * t)
    g2 = decay_average(2.0 * k * t)
    variance = (sigma_s ** 2
                + 2.0 / k * sigma_s * sigma_r * rho_sr * (1.0 - g1)
                + sigma_r ** 2 / k ** 2 * (1.0 + g2 - 2.0 * g1))
    return float(np.sqrt(variance))

"""
Polynomial Service
Bounded, parity-definite Chebyshev approximations applied to encoded singular
values: negative powers, positive powers and the square root of a logarithm.

A construction interpolates a smooth extension of its target (the target on
the approximation interval, mollified to zero outside), truncates the
Chebyshev series, and then certifies the result on dense grids. The
certificate is the contract; a polynomial without a passing certificate is
never returned.

Degrees needed at deep levels run to millions, so a polynomial whose
predicted degree exceeds ``max_explicit_degree`` is kept as a surrogate: it
evaluates the mollified target that the truncated series converges to and
reports the degree given by the construction's degree law.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import chebyshev
from scipy.fft import dct

from src.config import PolynomialSettings
from src.exceptions import ConstructionFailedError, InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS = PolynomialSettings()

DOMAIN_TOLERANCE = 1e-12
CAP_ALLOWANCE = 1e-9
SMALL_X_ALLOWANCE = 1e-12
CAP_GRID_FLOOR = 4096
MIN_INTERPOLATION_POINTS = 32
LN2 = math.log(2.0)

ArrayLike = Union[float, Sequence[float], np.ndarray]


class Parity(str, Enum):
    EVEN = "even"
    ODD = "odd"

    @property
    def sign(self) -> int:
        return 1 if self == Parity.EVEN else -1


class Representation(str, Enum):
    EXPLICIT = "explicit"
    SURROGATE = "surrogate"


@dataclass(frozen=True)
class CertRecord:
    """Grid certificate of one polynomial against one target"""

    interval: Tuple[float, float]
    sup_error: float
    cap_ok: bool
    grid_points: int
    tol: float = float("nan")
    cap_max: float = float("nan")
    method: str = Representation.EXPLICIT.value
    checks: Dict[str, float] = field(default_factory=dict)
    degree_constant: float = float("nan")

    @property
    def passed(self) -> bool:
        within = math.isnan(self.tol) or self.sup_error <= self.tol
        return bool(within and self.cap_ok and all(margin >= 0 for margin in self.checks.values()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "interval": list(self.interval),
            "sup_error": self.sup_error,
            "cap_ok": self.cap_ok,
            "cap_max": self.cap_max,
            "grid_points": self.grid_points,
            "tol": self.tol,
            "method": self.method,
            "checks": dict(self.checks),
            "degree_constant": self.degree_constant,
            "passed": self.passed,
        }


@dataclass(frozen=True, eq=False)
class ChebPoly:
    """
    Chebyshev-basis polynomial on [-1, 1] with a definite parity.

    Explicit polynomials may also carry a factored form x^monomial_power * core(x),
    which is what they are evaluated with; ``coeffs`` always holds the full
    expanded series.
    """

    coeffs: np.ndarray = field(repr=False)
    parity: Parity
    degree: int
    cert: Optional[CertRecord] = None
    representation: Representation = Representation.EXPLICIT
    limit: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    monomial_power: int = 0
    core: Optional[np.ndarray] = field(default=None, repr=False)
    label: str = ""
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.representation == Representation.SURROGATE:
            if self.limit is None:
                raise InvalidArgumentError("Surrogate polynomial needs a limit function")
            return
        values = np.array(self.coeffs, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise InvalidArgumentError("Coefficients must be a non-empty vector")
        wrong = values[1::2] if self.parity == Parity.EVEN else values[0::2]
        if np.any(wrong != 0):
            raise InvalidArgumentError(f"Coefficients of {self.parity.value} polynomial have opposite-parity terms")
        nonzero = np.flatnonzero(values)
        last = int(nonzero[-1]) if nonzero.size else 0
        if last != self.degree:
            raise InvalidArgumentError(f"Degree {self.degree} does not match last nonzero coefficient {last}")
        values = values[: last + 1]
        values.setflags(write=False)
        object.__setattr__(self, "coeffs", values)

    @property
    def is_surrogate(self) -> bool:
        return self.representation == Representation.SURROGATE

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "params": dict(self.params),
            "parity": self.parity.value,
            "degree": self.degree,
            "representation": self.representation.value,
            "coeffs": [] if self.is_surrogate else self.coeffs.tolist(),
            "cert": self.cert.to_dict() if self.cert else None,
        }


def smooth_step(t: ArrayLike) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        left = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        right = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
        out = left / (left + right)
    return np.where(t <= 0, 0.0, np.where(t >= 1, 1.0, out))


def evaluate(poly: ChebPoly, x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Evaluate a polynomial at points of [-1, 1].

    Explicit series use Clenshaw's recurrence (numpy's chebval). Surrogates
    evaluate their limit function.

    Raises:
        InvalidArgumentError: if any |x| > 1
    """
    scalar = np.isscalar(x)
    points = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(points)) or np.any(np.abs(points) > 1.0 + DOMAIN_TOLERANCE):
        raise InvalidArgumentError("Chebyshev polynomials are evaluated on [-1, 1] only")
    points = np.clip(points, -1.0, 1.0)
    if poly.is_surrogate:
        values = np.asarray(poly.limit(points), dtype=float)
    elif poly.core is not None:
        values = points ** poly.monomial_power * chebyshev.chebval(points, poly.core)
    else:
        values = chebyshev.chebval(points, poly.coeffs)
    return float(values) if scalar else values


def _grid_size(poly: ChebPoly, requested: Optional[int], settings: PolynomialSettings, floor: int) -> int:
    size = max(floor, settings.grid_floor, requested or 0)
    if not poly.is_surrogate:
        size = max(size, settings.grid_per_degree * max(poly.degree, 1))
    return int(size)


def _interval_grid(lo: float, hi: float, size: int) -> np.ndarray:
    grid = np.linspace(lo, hi, size)
    if lo > 0 and hi / lo > 4:
        # deep intervals are resolved near their left end as well
        grid = np.union1d(grid, np.geomspace(lo, hi, size))
    return grid


def cap_max(poly: ChebPoly, grid_points: Optional[int] = None, settings: Optional[PolynomialSettings] = None) -> Tuple[float, int]:
    settings = settings or DEFAULT_SETTINGS
    size = _grid_size(poly, grid_points, settings, CAP_GRID_FLOOR)
    grid = np.linspace(-1.0, 1.0, size)
    return float(np.max(np.abs(evaluate(poly, grid)))), size


def certify(
    poly: ChebPoly,
    target: Callable[[np.ndarray], np.ndarray],
    interval: Tuple[float, float],
    tol: float = float("nan"),
    grid_points: Optional[int] = None,
    settings: Optional[PolynomialSettings] = None,
    checks: Optional[Dict[str, float]] = None,
) -> CertRecord:
    """
    Measure max |P - target| on a grid of ``interval`` and |P| on [-1, 1].

    Args:
        poly: Polynomial to certify
        target: Vectorized target function
        interval: (lo, hi) inside [-1, 1]
        tol: Tolerance the caller will compare sup_error against
        grid_points: Requested grid size; raised to the density floor if smaller
        settings: Grid density knobs
        checks: Extra named margins (>= 0 means pass) to store on the record

    Returns:
        CertRecord; failure is expressed by sup_error > tol, never raised
    """
    settings = settings or DEFAULT_SETTINGS
    lo, hi = float(interval[0]), float(interval[1])
    if not -1.0 <= lo <= hi <= 1.0:
        raise InvalidArgumentError(f"Certification interval {interval} is not inside [-1, 1]")
    size = _grid_size(poly, grid_points, settings, settings.grid_floor)
    grid = _interval_grid(lo, hi, size)
    sup_error = float(np.max(np.abs(evaluate(poly, grid) - np.asarray(target(grid), dtype=float))))
    peak, cap_size = cap_max(poly, grid_points, settings)
    return CertRecord(
        interval=(lo, hi),
        sup_error=sup_error,
        cap_ok=peak <= 1.0 + CAP_ALLOWANCE,
        grid_points=int(max(grid.size, cap_size)),
        tol=float(tol),
        cap_max=peak,
        method=poly.representation.value,
        checks=dict(checks or {}),
        degree_constant=settings.degree_constant,
    )


def attach_cert(poly: ChebPoly, cert: CertRecord) -> ChebPoly:
    return replace(poly, cert=cert)


def from_coefficients(coeffs: Sequence[float], label: str = "") -> ChebPoly:
    """Wrap hand-written coefficients, inferring parity and attaching a cap certificate."""
    values = np.asarray(coeffs, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise InvalidArgumentError("Coefficients must be a non-empty vector")
    nonzero = np.flatnonzero(values)
    degree = int(nonzero[-1]) if nonzero.size else 0
    values = values[: degree + 1]
    if np.all(values[1::2] == 0):
        parity = Parity.EVEN
    elif np.all(values[0::2] == 0):
        parity = Parity.ODD
    else:
        raise InvalidArgumentError("Coefficients mix even and odd terms")
    poly = ChebPoly(coeffs=values, parity=parity, degree=degree, label=label)
    cert = certify(poly, lambda x: chebyshev.chebval(x, values), (-1.0, 1.0), tol=DOMAIN_TOLERANCE)
    return attach_cert(poly, cert)


def constant_poly(value: float) -> ChebPoly:
    return from_coefficients([float(value)], label=f"constant({value})")


def chebyshev_coefficients(func: Callable[[np.ndarray], np.ndarray], degree: int) -> np.ndarray:
    """Interpolate func at degree+1 first-kind Chebyshev points (DCT-II)."""
    count = degree + 1
    nodes = np.cos(np.pi * (np.arange(count) + 0.5) / count)
    coeffs = dct(np.asarray(func(nodes), dtype=float), type=2) / count
    coeffs[0] /= 2.0
    return coeffs


def _enforce_parity(coeffs: np.ndarray, parity: Parity) -> np.ndarray:
    out = coeffs.copy()
    out[(1 if parity == Parity.EVEN else 0)::2] = 0.0
    return out


def _truncate(coeffs: np.ndarray, tail_tol: float) -> np.ndarray:
    """Keep the shortest prefix whose dropped tail has absolute sum <= tail_tol."""
    magnitudes = np.abs(coeffs)
    tails = np.concatenate([np.cumsum(magnitudes[::-1])[::-1][1:], [0.0]])
    keep = int(np.argmax(tails <= tail_tol))
    out = coeffs[: keep + 1].copy()
    nonzero = np.flatnonzero(out)
    return out[: int(nonzero[-1]) + 1] if nonzero.size else out[:1] * 0.0


def degree_law(settings: PolynomialSettings, weight: float, log_argument: float, width: float) -> int:
    """ceil(K * weight * ln(log_argument) / width), the degree a construction is budgeted."""
    return int(math.ceil(settings.degree_constant * weight * math.log(max(log_argument, math.e)) / width))


def _explicit_poly(coeffs: np.ndarray, parity: Parity, label: str, params: Dict[str, float], power: int = 0) -> ChebPoly:
    if power:
        core = coeffs
        full = coeffs
        for _ in range(power):
            full = chebyshev.chebmulx(full)
        full = _enforce_parity(np.asarray(full, dtype=float), parity)
        nonzero = np.flatnonzero(full)
        degree = int(nonzero[-1]) if nonzero.size else 0
        return ChebPoly(
            coeffs=full, parity=parity, degree=degree, label=label, params=params,
            monomial_power=power, core=np.array(core, dtype=float),
        )
    nonzero = np.flatnonzero(coeffs)
    degree = int(nonzero[-1]) if nonzero.size else 0
    return ChebPoly(coeffs=coeffs, parity=parity, degree=degree, label=label, params=params)


def _scaled(poly: ChebPoly, factor: float) -> ChebPoly:
    if poly.is_surrogate:
        inner = poly.limit
        return replace(poly, limit=lambda x: factor * inner(x))
    core = None if poly.core is None else poly.core * factor
    return replace(poly, coeffs=poly.coeffs * factor, core=core)


def _construct(
    extension: Callable[[np.ndarray], np.ndarray],
    parity: Parity,
    tail_tol: float,
    law: int,
    validate: Callable[[ChebPoly], CertRecord],
    label: str,
    params: Dict[str, float],
    settings: PolynomialSettings,
    divisor_power: int = 0,
) -> ChebPoly:
    """
    Interpolate, truncate, rescale for the cap, certify; double the degree on failure.

    With ``divisor_power`` = 2r the series is built for extension(x) / x^(2r)
    and multiplied back by x^(2r) afterwards.
    """
    if divisor_power:
        def series_target(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            mask = x != 0
            out[mask] = extension(x[mask]) / x[mask] ** divisor_power
            return out
    else:
        series_target = extension

    def surrogate(degree: int) -> ChebPoly:
        return ChebPoly(
            coeffs=np.zeros(1), parity=parity, degree=degree, representation=Representation.SURROGATE,
            limit=extension, label=label, params=params,
        )

    def finish(poly: ChebPoly) -> ChebPoly:
        peak, _ = cap_max(poly, settings=settings)
        ceiling = 1.0 - settings.cap_margin
        if peak > ceiling:
            poly = _scaled(poly, ceiling / peak)
        return attach_cert(poly, validate(poly))

    last: Optional[ChebPoly] = None
    if law <= settings.max_explicit_degree:
        degree = max(MIN_INTERPOLATION_POINTS, law)
        explicit_ceiling = 8 * max(settings.max_explicit_degree, MIN_INTERPOLATION_POINTS)
        for round_index in range(settings.max_rounds):
            if degree > explicit_ceiling:
                logger.warning(f"{label}: explicit series did not certify below degree {explicit_ceiling}; using surrogate")
                law = max(law, degree)
                break
            coeffs = _enforce_parity(chebyshev_coefficients(series_target, degree), parity)
            coeffs = _truncate(coeffs, tail_tol)
            last = finish(_explicit_poly(coeffs, parity, label, params, divisor_power))
            logger.debug(
                f"{label}: round {round_index + 1} degree {last.degree} "
                f"sup_error {last.cert.sup_error:.3e} passed {last.cert.passed}"
            )
            if last.cert.passed:
                return last
            degree *= 2
        else:
            cert = last.cert
            logger.error(f"{label}: certification failed after {settings.max_rounds} rounds (sup_error {cert.sup_error:.3e})")
            raise ConstructionFailedError(
                f"{label}: certification failed after {settings.max_rounds} rounds",
                sup_error=cert.sup_error, degree=last.degree, interval=cert.interval,
            )

    poly = finish(surrogate(law))
    if not poly.cert.passed:
        cert = poly.cert
        logger.error(f"{label}: surrogate certification failed (sup_error {cert.sup_error:.3e})")
        raise ConstructionFailedError(
            f"{label}: surrogate certification failed", sup_error=cert.sup_error, degree=law, interval=cert.interval,
        )
    logger.debug(f"{label}: surrogate with degree {law}")
    return poly


def _neg_power_window_start(c: float, delta: float) -> float:
    # keeps the mollified peak (delta/start)^c / 2 at or below 0.9
    return delta * max(0.5, 1.8 ** (-1.0 / c))


@lru_cache(maxsize=512)
def _neg_power_cached(c: float, delta: float, eps: float, settings: PolynomialSettings) -> ChebPoly:
    scale = delta ** c / 2.0
    start = _neg_power_window_start(c, delta)
    width = delta - start

    def target(x):
        return scale * np.asarray(x, dtype=float) ** (-c)

    def extension(x):
        y = np.abs(np.asarray(x, dtype=float))
        out = np.zeros_like(y)
        mask = y > start
        out[mask] = scale * y[mask] ** (-c) * smooth_step((y[mask] - start) / width)
        return out

    def validate(poly):
        return certify(poly, target, (delta, 1.0), tol=eps, settings=settings)

    law = degree_law(settings, c + 1.0, 1.0 / eps, width)
    params = {"c": c, "delta": delta, "eps": eps}
    return _construct(extension, Parity.EVEN, eps / 4.0, law, validate, f"neg_power(c={c:g}, delta={delta:g})", params, settings)


def build_neg_power(c: float, delta: float, eps: float, settings: Optional[PolynomialSettings] = None) -> ChebPoly:
    """
    Even P with |P(x) - (delta^c / 2) x^-c| <= eps on [delta, 1] and |P| <= 1 on [-1, 1].

    Raises:
        InvalidArgumentError: parameters outside c > 0, delta in (0, 1/2], eps in (0, 1/2]
        ConstructionFailedError: certification kept failing
    """
    if not c > 0:
        raise InvalidArgumentError(f"Exponent must be positive, got {c}")
    if not 0 < delta <= 0.5:
        raise InvalidArgumentError(f"delta must lie in (0, 1/2], got {delta}")
    if not 0 < eps <= 0.5:
        raise InvalidArgumentError(f"eps must lie in (0, 1/2], got {eps}")
    return _neg_power_cached(float(c), float(delta), float(eps), settings or DEFAULT_SETTINGS)


def pos_power_scale(c: float, beta: float) -> float:
    """k in g(x) = k x^c = 2^(-c-1) beta^(-c) x^c."""
    return 2.0 ** (-c - 1.0) * beta ** (-c)


@lru_cache(maxsize=512)
def _pos_power_cached(c: float, nu: float, beta: float, eta: float, settings: PolynomialSettings) -> ChebPoly:
    k = pos_power_scale(c, beta)
    half_nu = nu / 2.0
    falls = 2.0 * beta < 1.0
    power = 2 * int(math.ceil(c / 2.0))

    def g(x):
        return k * np.abs(np.asarray(x, dtype=float)) ** c

    def extension(x):
        y = np.abs(np.asarray(x, dtype=float))
        window = smooth_step((y - half_nu) / half_nu)
        if falls:
            window = window * (1.0 - smooth_step((y - beta) / beta))
        return k * y ** c * window

    def validate(poly):
        size = _grid_size(poly, None, settings, settings.grid_floor)
        small = np.union1d(np.linspace(0.0, nu, size), np.geomspace(nu * 1e-6, nu, settings.grid_floor))
        excess = np.abs(evaluate(poly, small)) - 2.0 * g(small) - SMALL_X_ALLOWANCE
        return certify(
            poly, g, (nu, beta), tol=eta, settings=settings,
            checks={"small_x_margin": float(-np.max(excess))},
        )

    law = degree_law(settings, c + 1.0, 1.0 / (beta * nu * eta), half_nu)
    params = {"c": c, "nu": nu, "beta": beta, "eta": eta}
    return _construct(
        extension, Parity.EVEN, min(eta, k) / 4.0, law, validate,
        f"pos_power(c={c:g}, nu={nu:g}, beta={beta:g})", params, settings, divisor_power=power,
    )


def build_pos_power(c: float, nu: float, beta: float, eta: float, settings: Optional[PolynomialSettings] = None) -> ChebPoly:
    """
    Even S with |S| <= 2g on [0, nu], |g - S| <= eta on [nu, beta] and |S| <= 1,
    where g(x) = 2^(-c-1) beta^(-c) x^c.
    """
    if not c > 0:
        raise InvalidArgumentError(f"Exponent must be positive, got {c}")
    if not 0 < nu < beta < 1:
        raise InvalidArgumentError(f"Need 0 < nu < beta < 1, got nu={nu}, beta={beta}")
    if not 0 < eta < 0.5:
        raise InvalidArgumentError(f"eta must lie in (0, 1/2), got {eta}")
    return _pos_power_cached(float(c), float(nu), float(beta), float(eta), settings or DEFAULT_SETTINGS)


def shannon_bound(j: int) -> float:
    """B_j of the Shannon plan: 4 ln2 * j, at least twice max |ln x^2| on (2^-j, 2^-(j-1)]."""
    return 4.0 * LN2 * j


def sqrt_log_tolerance(j: int, eps: float, m: int) -> float:
    """Tolerance on P^2 implied by the eps/(12m) condition on B_{j+1} P^2."""
    return eps / (12.0 * m * shannon_bound(j + 1))


@lru_cache(maxsize=512)
def _sqrt_log_cached(j: int, eps: float, m: int, settings: PolynomialSettings) -> ChebPoly:
    bound = shannon_bound(j + 1)
    cond_tol = eps / (12.0 * m)
    kappa = sqrt_log_tolerance(j, eps, m)
    tau = kappa / 4.0
    phi_next, phi_prev = 2.0 ** (-(j + 1)), 2.0 ** (-(j - 1))
    low_start = phi_next / 4.0
    high_start, high_width = phi_prev / 2.0, phi_prev / 4.0

    def extension(x):
        y = np.abs(np.asarray(x, dtype=float))
        out = np.zeros_like(y)
        mask = y > low_start
        ym = y[mask]
        exponent = -2.0 * np.log(2.0 * ym) / bound
        value = np.sqrt(tau * np.logaddexp(0.0, exponent / tau))
        window = smooth_step((ym - low_start) / low_start)
        if j >= 2:
            window = window * (1.0 - smooth_step((ym - high_start) / high_width))
        out[mask] = value * window
        return out

    def validate(poly):
        grid = _interval_grid(phi_next, min(phi_prev, 1.0), _grid_size(poly, None, settings, settings.grid_floor))
        deviation = np.abs(bound * evaluate(poly, grid / 2.0) ** 2 + np.log(grid ** 2))
        worst = float(np.max(deviation))
        return certify(
            poly, extension, (phi_next / 2.0, phi_prev / 2.0), settings=settings,
            checks={"condition_margin": cond_tol - worst},
        )

    width = low_start if j >= 2 else min(low_start, tau * bound / 4.0)
    law = degree_law(settings, 1.0, 1.0 / kappa, width)
    params = {"j": j, "eps": eps, "m": m, "bound": bound}
    return _construct(extension, Parity.EVEN, kappa / 4.0, law, validate, f"sqrt_log(j={j})", params, settings)


def build_sqrt_log(j: int, eps: float, m: int = 1, settings: Optional[PolynomialSettings] = None) -> ChebPoly:
    """
    Even P_j for the Shannon plan, certified so that
    |B_{j+1} P_j(x/2)^2 + ln(x^2)| <= eps/(12m) on (2^-(j+1), 2^-(j-1)].
    """
    if j < 1:
        raise InvalidArgumentError(f"Level index must be >= 1, got {j}")
    if not 0 < eps < 1:
        raise InvalidArgumentError(f"eps must lie in (0, 1), got {eps}")
    if m < 1:
        raise InvalidArgumentError(f"Level count must be >= 1, got {m}")
    return _sqrt_log_cached(int(j), float(eps), int(m), settings or DEFAULT_SETTINGS)


def parity_gap(poly: ChebPoly, grid_points: int = CAP_GRID_FLOOR) -> float:
    """max |P(-x) - sign * P(x)| over a grid of [0, 1]."""
    grid = np.linspace(0.0, 1.0, grid_points)
    return float(np.max(np.abs(evaluate(poly, -grid) - poly.parity.sign * evaluate(poly, grid))))


def describe(polys: List[ChebPoly]) -> List[Dict[str, Any]]:
    return [poly.to_dict() for poly in polys]

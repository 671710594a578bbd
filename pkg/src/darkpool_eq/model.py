"""Model primitives: parameters, beliefs, spreads, payoffs and strategies.

All signal quantities are expressed in scaled units: a signal ``s`` is
divided by the noise scale ``sigma_e`` and the value scale enters only
through the information advantage ``sigma_ratio = sigma_v / sigma_e``.
Payoffs are in units of ``sigma_v``.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import expit, log_expit


class ModelError(Exception):
    """Base class for library errors."""


class ConfigError(ModelError, ValueError):
    """Invalid parameters or malformed configuration."""


class DomainError(ModelError, ValueError):
    """Argument outside the domain of an operation."""


class DegenerateMarketError(ModelError, ArithmeticError):
    """No order flow at all on the relevant venue."""


class InvalidEquilibriumError(ModelError, ValueError):
    """Cutoffs or fractions that cannot describe an equilibrium."""


class NumericError(ModelError, ArithmeticError):
    """A solver or quadrature failed; ``trace`` holds diagnostics."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


# --------------------------------------------------------------------------
# Distributions


@dataclass(frozen=True)
class ZLaw:
    """Law of each side of liquidity demand, ``Z+`` and ``Z-`` i.i.d.

    Only the Gamma family is supported.
    """

    shape: float
    scale: float
    family: str = "gamma"

    def __post_init__(self):
        if self.family != "gamma":
            raise ConfigError(f"unsupported z_law family {self.family!r}")
        for name in ("shape", "scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"z_{name} must be positive and finite, got {v}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def var(self) -> float:
        return self.shape * self.scale**2

    @property
    def sigma_z(self) -> float:
        """Scale of the normal approximation, ``sigma_z**2 = 2 Var(Z+)``."""
        return math.sqrt(2.0 * self.var)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, self.scale, size)


@dataclass(frozen=True)
class DelayCdf:
    """Delay-cost CDF ``G`` on ``[0, d_bar]``.

    ``family`` is ``"uniform"`` or ``"spline"``. A spline is a monotone
    PCHIP interpolant through ``knots_x``/``knots_y`` which must start at
    ``(0, 0)`` and end at ``(d_bar, 1)``.
    """

    family: str = "uniform"
    d_bar: float = 3.0
    knots_x: tuple = ()
    knots_y: tuple = ()
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.d_bar) and self.d_bar >= 1.0):
            raise ConfigError(f"d_bar must be >= 1, got {self.d_bar}")
        if self.family == "uniform":
            return
        if self.family != "spline":
            raise ConfigError(f"unsupported g_family {self.family!r}")
        x = np.asarray(self.knots_x, dtype=float)
        y = np.asarray(self.knots_y, dtype=float)
        if x.ndim != 1 or x.size < 2 or x.shape != y.shape:
            raise ConfigError("spline knots must be two equal-length lists")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(y) < 0):
            raise ConfigError("spline knots must be increasing with nondecreasing values")
        if x[0] != 0.0 or y[0] != 0.0 or x[-1] != self.d_bar or y[-1] != 1.0:
            raise ConfigError("spline must satisfy G(0)=0 and G(d_bar)=1")
        object.__setattr__(self, "_interp", PchipInterpolator(x, y, extrapolate=False))

    @classmethod
    def uniform(cls, d_bar: float = 3.0) -> "DelayCdf":
        return cls("uniform", float(d_bar))

    @classmethod
    def spline(cls, x, y) -> "DelayCdf":
        x = tuple(float(v) for v in x)
        y = tuple(float(v) for v in y)
        return cls("spline", x[-1], x, y)

    def cdf(self, x):
        if self.family == "uniform" and isinstance(x, float):
            return min(max(x, 0.0), self.d_bar) / self.d_bar
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.d_bar)
        if self.family == "uniform":
            out = x / self.d_bar
        else:
            out = np.clip(self._interp(x), 0.0, 1.0)
        return out if out.ndim else float(out)

    def density(self, x):
        """``G'(x)``; zero outside ``[0, d_bar]``."""
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= self.d_bar)
        if self.family == "uniform":
            out = np.where(inside, 1.0 / self.d_bar, 0.0)
        else:
            out = np.where(inside, self._interp(np.clip(x, 0, self.d_bar), 1), 0.0)
        return out if out.ndim else float(out)

    def curvature(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "uniform":
            out = np.zeros_like(x)
        else:
            out = self._interp(np.clip(x, 0, self.d_bar), 2)
        return out if out.ndim else float(out)

    def ppf(self, u):
        """Quantile function, used to draw delay costs from uniforms."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        if self.family == "uniform":
            out = u * self.d_bar
        else:
            # monotone interpolant: invert on a dense table
            x = np.linspace(0.0, self.d_bar, 4097)
            y = np.maximum.accumulate(self.cdf(x))
            keep = np.concatenate([[True], np.diff(y) > 0])
            out = np.interp(u, y[keep], x[keep])
        return out if out.ndim else float(out)

    def mass(self, x0: float, x1: float, width: float | None = None) -> float:
        """``G(x1) - G(x0)``.

        ``width`` may carry an accurately computed ``x1 - x0`` when the
        endpoints are close to each other; the difference of CDF values
        would lose all digits there.
        """
        if width is None:
            width = x1 - x0
        if self.family == "uniform":
            lo = min(max(x0, 0.0), self.d_bar)
            hi = min(max(x1, 0.0), self.d_bar)
            if lo == x0 and hi == x1:
                return width / self.d_bar
            return (hi - lo) / self.d_bar
        if abs(width) < 1e-6:
            return float(self.density(0.5 * (x0 + x1))) * width
        return float(self.cdf(x1) - self.cdf(x0))

    def satisfies_uniqueness(self, n: int = 1001) -> bool:
        """Whether ``G'(x) + x G''(x) >= 0`` on ``[0, 1]``."""
        x = np.linspace(0.0, 1.0, n)
        return bool(np.all(self.density(x) + x * self.curvature(x) >= -1e-12))


@dataclass(frozen=True)
class NumericsConfig:
    quad_order: int = 128
    tol_root: float = 1e-12
    tol_expect: float = 1e-8
    qmc_points: int = 2**21
    seed: int = 20240229

    def __post_init__(self):
        if self.quad_order < 8 or self.quad_order % 2:
            raise ConfigError("quad_order must be an even integer >= 8")
        if not (0 < self.tol_root < 1e-3 and 0 < self.tol_expect < 1e-2):
            raise ConfigError("tolerances must be small positive numbers")
        if self.qmc_points < 1024:
            raise ConfigError("qmc_points must be at least 1024")


@dataclass(frozen=True)
class ModelParams:
    sigma_v: float
    sigma_e: float
    mu: float
    mu_z: float
    z_law: ZLaw
    delay_cdf: DelayCdf = field(default_factory=DelayCdf.uniform)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)

    def __post_init__(self):
        for name in ("sigma_v", "sigma_e", "mu", "mu_z"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive and finite, got {v!r}")
        if not math.isclose(self.z_law.mean, 0.5 * self.mu_z, rel_tol=1e-9):
            raise ConfigError(
                f"z_law mean {self.z_law.mean} must equal mu_z/2 = {0.5 * self.mu_z}"
            )

    @property
    def sigma_ratio(self) -> float:
        return self.sigma_v / self.sigma_e

    @property
    def mu_ratio(self) -> float:
        """``mu_z / mu``."""
        return self.mu_z / self.mu

    def replace(self, **changes) -> "ModelParams":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return ModelParams(**kw)

    def with_sigmas(self, sigma_v: float, sigma_e: float) -> "ModelParams":
        return self.replace(sigma_v=float(sigma_v), sigma_e=float(sigma_e))

    def with_mu_ratio(self, mu_over_mu_z: float) -> "ModelParams":
        """Rescale ``mu`` so that ``mu / mu_z`` equals the given value."""
        return self.replace(mu=float(mu_over_mu_z) * self.mu_z)

    def to_config(self) -> dict:
        d = {
            "sigma_v": self.sigma_v,
            "sigma_e": self.sigma_e,
            "mu": self.mu,
            "mu_z": self.mu_z,
            "z_shape": self.z_law.shape,
            "z_scale": self.z_law.scale,
            "g_family": self.delay_cdf.family,
            "d_bar": self.delay_cdf.d_bar,
            "seed": self.numerics.seed,
            "quad_order": self.numerics.quad_order,
            "tol_root": self.numerics.tol_root,
            "tol_expect": self.numerics.tol_expect,
        }
        if self.delay_cdf.family == "spline":
            d["g_knots_x"] = ",".join(repr(v) for v in self.delay_cdf.knots_x)
            d["g_knots_y"] = ",".join(repr(v) for v in self.delay_cdf.knots_y)
        return d

    def digest(self) -> str:
        """Short stable hash of the configuration."""
        text = dump_config(self)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def paper_params(sigma_v: float = 1.0, sigma_e: float = 1.0, **numerics) -> ModelParams:
    """Reference parameterization: ``mu_z = 60``, ``mu = 30``, Gamma(30, 1)
    sides and uniform delay costs on ``[0, 3]``."""
    return ModelParams(
        sigma_v=float(sigma_v),
        sigma_e=float(sigma_e),
        mu=30.0,
        mu_z=60.0,
        z_law=ZLaw(30.0, 1.0),
        delay_cdf=DelayCdf.uniform(3.0),
        numerics=NumericsConfig(**numerics),
    )


# --------------------------------------------------------------------------
# Flat key-value configuration

REQUIRED_KEYS = ("sigma_v", "sigma_e", "mu", "mu_z", "z_shape", "z_scale")
_FLOAT_KEYS = ("sigma_v", "sigma_e", "mu", "mu_z", "z_shape", "z_scale", "d_bar",
               "tol_root", "tol_expect")
_INT_KEYS = ("seed", "quad_order", "qmc_points")


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = line.split("=", 1)
        elif ":" in line:
            key, value = line.split(":", 1)
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def params_from_mapping(m: Mapping[str, object]) -> ModelParams:
    missing = [k for k in REQUIRED_KEYS if k not in m]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    vals = {}
    try:
        for k in _FLOAT_KEYS:
            if k in m:
                vals[k] = float(m[k])
        for k in _INT_KEYS:
            if k in m:
                vals[k] = int(m[k])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric value: {exc}") from None
    family = str(m.get("g_family", "uniform"))
    d_bar = vals.get("d_bar", 3.0)
    if family == "uniform":
        delay = DelayCdf.uniform(d_bar)
    elif family == "spline":
        try:
            xs = [float(v) for v in str(m["g_knots_x"]).split(",")]
            ys = [float(v) for v in str(m["g_knots_y"]).split(",")]
        except KeyError as exc:
            raise ConfigError(f"missing required key(s): {exc.args[0]}") from None
        delay = DelayCdf.spline(xs, ys)
    else:
        raise ConfigError(f"unsupported g_family {family!r}")
    num_kw = {k: vals[k] for k in ("quad_order", "tol_root", "tol_expect", "seed",
                                   "qmc_points") if k in vals}
    return ModelParams(
        sigma_v=vals["sigma_v"],
        sigma_e=vals["sigma_e"],
        mu=vals["mu"],
        mu_z=vals["mu_z"],
        z_law=ZLaw(vals["z_shape"], vals["z_scale"]),
        delay_cdf=delay,
        numerics=NumericsConfig(**num_kw),
    )


def load_config(path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        return params_from_mapping(parse_config(fh.read()))


def dump_config(params: ModelParams) -> str:
    return "".join(f"{k} = {v}\n" for k, v in params.to_config().items())


# --------------------------------------------------------------------------
# Beliefs, spread, payoffs


@dataclass(frozen=True)
class ScaledState:
    s_scaled: float
    sigma_ratio: float

    def __post_init__(self):
        if not (self.sigma_ratio > 0):
            raise DomainError("sigma_ratio must be positive")

    @classmethod
    def from_raw(cls, s: float, sigma_v: float, sigma_e: float) -> "ScaledState":
        return cls(s / sigma_e, sigma_v / sigma_e)

    @property
    def belief(self) -> float:
        return belief(self.s_scaled, self.sigma_ratio)


def _check_finite(*xs):
    for x in xs:
        if not np.all(np.isfinite(x)):
            raise DomainError(f"non-finite input {x!r}")


def _expit(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def belief(s_scaled, sigma_ratio):
    """Posterior probability of the high value given a scaled signal.

    Logistic closed form ``1 / (1 + exp(-2 s sigma))``.

    Examples
    --------
    >>> belief(0.0, 3.0)
    0.5
    """
    if isinstance(s_scaled, float) and isinstance(sigma_ratio, float):
        if not (math.isfinite(s_scaled) and math.isfinite(sigma_ratio)):
            raise DomainError(f"non-finite input {(s_scaled, sigma_ratio)!r}")
        return _expit(2.0 * s_scaled * sigma_ratio)
    _check_finite(s_scaled, sigma_ratio)
    out = expit(2.0 * np.asarray(s_scaled, dtype=float) * sigma_ratio)
    return out if out.ndim else float(out)


def belief_complement(s_scaled, sigma_ratio):
    """``1 - belief`` without cancellation."""
    if isinstance(s_scaled, float) and isinstance(sigma_ratio, float):
        if not (math.isfinite(s_scaled) and math.isfinite(sigma_ratio)):
            raise DomainError(f"non-finite input {(s_scaled, sigma_ratio)!r}")
        return _expit(-2.0 * s_scaled * sigma_ratio)
    _check_finite(s_scaled, sigma_ratio)
    out = expit(-2.0 * np.asarray(s_scaled, dtype=float) * sigma_ratio)
    return out if out.ndim else float(out)


def log_belief_slope(s_scaled: float, sigma_ratio: float) -> float:
    """``log B'(s)`` with ``B' = 2 sigma B (1 - B)``."""
    x = 2.0 * s_scaled * sigma_ratio
    return math.log(2.0 * sigma_ratio) + float(log_expit(x)) + float(log_expit(-x))


def cutoff_distance(s_scaled: float, sigma_ratio: float) -> float:
    """``d = 2B(s) - 1 = tanh(s sigma)``."""
    return math.tanh(s_scaled * sigma_ratio)


def cutoff_distance_gap(s0: float, s1: float, sigma_ratio: float) -> float:
    """``tanh(s1 sigma) - tanh(s0 sigma)`` evaluated without cancellation."""
    x0, x1 = s0 * sigma_ratio, s1 * sigma_ratio
    if x0 < 1.0:
        return math.tanh(x1) - math.tanh(x0)
    # 1 - tanh(x) = 2 expit(-2x)
    return 2.0 * (float(expit(-2.0 * x0)) - float(expit(-2.0 * x1)))


def spread_norm(gamma_bar_e, gamma_low_e, alpha_e, mu, mu_z):
    """Normalized spread ``A / sigma_v`` at which the market maker breaks even.

    Examples
    --------
    >>> spread_norm(0.5, 0.1, 0.5, 30.0, 60.0)
    0.25
    """
    den = gamma_bar_e + gamma_low_e + alpha_e * mu_z / mu
    if not den > 0:
        raise DegenerateMarketError("no order flow reaches the exchange")
    return (gamma_bar_e - gamma_low_e) / den


def market_maker_profit(sigma_v, spread, gamma_bar_e, gamma_low_e, alpha_e, mu, mu_z):
    """Expected market-maker profit; zero at the break-even spread."""
    return (sigma_v * (gamma_low_e - gamma_bar_e) * mu
            + spread * ((gamma_bar_e + gamma_low_e) * mu + alpha_e * mu_z))


def informed_payoffs(belief_strength, spread_norm, r_bar, r_low):
    """Expected payoffs of (exchange, dark pool, no trade) for a signal of
    strength ``B = belief(|s|)``."""
    exchange = 2.0 * belief_strength - 1.0 - spread_norm
    dark = belief_strength * r_low - (1.0 - belief_strength) * r_bar
    return exchange, dark, 0.0


def uninformed_costs(delay, spread_norm, r_bar, r_low):
    """Expected payoffs (negative costs) of (exchange, dark pool, delay)."""
    exchange = -spread_norm
    dark = -0.5 * (r_bar - r_low) - (1.0 - 0.5 * (r_bar + r_low)) * delay
    return exchange, dark, -delay


class Action(enum.Enum):
    BUY_EXCHANGE = "BuyExchange"
    SELL_EXCHANGE = "SellExchange"
    BUY_DARK = "BuyDark"
    SELL_DARK = "SellDark"
    NO_TRADE = "NoTrade"

    def mirror(self) -> "Action":
        return _MIRROR[self]


_MIRROR = {
    Action.BUY_EXCHANGE: Action.SELL_EXCHANGE,
    Action.SELL_EXCHANGE: Action.BUY_EXCHANGE,
    Action.BUY_DARK: Action.SELL_DARK,
    Action.SELL_DARK: Action.BUY_DARK,
    Action.NO_TRADE: Action.NO_TRADE,
}


class Venue(enum.IntEnum):
    NONE = 0
    DARK = 1
    EXCHANGE = 2


def informed_strategy(s_scaled: float, cutoffs) -> Action:
    """Cutoff strategy of an informed trader.

    Ties go to the higher-commitment venue: ``|s| >= s1`` trades on the
    exchange, ``s0 <= |s| < s1`` in the dark pool. Zero signals abstain.
    """
    s0, s1 = cutoffs
    if not (0.0 < s0 < s1):
        raise InvalidEquilibriumError(f"cutoffs must satisfy 0 < s0 < s1, got {cutoffs}")
    _check_finite(s_scaled)
    a = abs(s_scaled)
    if s_scaled == 0.0 or a < s0:
        return Action.NO_TRADE
    buy = s_scaled > 0
    if a >= s1:
        return Action.BUY_EXCHANGE if buy else Action.SELL_EXCHANGE
    return Action.BUY_DARK if buy else Action.SELL_DARK


def informed_venue(s_abs, s0: float, s1: float):
    """Vectorized venue code for ``|s|`` (``Venue`` integers)."""
    s_abs = np.asarray(s_abs, dtype=float)
    return np.where(s_abs >= s1, Venue.EXCHANGE,
                    np.where((s_abs >= s0) & (s_abs > 0), Venue.DARK, Venue.NONE))


def uninformed_venue(delay, d0: float, d1: float):
    """Vectorized venue for liquidity traders; ``d >= d1`` uses the exchange,
    ``d0 <= d < d1`` the dark pool, the rest delay."""
    delay = np.asarray(delay, dtype=float)
    return np.where(delay >= d1, Venue.EXCHANGE,
                    np.where(delay >= d0, Venue.DARK, Venue.NONE))

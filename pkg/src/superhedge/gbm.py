"""Discrete geometric Brownian motion market.

One-step discounted gross returns have the form exp(sigma * (d + y)) where d
is a centering offset determined by the rate (and optionally a drift), so
that the return is exactly 1 at y = -d. Increments y act as free optimisation
variables for the pricer; a seedable Gaussian sampler exists only for
demonstration statistics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import OverflowLimit, ValidationError

#: Cap on |sigma * (d + y)| before exponentiation.
EXP_CAP = 700.0


@dataclass(frozen=True)
class GbmParams:
    """Model parameters; ``mu`` absent selects the driftless form.

    A warning (not an error) is raised when sigma >= 1/(2*dt), the stated
    integrability hypothesis for the Gaussian step law; all quantities the
    library computes remain finite regardless.
    """

    s0: float
    r: float
    sigma: float
    dt: float
    n_steps: int
    mu: float | None = None

    def __post_init__(self):
        if self.s0 <= 0.0 or self.sigma <= 0.0 or self.dt <= 0.0:
            raise ValidationError("s0, sigma and dt must be positive")
        if self.n_steps < 1:
            raise ValidationError("n_steps must be >= 1")
        if self.integrability_warning:
            warnings.warn(
                f"sigma={self.sigma} >= 1/(2*dt)={1.0 / (2.0 * self.dt)}: outside "
                "the stated integrability condition for the Gaussian step law",
                stacklevel=2,
            )

    @property
    def integrability_warning(self) -> bool:
        return self.sigma >= 1.0 / (2.0 * self.dt)


def centering_offset(p: GbmParams) -> float:
    """Offset d with gross return exp(sigma * (d + y)); driftless: -r*dt/sigma."""
    if p.mu is None:
        return -p.r * p.dt / p.sigma
    return (p.mu - 0.5 * p.sigma**2 - p.r) * p.dt / p.sigma


def gross_return(p: GbmParams, y):
    """Discounted one-step gross return G(y) = exp(sigma * (d + y)).

    G is strictly increasing, G(-d) = 1 exactly, and the excess G(y) - 1 is
    nonpositive precisely on y <= -d. Exponents beyond EXP_CAP in magnitude
    are an error, never silently clamped.
    """
    d = centering_offset(p)
    exponent = p.sigma * (d + np.asarray(y, dtype=float))
    if np.any(np.abs(exponent) > EXP_CAP):
        raise OverflowLimit(f"|sigma*(d+y)| exceeds {EXP_CAP}")
    out = np.exp(exponent)
    return float(out) if np.isscalar(y) or np.asarray(y).ndim == 0 else out


def increment_for_return(p: GbmParams, g) -> float:
    """Inverse of gross_return: the y with G(y) = g."""
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0.0):
        raise ValidationError("gross returns must be positive")
    out = np.log(g) / p.sigma - centering_offset(p)
    return float(out) if out.ndim == 0 else out


def terminal_price(p: GbmParams, ys) -> float:
    """Discounted terminal price s0 * prod of per-step gross returns."""
    ys = np.asarray(ys, dtype=float)
    if ys.shape != (p.n_steps,):
        raise ValidationError(f"need {p.n_steps} increments")
    return float(p.s0 * np.prod(gross_return(p, ys)))


@dataclass(frozen=True)
class PayoffSpec:
    """Terminal payoff: call/put/digital on a strike, or a piecewise-linear table."""

    kind: str
    strike: float | None = None
    breakpoints: tuple[float, ...] | None = None
    table_values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind in ("call", "put", "digital"):
            if self.strike is None or self.strike <= 0.0:
                raise ValidationError(f"{self.kind} payoff needs a positive strike")
        elif self.kind == "table":
            if not self.breakpoints or not self.table_values:
                raise ValidationError("table payoff needs breakpoints and values")
            if len(self.breakpoints) != len(self.table_values):
                raise ValidationError("breakpoints and values must align")
            bp = np.asarray(self.breakpoints, dtype=float)
            if np.any(np.diff(bp) <= 0.0):
                raise ValidationError("breakpoints must be strictly increasing")
            if np.any(np.asarray(self.table_values) < 0.0):
                raise ValidationError("table payoff values must be nonnegative")
        else:
            raise ValidationError(f"unknown payoff kind {self.kind!r}")

    @classmethod
    def call(cls, strike: float) -> "PayoffSpec":
        return cls("call", strike=strike)

    @classmethod
    def put(cls, strike: float) -> "PayoffSpec":
        return cls("put", strike=strike)

    @classmethod
    def digital(cls, strike: float) -> "PayoffSpec":
        return cls("digital", strike=strike)

    @classmethod
    def table(cls, breakpoints, values) -> "PayoffSpec":
        return cls("table", breakpoints=tuple(breakpoints), table_values=tuple(values))


def evaluate_payoff(spec: PayoffSpec, s):
    """Payoff at terminal price(s) s: vectorised, flat extrapolation for tables."""
    s = np.asarray(s, dtype=float)
    if spec.kind == "call":
        out = np.maximum(s - spec.strike, 0.0)
    elif spec.kind == "put":
        out = np.maximum(spec.strike - s, 0.0)
    elif spec.kind == "digital":
        out = (s > spec.strike).astype(float)
    else:
        out = np.interp(s, spec.breakpoints, spec.table_values)
    return float(out) if out.ndim == 0 else out


def sample_increments(p: GbmParams, n_paths: int, seed: int = 0) -> np.ndarray:
    """Gaussian step increments, shape (n_paths, n_steps), for diagnostics only."""
    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(p.dt), size=(n_paths, p.n_steps))

"""Drift/diffusion pairs and the numerical Osgood / growth-condition checks.

A :class:`ModelSpec` bundles a drift ``b`` and a diffusion ``sigma``.  All
catalog functions are picklable callables (not lambdas) so that models can be
shipped to worker processes.

The drift is only meaningful on ``x >= 0``; catalog drifts evaluate at
``max(x, 0)`` so that a scheme allowed to dip below zero still sees a
nonnegative, nondecreasing drift.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy import integrate

from .errors import ModelDomainError, NumericError
from .expr import Expression

__all__ = [
    "ModelSpec",
    "GridSpec",
    "AssumptionReport",
    "OsgoodSum",
    "make_model",
    "drift_from_key",
    "sigma_from_key",
    "osgood_catalog",
    "osgood_integral",
    "osgood_sum",
    "osgood_partial_integrals",
    "osgood_time",
    "check_ratio_condition",
    "check_growth_bound",
    "compute_d1_d2",
    "assumption_report",
    "classify_tail",
    "DRIFT_CATALOG",
    "SIGMA_CATALOG",
    "PowerDrift",
    "LinearDrift",
    "XLogDrift",
    "KPPDrift",
    "ExpDrift",
    "ZeroFunc",
    "LinearSigma",
    "SqrtSigma",
    "BoundedSigma",
    "PowerSigma",
    "ExprFunc",
    "ScaledFunc",
]

LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# catalog functions


class _Func:
    """Base for catalog functions: picklable, comparable, with a readable name."""

    key = "?"

    def params(self) -> dict:
        return {k: v for k, v in vars(self).items()}

    def __repr__(self):
        args = ", ".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.key}({args})"

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((self.key, tuple(sorted(self.params().items()))))

    def log_at_log(self, s: float) -> float:
        """log(h(e^s)), safe for arguments far beyond the float range."""
        if s < 700.0:
            with np.errstate(all="ignore"):
                val = float(self(np.exp(s)))
            if val > 0 and math.isfinite(val):
                return math.log(val)
            if val <= 0:
                return -math.inf
        return float(mpmath.log(self.mp(mpmath.exp(s))))

    def mp(self, x):
        raise NotImplementedError


class PowerDrift(_Func):
    key = "power"

    def __init__(self, p: float = 2.0, c: float = 1.0):
        self.p = float(p)
        self.c = float(c)

    def __call__(self, x):
        return self.c * np.maximum(x, 0.0) ** self.p

    def mp(self, x):
        return self.c * mpmath.mpf(x) ** self.p

    def log_at_log(self, s):
        return math.log(self.c) + self.p * s if self.c > 0 else -math.inf


class LinearDrift(PowerDrift):
    key = "linear"

    def __init__(self, c: float = 1.0):
        super().__init__(1.0, c)

    def params(self):
        return {"c": self.c}


class XLogDrift(_Func):
    """b(x) = c * x * log(e + x)**k."""

    key = "xlog"

    def __init__(self, k: float = 2.0, c: float = 1.0):
        self.k = float(k)
        self.c = float(c)

    def __call__(self, x):
        x = np.maximum(x, 0.0)
        return self.c * x * np.log(math.e + x) ** self.k

    def mp(self, x):
        x = mpmath.mpf(x)
        return self.c * x * mpmath.log(mpmath.e + x) ** self.k

    def log_at_log(self, s):
        # log(e + e^s) = logaddexp(1, s)
        return math.log(self.c) + s + self.k * math.log(np.logaddexp(1.0, s))


class KPPDrift(_Func):
    """Monostable saturating drift b(x) = r x / (1 + x/K): linear at 0, bounded by r K."""

    key = "kpp"

    def __init__(self, r: float = 1.0, K: float = 1.0):
        self.r = float(r)
        self.K = float(K)

    def __call__(self, x):
        x = np.maximum(x, 0.0)
        return self.r * x / (1.0 + x / self.K)

    def mp(self, x):
        x = mpmath.mpf(x)
        return self.r * x / (1 + x / self.K)

    def log_at_log(self, s):
        # r K / (1 + K e^{-s})
        return math.log(self.r * self.K) - math.log1p(self.K * math.exp(-s)) if s > -700 else math.log(self.r) + s


class ExpDrift(_Func):
    """b(x) = c * exp(x); Osgood-finite but outside the ratio condition."""

    key = "exp"

    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def __call__(self, x):
        return self.c * np.exp(np.maximum(x, 0.0))

    def mp(self, x):
        return self.c * mpmath.exp(mpmath.mpf(x))

    def log_at_log(self, s):
        return math.log(self.c) + (math.exp(s) if s < 700 else math.inf)


class ZeroFunc(_Func):
    key = "zero"

    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def mp(self, x):
        return mpmath.mpf(0)


class LinearSigma(_Func):
    key = "linear"

    def __init__(self, beta: float = 1.0):
        self.beta = float(beta)

    def __call__(self, x):
        return self.beta * np.asarray(x, dtype=float)

    def mp(self, x):
        return self.beta * mpmath.mpf(x)


class SqrtSigma(_Func):
    """sigma(x) = beta x / sqrt(1 + |x|): Lipschitz at 0, grows like sqrt(x)."""

    key = "sqrt"

    def __init__(self, beta: float = 1.0):
        self.beta = float(beta)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.beta * x / np.sqrt(1.0 + np.abs(x))

    def mp(self, x):
        x = mpmath.mpf(x)
        return self.beta * x / mpmath.sqrt(1 + abs(x))


class BoundedSigma(_Func):
    """sigma(x) = beta x / (1 + |x|)."""

    key = "bounded"

    def __init__(self, beta: float = 1.0):
        self.beta = float(beta)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.beta * x / (1.0 + np.abs(x))

    def mp(self, x):
        x = mpmath.mpf(x)
        return self.beta * x / (1 + abs(x))


class PowerSigma(_Func):
    """sigma(x) = beta * |x|^q * sign(x)."""

    key = "power"

    def __init__(self, q: float = 1.0, beta: float = 1.0):
        self.q = float(q)
        self.beta = float(beta)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.beta * np.sign(x) * np.abs(x) ** self.q

    def mp(self, x):
        x = mpmath.mpf(x)
        return self.beta * mpmath.sign(x) * abs(x) ** self.q


class ExprFunc(_Func):
    key = "expr"

    def __init__(self, expr: str):
        self.expr = Expression(expr) if isinstance(expr, str) else expr

    def params(self):
        return {"expr": self.expr.source}

    def __call__(self, x):
        return self.expr(x)

    def mp(self, x):
        return self.expr.mp(x)


class ScaledFunc(_Func):
    key = "scaled"

    def __init__(self, base: _Func, scale: float):
        self.base = base
        self.scale = float(scale)

    def params(self):
        return {"base": repr(self.base), "scale": self.scale}

    def __call__(self, x):
        return self.scale * self.base(x)

    def mp(self, x):
        return self.scale * self.base.mp(x)


DRIFT_CATALOG = {
    "power": (PowerDrift, {"p": 2.0, "c": 1.0}),
    "linear": (LinearDrift, {"c": 1.0}),
    "xlog": (XLogDrift, {"k": 2.0, "c": 1.0}),
    "kpp": (KPPDrift, {"r": 1.0, "K": 1.0}),
    "exp": (ExpDrift, {"c": 1.0}),
    "zero": (ZeroFunc, {}),
}

SIGMA_CATALOG = {
    "linear": (LinearSigma, {"beta": 1.0}),
    "sqrt": (SqrtSigma, {"beta": 1.0}),
    "bounded": (BoundedSigma, {"beta": 1.0}),
    "power": (PowerSigma, {"q": 1.0, "beta": 1.0}),
    "zero": (ZeroFunc, {}),
}


def _from_catalog(catalog, key, params, what):
    if key == "expr":
        if "expr" not in params:
            raise ModelDomainError(f"{what} 'expr' needs an expression")
        return ExprFunc(params["expr"])
    if key not in catalog:
        raise ModelDomainError(f"unknown {what} {key!r}; choose from {sorted(catalog)} or 'expr'")
    cls, defaults = catalog[key]
    unknown = set(params) - set(defaults)
    if unknown:
        raise ModelDomainError(f"unknown parameters for {what} {key!r}: {sorted(unknown)}")
    return cls(**{**defaults, **params})


def drift_from_key(key: str, **params) -> _Func:
    return _from_catalog(DRIFT_CATALOG, key, params, "drift")


def sigma_from_key(key: str, **params) -> _Func:
    return _from_catalog(SIGMA_CATALOG, key, params, "sigma")


# --------------------------------------------------------------------------
# model spec


@dataclass(frozen=True)
class ModelSpec:
    """The pair (b, sigma) plus the structural flags the solvers rely on."""

    drift: Callable
    diffusion: Callable
    name: str = ""
    drift_monotone: bool = True
    sigma_global_lipschitz: bool = True

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", f"{self.drift!r}+{self.diffusion!r}")

    @property
    def drift_is_zero(self) -> bool:
        return isinstance(self.drift, ZeroFunc)

    @property
    def sigma_is_zero(self) -> bool:
        d = self.diffusion
        return isinstance(d, ZeroFunc) or (isinstance(d, ScaledFunc) and d.scale == 0.0)

    def b(self, x):
        return self.drift(x)

    def sigma(self, x):
        return self.diffusion(x)

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return self.drift(x) / x

    def g(self, x):
        x = np.asarray(x, dtype=float)
        return self.diffusion(x) / x

    def log_b_at_log(self, s: float) -> float:
        """log b(e^s); falls back to mpmath for huge arguments."""
        fn = getattr(self.drift, "log_at_log", None)
        if fn is not None:
            return fn(s)
        with np.errstate(all="ignore"):
            val = float(self.drift(np.exp(s)))
        return math.log(val) if val > 0 else -math.inf

    def with_sigma_scale(self, scale: float) -> "ModelSpec":
        return ModelSpec(
            self.drift,
            ScaledFunc(self.diffusion, scale),
            name=f"{self.name}*sigma{scale:g}",
            drift_monotone=self.drift_monotone,
            sigma_global_lipschitz=self.sigma_global_lipschitz,
        )

    def validate(self, grid: "GridSpec | None" = None) -> None:
        """Check the sampled invariants: b >= 0, sigma(0) = 0, monotone b if flagged."""
        xs = np.concatenate([[0.0], (grid or GridSpec(1e-3, 1e8, 200)).points()])
        bx = self.drift(xs)
        if np.any(~np.isfinite(bx)) or np.any(bx < 0):
            raise ModelDomainError(f"{self.name}: drift negative or non-finite on sample grid")
        if float(self.diffusion(np.array(0.0))) != 0.0:
            raise ModelDomainError(f"{self.name}: sigma(0) != 0")
        if self.drift_monotone and np.any(np.diff(bx) < 0):
            raise ModelDomainError(f"{self.name}: drift flagged monotone but decreases on sample grid")


def make_model(drift: str = "power", sigma: str = "linear", *, drift_params=None, sigma_params=None,
               name: str = "", drift_monotone: bool = True) -> ModelSpec:
    """Build a model from catalog keys, e.g. ``make_model("power", "linear", drift_params={"p": 2})``."""
    b = drift_from_key(drift, **(drift_params or {}))
    s = sigma_from_key(sigma, **(sigma_params or {}))
    lipschitz = not (isinstance(s, PowerSigma) and s.q > 1) and not isinstance(s, ExprFunc)
    return ModelSpec(b, s, name=name, drift_monotone=drift_monotone, sigma_global_lipschitz=lipschitz)


def osgood_catalog() -> list[ModelSpec]:
    """Drifts spanning both Osgood regimes (sigma is irrelevant for these checks)."""
    drifts = [
        PowerDrift(2.0), PowerDrift(1.5), PowerDrift(3.0), XLogDrift(2.0),
        XLogDrift(1.0), LinearDrift(), KPPDrift(),
    ]
    return [ModelSpec(b, LinearSigma()) for b in drifts]


# --------------------------------------------------------------------------
# sampling grids


@dataclass(frozen=True)
class GridSpec:
    """Log-spaced sample grid: points 10**(k/points_per_decade) in [lo, hi] plus both endpoints.

    Doubling ``points_per_decade`` yields a superset of points, so grid sups are
    monotone under that refinement.
    """

    lo: float = 1.0
    hi: float = 1e8
    points_per_decade: int = 10_000

    def points(self, start: float | None = None) -> np.ndarray:
        lo = self.lo if start is None else max(self.lo, start)
        if not (0 < lo <= self.hi):
            raise ModelDomainError(f"empty grid [{lo}, {self.hi}]")
        m = self.points_per_decade
        k0 = math.ceil(math.log10(lo) * m)
        k1 = math.floor(math.log10(self.hi) * m)
        ks = np.arange(k0, k1 + 1)
        pts = 10.0 ** (ks / m)
        pts = pts[(pts >= lo) & (pts <= self.hi)]
        return np.unique(np.concatenate([[lo], pts, [self.hi]]))

    def describe(self) -> str:
        return f"log grid [{self.lo:g}, {self.hi:g}], {self.points_per_decade} pts/decade"


DEFAULT_GRID = GridSpec()


# --------------------------------------------------------------------------
# Osgood integral and dyadic sum


def _quad_log(model: ModelSpec, s0: float, s1: float, tol: float):
    """Integrate e^s / b(e^s) over [s0, s1] (i.e. dx/b(x) over [e^s0, e^s1])."""

    def integrand(s):
        lb = model.log_b_at_log(s)
        if not math.isfinite(lb):
            raise ModelDomainError(f"{model.name}: drift vanishes at x = e^{s:.6g}")
        return math.exp(s - lb)

    # geometric breakpoints keep each piece well scaled when the range is long
    edges = [s0]
    width = 1.0
    while edges[-1] + width < s1:
        edges.append(edges[-1] + width)
        width *= 2.0
    edges.append(s1)
    total = 0.0
    err = 0.0
    per_piece = tol / (len(edges) - 1)
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            # the returned error estimate is checked by the caller
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(integrand, a, b, epsabs=per_piece, epsrel=1e-14, limit=200)
        total += val
        err += e
    return total, err


def osgood_integral(model: ModelSpec, lower: float, upper: float, tol: float = 1e-10) -> float:
    """Adaptive-quadrature estimate of the integral of 1/b over [lower, upper].

    The integration runs in ``s = log x`` so that ranges like ``[e, e**1e6]``
    stay well conditioned; ``b`` is evaluated through ``log b(e^s)``.

    Raises
    ------
    ModelDomainError
        If ``b`` vanishes on the interval.
    NumericError
        If the error estimate exceeds ``tol``; ``best_estimate`` holds the value.
    """
    if not (0 < lower < upper):
        raise ModelDomainError(f"need 0 < lower < upper, got [{lower}, {upper}]")
    return osgood_integral_log(model, math.log(lower), math.log(upper), tol)


def osgood_integral_log(model: ModelSpec, log_lower: float, log_upper: float, tol: float = 1e-10,
                        rtol: float = 0.0) -> float:
    """Same as :func:`osgood_integral` with the limits given as logarithms.

    ``rtol`` relaxes the accepted error to ``max(tol, rtol * value)``.
    """
    probe = np.linspace(log_lower, log_upper, 65)
    if any(not math.isfinite(model.log_b_at_log(float(s))) for s in probe):
        raise ModelDomainError(f"{model.name}: drift vanishes on [e^{log_lower:g}, e^{log_upper:g}]")
    val, err = _quad_log(model, log_lower, log_upper, tol)
    if not err <= max(tol, rtol * abs(val)):
        raise NumericError(f"quadrature error estimate {err:.3g} exceeds tol {tol:.3g}", best_estimate=val)
    return val


def classify_tail(terms: Sequence[float], indices: Sequence[int], window: int = 10,
                  r_max: float = 0.95, q_div: float = 1.1, q_conv: float = 1.5) -> str:
    """Convergence verdict for a positive series from its last ``window`` terms.

    * ``convergent`` if every consecutive ratio in the window is <= ``r_max``
      (geometric decay), or if the log-log decay exponent q of the terms
      against their index is >= ``q_conv``;
    * ``divergent`` if q <= ``q_div`` (terms decay no faster than the
      harmonic series; constant or growing terms give q <= 0);
    * ``inconclusive`` otherwise.
    """
    a = np.asarray(terms, dtype=float)[-(window + 1):]
    n = np.asarray(indices, dtype=float)[-(window + 1):]
    if len(a) < window + 1:
        return "inconclusive"
    if np.any(a <= 0) or np.any(~np.isfinite(a)):
        raise ModelDomainError("series terms must be positive and finite")
    if np.all(a[1:] / a[:-1] <= r_max):
        return "convergent"
    mask = n > 0
    q = -np.polyfit(np.log(n[mask]), np.log(a[mask]), 1)[0]
    if q <= q_div:
        return "divergent"
    if q >= q_conv:
        return "convergent"
    return "inconclusive"


@dataclass(frozen=True)
class OsgoodSum:
    indices: np.ndarray
    terms: np.ndarray
    partial_sums: np.ndarray
    verdict: str

    @property
    def last(self) -> float:
        return float(self.partial_sums[-1])


def _dyadic_term(model: ModelSpec, n: int) -> float:
    x = 2.0 ** n
    if n < 1000:
        with np.errstate(all="ignore"):
            bx = float(model.drift(np.array(x)))
        if bx > 0 and math.isfinite(bx):
            return x / bx
        if bx == 0:
            raise ModelDomainError(f"{model.name}: b(2^{n}) = 0")
    lb = model.log_b_at_log(n * LN2)
    if not math.isfinite(lb):
        raise ModelDomainError(f"{model.name}: b(2^{n}) = 0")
    return math.exp(n * LN2 - lb)


def osgood_sum(model: ModelSpec, n_max: int = 60, n_min: int = 0) -> OsgoodSum:
    """Partial sums of 2^n / b(2^n) for n = n_min..n_max, with a tail verdict.

    Terms are evaluated directly while ``2^n`` and ``b(2^n)`` are representable,
    so exact binary cases (``b = x^2``) give exact partial sums.
    """
    if n_max < n_min:
        raise ModelDomainError("n_max < n_min")
    idx = np.arange(n_min, n_max + 1)
    terms = np.array([_dyadic_term(model, int(n)) for n in idx])
    sums = np.empty_like(terms)
    acc = 0.0
    for i, t in enumerate(terms):
        acc += t
        sums[i] = acc
    return OsgoodSum(idx, terms, sums, classify_tail(terms, idx))


def osgood_partial_integrals(model: ModelSpec, n_max: int = 60, n_min: int = 0, tol: float = 1e-12):
    """Dyadic increments of the Osgood integral, their partial sums and a verdict.

    Increment n is the quadrature value of the integral of 1/b over [2^n, 2^(n+1)].
    """
    idx = np.arange(n_min, n_max + 1)
    incs = np.array([osgood_integral_log(model, n * LN2, (n + 1) * LN2, tol, rtol=1e-10) for n in idx])
    return OsgoodSum(idx, incs, np.cumsum(incs), classify_tail(incs, idx))


def osgood_time(model: ModelSpec, c: float, tol: float = 1e-10, max_blocks: int = 2000) -> float:
    """Blowup time of u' = b(u), u(0) = c, i.e. the integral of 1/b over [c, inf).

    Returns ``math.inf`` when the dyadic-sum verdict is divergent.  Otherwise
    the integral is accumulated over blocks [s_k, s_{k+1}] in ``s = log x``
    whose widths double (1, 2, 4, ...).  Over such blocks both power-law and
    log-type tails decay geometrically, so once the last three block ratios
    are below 0.95 the remaining mass is estimated as a geometric tail and the
    loop stops when that estimate drops below ``tol / 2``.
    """
    if c <= 0:
        raise ModelDomainError("initial value must be positive")
    n0 = max(0, math.floor(math.log2(c)))
    verdict = osgood_sum(model, n_max=n0 + 60, n_min=n0).verdict
    if verdict == "divergent":
        return math.inf
    if verdict == "inconclusive":
        raise NumericError(f"{model.name}: Osgood verdict inconclusive at c={c:g}")
    s = math.log(c)
    width = 1.0
    total = 0.0
    blocks: list[float] = []
    block_tol = tol * 1e-3
    for _ in range(max_blocks):
        d = osgood_integral_log(model, s, s + width, block_tol, rtol=1e-13)
        total += d
        blocks.append(d)
        s += width
        width *= 2.0
        if d == 0.0:
            return total
        if len(blocks) >= 4:
            ratios = [blocks[-i] / blocks[-i - 1] for i in (1, 2, 3)]
            r = max(ratios)
            if r < 0.95:
                tail = d * r / (1.0 - r)
                if tail <= tol / 2:
                    return total + tail
        if not math.isfinite(s + width):
            break
    raise NumericError(f"{model.name}: Osgood tail did not settle within {max_blocks} blocks",
                       best_estimate=total)


# --------------------------------------------------------------------------
# structural assumptions


def check_ratio_condition(h: Callable, gamma: float, c_values: Sequence[float],
                          x_grid: GridSpec = DEFAULT_GRID) -> float:
    """Grid estimate of sup over C in ``c_values`` and x >= gamma of |h(Cx) / h(x)|."""
    if gamma <= 0:
        raise ModelDomainError("gamma must be positive")
    xs = x_grid.points(start=gamma)
    hx = np.asarray(h(xs), dtype=float)
    if np.any(hx == 0) or np.any(~np.isfinite(hx)):
        raise ModelDomainError("h vanishes or is non-finite on the grid")
    best = -math.inf
    for c in c_values:
        if c < 1:
            raise ModelDomainError("C values must be >= 1")
        with np.errstate(over="ignore"):
            r = np.abs(np.asarray(h(c * xs), dtype=float) / hx)
        best = max(best, float(np.max(r)))
    return best


def check_growth_bound(model: ModelSpec, eta: float, x_grid: GridSpec = DEFAULT_GRID,
                       bound: float = 100.0) -> tuple[bool, float]:
    """Grid estimate of max |g(x)| / f(x)^(1/4 - eta) over x >= 1.

    ``ok`` is true when the worst ratio is finite and at most ``bound``.
    """
    xs = x_grid.points(start=1.0)
    if xs[0] < 1:
        raise ModelDomainError("growth bound is stated for x >= 1")
    fx = model.f(xs)
    if np.any(fx <= 0):
        raise ModelDomainError(f"{model.name}: f(x) <= 0 on the grid")
    worst = float(np.max(np.abs(model.g(xs)) / fx ** (0.25 - eta)))
    return bool(math.isfinite(worst) and worst <= bound), worst


def compute_d1_d2(model: ModelSpec, x_grid: GridSpec = DEFAULT_GRID) -> tuple[float, float]:
    """d1 = sup 3 b(64x) / (2 b(x)), d2 = sup g(512 d1 x) / g(x) over the grid."""
    xs = x_grid.points()
    bx = model.b(xs)
    if np.any(bx <= 0):
        raise ModelDomainError(f"{model.name}: b vanishes on the grid")
    with np.errstate(over="ignore"):
        d1 = float(np.max(3.0 * model.b(64.0 * xs) / (2.0 * bx)))
    gx = model.g(xs)
    if np.any(gx == 0):
        raise ModelDomainError(f"{model.name}: g vanishes on the grid")
    d2 = float(np.max(model.g(512.0 * d1 * xs) / gx))
    return d1, d2


@dataclass
class AssumptionReport:
    ratio_sup_f: float
    ratio_sup_g: float
    growth_exponent_ok: bool
    growth_worst_ratio: float
    eta_used: float
    d1: float
    d2: float
    grid_used: str
    gamma: float
    gamma_sensitivity: dict = field(default_factory=dict)


def assumption_report(model: ModelSpec, gamma: float = 1.0, eta: float = 0.125,
                      c_values: Sequence[float] = (1.0, 2.0, 64.0, 512.0),
                      x_grid: GridSpec = GridSpec(1.0, 1e8, 1000)) -> AssumptionReport:
    """Grid-based estimates for the ratio and growth conditions and the constants d1, d2.

    No choice of gamma is made for the caller: the report also lists the sup
    estimates at 2*gamma and 10*gamma so sensitivity to it is visible.
    Quantities that are undefined for the model (e.g. g for sigma = 0) are NaN.
    """

    def safe(fn):
        try:
            return fn()
        except ModelDomainError:
            return math.nan

    sens = {}
    for gm in (gamma, 2 * gamma, 10 * gamma):
        sens[gm] = (safe(lambda: check_ratio_condition(model.f, gm, c_values, x_grid)),
                    safe(lambda: check_ratio_condition(model.g, gm, c_values, x_grid)))
    try:
        ok, worst = check_growth_bound(model, eta, x_grid)
    except ModelDomainError:
        ok, worst = False, math.nan
    try:
        d1, d2 = compute_d1_d2(model, x_grid)
    except ModelDomainError:
        d1 = safe(lambda: float(np.max(3 * model.b(64 * x_grid.points()) / (2 * model.b(x_grid.points())))))
        d2 = math.nan
    return AssumptionReport(
        ratio_sup_f=sens[gamma][0], ratio_sup_g=sens[gamma][1], growth_exponent_ok=ok,
        growth_worst_ratio=worst, eta_used=eta, d1=d1, d2=d2, grid_used=x_grid.describe(),
        gamma=gamma, gamma_sensitivity=sens,
    )

"""Scalar shaping primitives and a small algebra of comparison functions.

This module provides the saturation / dead-zone nonlinearities used by the
shaped parameter estimator, the bounded cover function ``gamma_s`` and a
``GainFn`` wrapper for class-K style comparison functions, including pointwise
composition and the generalized inverse (the ``ominus`` operator).

Everything here is a pure function of its inputs; ``GainFn`` objects are
immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ParameterError",
    "GainClassError",
    "SatParams",
    "GammaSParams",
    "GainFn",
    "sat",
    "dsat",
    "satv",
    "dsatv",
    "dz",
    "ddz",
    "dzv",
    "ddzv",
    "gamma_s",
    "compose",
    "ominus",
    "identity_gain",
    "linear_gain",
    "constant_gain",
    "from_callable",
    "tabulated_gain",
    "validate_gain",
    "verify_cover_bound",
    "CoverBoundReport",
    "gamma_s_check_grid",
    "gamma_s_vec",
    "gamma_s_gain",
    "inverse_gain",
]


class ParameterError(ValueError):
    """Invalid shaping parameters (saturation level, margins, ...)."""


class GainClassError(ValueError):
    """A GainFn violates its declared comparison-function class."""


# --------------------------------------------------------------------------
# saturation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SatParams:
    """Parameters of the smooth nondecreasing scalar saturation.

    ``l_s`` is the saturation level, ``eps_s`` the smoothing margin and
    ``l_theta`` the known parameter-norm bound.  Validity requires
    ``l_s > l_theta > 0`` and ``0 < eps_s <= 1``.
    """

    l_s: float
    eps_s: float
    l_theta: float

    def __post_init__(self) -> None:
        if not (self.l_s > self.l_theta > 0.0):
            raise ParameterError(
                f"need l_s > l_theta > 0, got l_s={self.l_s}, l_theta={self.l_theta}"
            )
        if not (0.0 < self.eps_s <= 1.0):
            raise ParameterError(f"need 0 < eps_s <= 1, got eps_s={self.eps_s}")

    @property
    def cap(self) -> float:
        """Componentwise bound of the saturation output, ``l_s + eps_s/2``."""
        return self.l_s + 0.5 * self.eps_s


def sat(s: float, p: SatParams) -> float:
    """Smooth saturation: identity up to ``l_s``, constant past ``l_s+eps_s``."""
    a = abs(s)
    if a <= p.l_s:
        return float(s)
    if a >= p.l_s + p.eps_s:
        return math.copysign(p.cap, s)
    return s - math.copysign((a - p.l_s) ** 2 / (2.0 * p.eps_s), s)


def dsat(s: float, p: SatParams) -> float:
    """Derivative of :func:`sat`; continuous, in [0, 1]."""
    a = abs(s)
    if a <= p.l_s:
        return 1.0
    if a >= p.l_s + p.eps_s:
        return 0.0
    return 1.0 - (a - p.l_s) / p.eps_s


def satv(v: np.ndarray, p: SatParams) -> np.ndarray:
    """Componentwise saturation of a vector (any array shape)."""
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    mid = v - np.sign(v) * (a - p.l_s) ** 2 / (2.0 * p.eps_s)
    out = np.where(a <= p.l_s, v, np.where(a >= p.l_s + p.eps_s, np.sign(v) * p.cap, mid))
    return out


def dsatv(v: np.ndarray, p: SatParams) -> np.ndarray:
    """Componentwise saturation slope (same shape as ``v``)."""
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    mid = 1.0 - (a - p.l_s) / p.eps_s
    return np.where(a <= p.l_s, 1.0, np.where(a >= p.l_s + p.eps_s, 0.0, mid))


# --------------------------------------------------------------------------
# dead zone
# --------------------------------------------------------------------------


def dz(s: float, l_theta: float) -> float:
    """Smooth dead zone: zero on ``[-l_theta, l_theta]``, identity past ``l_theta+1``."""
    if l_theta <= 0.0:
        raise ParameterError(f"need l_theta > 0, got {l_theta}")
    a = abs(s)
    if a <= l_theta:
        return 0.0
    if a >= l_theta + 1.0:
        return float(s)
    val = (a - l_theta) ** 2 * (2.0 * (l_theta + 1.0) ** 2 - (2.0 * l_theta + 1.0) * a)
    return math.copysign(val, s)


def ddz(s: float, l_theta: float) -> float:
    """Derivative of :func:`dz` (continuous at both joins)."""
    a = abs(s)
    if a <= l_theta:
        return 0.0
    if a >= l_theta + 1.0:
        return 1.0
    c = 2.0 * (l_theta + 1.0) ** 2
    b = 2.0 * l_theta + 1.0
    return 2.0 * (a - l_theta) * (c - b * a) - b * (a - l_theta) ** 2


def dzv(v: np.ndarray, l_theta: float) -> np.ndarray:
    """Componentwise dead zone."""
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    c = 2.0 * (l_theta + 1.0) ** 2
    b = 2.0 * l_theta + 1.0
    mid = np.sign(v) * (a - l_theta) ** 2 * (c - b * a)
    return np.where(a <= l_theta, 0.0, np.where(a >= l_theta + 1.0, v, mid))


def ddzv(v: np.ndarray, l_theta: float) -> np.ndarray:
    """Componentwise dead-zone slope."""
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    c = 2.0 * (l_theta + 1.0) ** 2
    b = 2.0 * l_theta + 1.0
    mid = 2.0 * (a - l_theta) * (c - b * a) - b * (a - l_theta) ** 2
    return np.where(a <= l_theta, 0.0, np.where(a >= l_theta + 1.0, 1.0, mid))


# --------------------------------------------------------------------------
# gamma_s: the bounded cover of the saturated estimation error
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaSParams:
    """Parameters of the bounded, strictly increasing cover function.

    The cover is linear up to ``L0`` and then saturates exponentially towards
    ``l_gamma = L0 + margin``.  ``L0`` must dominate ``|satv(theta+tilde) -
    theta|`` for every ``theta`` in the admissible set, which holds with
    ``L0 = sqrt(q) * (l_s + eps_s/2) + l_theta``.
    """

    L0: float
    margin: float = 0.1

    def __post_init__(self) -> None:
        if self.L0 <= 0.0 or self.margin <= 0.0:
            raise ParameterError("L0 and margin must be positive")

    @property
    def l_gamma(self) -> float:
        return self.L0 + self.margin

    @classmethod
    def from_sat(cls, p: SatParams, q: int, margin: float = 0.1) -> "GammaSParams":
        return cls(L0=math.sqrt(q) * p.cap + p.l_theta, margin=margin)


def gamma_s(s: float, g: GammaSParams) -> float:
    """Evaluate the cover function at ``s >= 0``."""
    if s <= g.L0:
        return float(s)
    return g.L0 + g.margin * (1.0 - math.exp(-(s - g.L0) / g.margin))


def gamma_s_vec(s: np.ndarray, g: GammaSParams) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    tail = g.L0 + g.margin * (1.0 - np.exp(-np.maximum(s - g.L0, 0.0) / g.margin))
    return np.where(s <= g.L0, s, tail)


# --------------------------------------------------------------------------
# GainFn: comparison functions as values
# --------------------------------------------------------------------------

_CLASSES = ("K", "Kinf", "SN", "PD")


@dataclass(frozen=True)
class GainFn:
    """A scalar comparison function with a declared class tag.

    ``fn`` maps nonnegative reals to nonnegative reals.  ``sup_limit`` is the
    limit at infinity (finite for bounded class-K functions, ``inf``
    otherwise); it is what makes the generalized inverse well defined.
    """

    fn: Callable[[float], float]
    class_tag: str = "K"
    sup_limit: float = math.inf
    name: str = ""

    def __post_init__(self) -> None:
        if self.class_tag not in _CLASSES:
            raise GainClassError(f"unknown class tag {self.class_tag!r}")

    def __call__(self, s: float) -> float:
        return float(self.fn(float(s)))

    def sample(self, grid: np.ndarray) -> np.ndarray:
        return np.array([self.fn(float(s)) for s in np.asarray(grid, dtype=float)])


def identity_gain() -> GainFn:
    return GainFn(lambda s: s, class_tag="Kinf", name="Id")


def linear_gain(c: float, name: str = "") -> GainFn:
    if c < 0:
        raise ParameterError("linear gain slope must be >= 0")
    tag = "Kinf" if c > 0 else "SN"
    return GainFn(lambda s, c=c: c * s, class_tag=tag,
                  sup_limit=math.inf if c > 0 else 0.0,
                  name=name or f"{c}*s")


def constant_gain(c: float, name: str = "") -> GainFn:
    """A constant nondecreasing (class SN) function."""
    if c < 0:
        raise ParameterError("constant gain must be >= 0")
    return GainFn(lambda s, c=c: c, class_tag="SN", sup_limit=c, name=name or f"const {c}")


def from_callable(fn: Callable[[float], float], class_tag: str = "K",
                  sup_limit: float = math.inf, name: str = "") -> GainFn:
    return GainFn(fn, class_tag=class_tag, sup_limit=sup_limit, name=name)


def gamma_s_gain(g: GammaSParams) -> GainFn:
    """``gamma_s`` wrapped as a bounded class-K GainFn."""
    return GainFn(lambda s, g=g: gamma_s(s, g), class_tag="K",
                  sup_limit=g.l_gamma, name="gamma_s")


def tabulated_gain(xs: Sequence[float], ys: Sequence[float], class_tag: str = "K",
                   tail: str = "linear", name: str = "") -> GainFn:
    """Monotone piecewise-linear gain through ``(xs, ys)`` knots.

    ``ys`` is made nondecreasing by a running maximum.  ``tail`` selects the
    extrapolation beyond the last knot: ``"linear"`` continues with the mean
    slope of the table (unbounded), ``"constant"`` freezes the last value
    (bounded, sup_limit = ys[-1]).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.maximum.accumulate(np.asarray(ys, dtype=float))
    if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ParameterError("knot grid must be strictly increasing with >= 2 points")
    if xs[0] > 0.0:
        # anchor at the origin so class-K tables evaluate to >= 0 everywhere
        xs = np.concatenate([[0.0], xs])
        ys = np.concatenate([[0.0 if class_tag in ("K", "Kinf", "PD") else ys[0]], ys])
    if tail == "linear":
        slope = max((ys[-1] - ys[0]) / (xs[-1] - xs[0]), 1e-12)
        sup_limit = math.inf
    elif tail == "constant":
        slope = 0.0
        sup_limit = float(ys[-1])
    else:
        raise ParameterError(f"unknown tail mode {tail!r}")

    def fn(s: float, xs=xs, ys=ys, slope=slope) -> float:
        if s <= xs[-1]:
            return float(np.interp(s, xs, ys))
        return float(ys[-1] + slope * (s - xs[-1]))

    return GainFn(fn, class_tag=class_tag, sup_limit=sup_limit, name=name)


_DEFAULT_GRID = np.logspace(-9.0, 9.0, 1000)


def validate_gain(g: GainFn, grid: np.ndarray | None = None, tol: float = 1e-12) -> None:
    """Check the declared class by sampling; raises :class:`GainClassError`.

    Monotonicity is checked on a log-spaced grid (default 1e3 points on
    [1e-9, 1e9]); no symbolic verification is attempted.
    """
    grid = _DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    vals = g.sample(grid)
    if not np.all(np.isfinite(vals)):
        raise GainClassError(f"{g.name or 'gain'}: non-finite values on sample grid")
    if np.any(vals < -tol):
        raise GainClassError(f"{g.name or 'gain'}: negative values")
    if g.class_tag in ("K", "Kinf", "PD"):
        v0 = g(0.0)
        if abs(v0) > tol:
            raise GainClassError(f"{g.name or 'gain'}: fn(0)={v0}, expected 0")
    if g.class_tag in ("K", "Kinf"):
        diffs = np.diff(vals)
        if math.isfinite(g.sup_limit):
            # a bounded gain saturates below machine resolution eventually;
            # only demand strict increase while visibly below the limit
            unsaturated = vals[1:] < g.sup_limit * (1.0 - 1e-9)
            bad = (diffs <= 0.0) & unsaturated
            bad |= diffs < -tol
        else:
            bad = diffs <= 0.0
        if np.any(bad):
            raise GainClassError(f"{g.name or 'gain'}: not strictly increasing on samples")
    elif g.class_tag == "SN":
        if np.any(np.diff(vals) < -tol):
            raise GainClassError(f"{g.name or 'gain'}: decreasing on samples")
    elif g.class_tag == "PD":
        if np.any(vals[grid > 0] <= 0.0):
            raise GainClassError(f"{g.name or 'gain'}: not positive definite")
    if math.isfinite(g.sup_limit) and np.any(vals > g.sup_limit * (1.0 + 1e-9) + tol):
        raise GainClassError(f"{g.name or 'gain'}: exceeds declared sup_limit")


def compose(chain: Sequence[GainFn]) -> GainFn:
    """Pointwise composition ``chain[0] ∘ chain[1] ∘ ... ∘ chain[-1]``.

    The class tag is K (Kinf if all factors are Kinf); any SN/PD factor
    makes the result SN-conservative.  The limit at infinity is propagated
    through the chain.
    """
    chain = list(chain)
    if not chain:
        raise ParameterError("empty composition chain")

    def fn(s: float, chain=chain) -> float:
        for g in reversed(chain):
            s = g.fn(s)
        return float(s)

    lim = chain[-1].sup_limit
    for g in reversed(chain[:-1]):
        lim = g.sup_limit if math.isinf(lim) else min(float(g.fn(lim)), g.sup_limit)
    tags = {g.class_tag for g in chain}
    if tags <= {"Kinf"}:
        tag = "Kinf"
    elif tags <= {"K", "Kinf"}:
        tag = "K"
    else:
        tag = "SN"
    name = " o ".join(g.name or "?" for g in chain)
    return GainFn(fn, class_tag=tag, sup_limit=lim, name=name)


def ominus(g: GainFn, s: float, tol: float = 1e-10, check: bool = True) -> float:
    """Generalized inverse ``sup{r >= 0 : g(r) <= s}``.

    Returns ``inf`` for ``s`` at or above the limit of ``g`` at infinity.
    Below the limit the inverse is computed by bracketing (doubling from
    [0, 1]) and bisection to the given tolerance.
    """
    if check and g.class_tag not in ("K", "Kinf", "SN"):
        raise GainClassError("ominus requires a nondecreasing gain")
    if check:
        probe = g.sample(np.logspace(-6, 6, 25))
        if np.any(np.diff(probe) < -1e-12 * np.maximum(1.0, np.abs(probe[:-1]))):
            raise GainClassError(f"{g.name or 'gain'}: non-monotone on probe samples")
    s = float(s)
    if s >= g.sup_limit:
        return math.inf
    lo, hi = 0.0, 1.0
    it = 0
    while g.fn(hi) <= s:
        lo, hi = hi, hi * 2.0
        it += 1
        if it > 2000 or hi > 1e300:
            return math.inf
    # shrink the bracket to relative width `tol` (cap guards the root-at-zero
    # case, where a relative criterion can never be met)
    for _ in range(200):
        if hi - lo <= tol * max(abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if g.fn(mid) <= s:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def inverse_gain(g: GainFn, tol: float = 1e-10, name: str = "") -> GainFn:
    """The generalized inverse wrapped as a GainFn (values may be inf)."""
    return GainFn(lambda s, g=g, tol=tol: ominus(g, s, tol=tol, check=False),
                  class_tag="SN", name=name or f"({g.name})^ominus")


# --------------------------------------------------------------------------
# cover-bound verification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverBoundReport:
    max_violation: float
    n_pairs: int
    passed: bool
    tol: float


def verify_cover_bound(g: GammaSParams, p: SatParams,
                       theta_samples: np.ndarray,
                       tilde_samples: np.ndarray,
                       tol: float = 1e-12) -> CoverBoundReport:
    """Check ``|satv(theta + tilde) - theta| <= gamma_s(|tilde|)`` on a grid.

    ``theta_samples`` must lie in the admissible parameter set (norm at most
    ``l_theta``); ``tilde_samples`` are arbitrary.  The report carries the
    maximal violation over all pairs.  ``tol`` absorbs rounding of the
    ``(theta + tilde) - theta`` cancellation at the equality frontier.
    """
    theta_samples = np.atleast_2d(np.asarray(theta_samples, dtype=float))
    tilde_samples = np.atleast_2d(np.asarray(tilde_samples, dtype=float))
    if theta_samples.size == 0 or tilde_samples.size == 0:
        raise ParameterError("empty sample sets")
    worst = -math.inf
    rhs = gamma_s_vec(np.linalg.norm(tilde_samples, axis=1), g)
    for theta in theta_samples:
        lhs = np.linalg.norm(satv(theta[None, :] + tilde_samples, p) - theta[None, :], axis=1)
        worst = max(worst, float(np.max(lhs - rhs)))
    return CoverBoundReport(max_violation=worst,
                            n_pairs=theta_samples.shape[0] * tilde_samples.shape[0],
                            passed=worst <= tol, tol=tol)


def gamma_s_check_grid(g: GammaSParams, n: int = 100_000) -> np.ndarray:
    """Grid on which the strict-increase of ``gamma_s`` is machine-verifiable.

    Beyond ``L0 + ~25*margin`` the exponential tail increments underflow the
    ULP of ``l_gamma``, so forward differences round to zero there.
    """
    return np.linspace(0.0, g.L0 + 25.0 * g.margin, n)

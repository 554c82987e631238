"""System class, reference trajectories, and numerical sup-estimators.

A :class:`Plant` packages the drift ``f1``, the (possibly nonlinearly)
parameterized term ``phi(theta, x)``, the input matrix ``g1`` and the
admissible parameter set.  The tracking-error dynamics and the saturated
parameter-difference term feed the estimator and controller modules; the
``estimate_kappa`` routine produces the monotone bound functions that enter
every certificate.

Sup-estimation is done by deterministic low-discrepancy sampling on compact
sets plus a declared inflation factor; nothing here claims a certified global
supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .gains import GainFn, ParameterError, SatParams, satv, tabulated_gain

__all__ = [
    "ThetaSet",
    "Plant",
    "Reference",
    "BoundFns",
    "PlantSpecError",
    "plant_rhs",
    "error_rhs",
    "tilde_phi_s",
    "estimate_kappa",
    "sample_ball",
    "sample_box",
]


class PlantSpecError(ValueError):
    """A plant/reference violates its declared structure."""


# --------------------------------------------------------------------------
# sampling helpers (deterministic low-discrepancy)
# --------------------------------------------------------------------------


def _sobol(n: int, d: int, seed: int) -> np.ndarray:
    import warnings

    eng = qmc.Sobol(d=d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # balance is irrelevant for sampled suprema; any n is fine
        warnings.simplefilter("ignore", UserWarning)
        return eng.random(n)


def sample_ball(n: int, d: int, radius: float, seed: int = 0,
                center: np.ndarray | None = None) -> np.ndarray:
    """Low-discrepancy samples of the closed Euclidean ball of given radius."""
    u = _sobol(n, d + 1, seed)
    direction = ndtri(np.clip(u[:, :d], 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    r = radius * u[:, d:] ** (1.0 / d)
    pts = direction / norms * r
    if center is not None:
        pts = pts + np.asarray(center, dtype=float)[None, :]
    return pts


def sample_box(n: int, lo: np.ndarray, hi: np.ndarray, seed: int = 0) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    u = _sobol(n, lo.size, seed)
    return lo[None, :] + u * (hi - lo)[None, :]


# --------------------------------------------------------------------------
# parameter set
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaSet:
    """Compact admissible parameter set: an axis box or a centered ball."""

    kind: Literal["box", "ball"]
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    radius: float | None = None
    dim: int | None = None

    def __post_init__(self) -> None:
        if self.kind == "box":
            if self.lo is None or self.hi is None:
                raise ParameterError("box ThetaSet needs lo and hi")
            lo = np.asarray(self.lo, dtype=float)
            hi = np.asarray(self.hi, dtype=float)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ParameterError("invalid box bounds")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
            object.__setattr__(self, "dim", lo.size)
        elif self.kind == "ball":
            if self.radius is None or self.dim is None or self.radius <= 0:
                raise ParameterError("ball ThetaSet needs positive radius and dim")
        else:
            raise ParameterError(f"unknown ThetaSet kind {self.kind!r}")

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "ThetaSet":
        return cls(kind="box", lo=np.asarray(lo, float), hi=np.asarray(hi, float))

    @classmethod
    def ball(cls, radius: float, dim: int) -> "ThetaSet":
        return cls(kind="ball", radius=radius, dim=dim)

    @property
    def q(self) -> int:
        return int(self.dim)

    def vertices(self) -> np.ndarray:
        """Extreme points: box vertices, or axis points of the ball."""
        if self.kind == "box":
            q = self.q
            out = np.zeros((2**q, q))
            for i in range(2**q):
                for j in range(q):
                    out[i, j] = self.hi[j] if (i >> j) & 1 else self.lo[j]
            return out
        eye = np.eye(self.q) * self.radius
        return np.vstack([eye, -eye])

    @property
    def l_theta(self) -> float:
        """Smallest ball radius covering the set (max norm over extreme points)."""
        return float(np.max(np.linalg.norm(self.vertices(), axis=1)))

    def contains(self, theta: np.ndarray, tol: float = 1e-12) -> bool:
        theta = np.asarray(theta, dtype=float)
        if self.kind == "box":
            return bool(np.all(theta >= self.lo - tol) and np.all(theta <= self.hi + tol))
        return bool(np.linalg.norm(theta) <= self.radius + tol)

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        if self.kind == "box":
            return sample_box(n, self.lo, self.hi, seed=seed)
        return sample_ball(n, self.q, self.radius, seed=seed)


# --------------------------------------------------------------------------
# plant and reference
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Plant:
    """Right-hand side data of ``xdot = f1(x) + phi(theta, x) + g1(x) u``."""

    n: int
    m: int
    q: int
    f1: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g1: Callable[[np.ndarray], np.ndarray]
    dphi_dtheta: Callable[[np.ndarray, np.ndarray], np.ndarray]
    theta_set: ThetaSet
    name: str = ""

    def __post_init__(self) -> None:
        if self.theta_set.q != self.q:
            raise PlantSpecError("theta_set dimension does not match q")

    def validate(self, x_samples: np.ndarray, theta_samples: np.ndarray,
                 fd_tol: float = 1e-4, fd_step: float = 1e-6) -> None:
        """Finite-difference agreement of ``dphi_dtheta`` with ``phi``."""
        for x in np.atleast_2d(x_samples):
            for theta in np.atleast_2d(theta_samples):
                jac = np.asarray(self.dphi_dtheta(theta, x), dtype=float)
                if jac.shape != (self.n, self.q):
                    raise PlantSpecError(f"dphi_dtheta shape {jac.shape} != ({self.n},{self.q})")
                fd = np.empty_like(jac)
                for k in range(self.q):
                    dk = np.zeros(self.q)
                    dk[k] = fd_step
                    fd[:, k] = (np.asarray(self.phi(theta + dk, x))
                                - np.asarray(self.phi(theta - dk, x))) / (2 * fd_step)
                err = np.max(np.abs(fd - jac)) / max(1.0, np.max(np.abs(jac)))
                if err > fd_tol:
                    raise PlantSpecError(
                        f"dphi_dtheta disagrees with finite differences (rel err {err:.2e})")


@dataclass(frozen=True)
class Reference:
    """Bounded C1 reference trajectory known together with its derivative."""

    x_r: Callable[[float], np.ndarray]
    dx_r: Callable[[float], np.ndarray]
    r1: float
    t_max: float
    period: float | None = None

    def validate(self, n_check: int = 200, fd_tol: float = 1e-4) -> None:
        ts = np.linspace(0.0, self.t_max, n_check)
        h = 1e-6
        for t in ts:
            xr = np.asarray(self.x_r(t), dtype=float)
            if np.linalg.norm(xr) > self.r1 + 1e-9:
                raise PlantSpecError(f"|x_r({t})| = {np.linalg.norm(xr)} exceeds r1 = {self.r1}")
            fd = (np.asarray(self.x_r(t + h)) - np.asarray(self.x_r(max(t - h, 0.0)))) / (
                h + min(t, h))
            if np.max(np.abs(fd - np.asarray(self.dx_r(t)))) > fd_tol:
                raise PlantSpecError(f"dx_r disagrees with finite differences at t={t}")


# --------------------------------------------------------------------------
# right-hand sides
# --------------------------------------------------------------------------


def plant_rhs(plant: Plant, x: np.ndarray, theta: np.ndarray, u: np.ndarray,
              d: np.ndarray | None = None) -> np.ndarray:
    """``f1(x) + phi(theta, x) + g1(x) (u + d)``; ``d`` defaults to zero."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (plant.n,) or u.shape != (plant.m,):
        raise PlantSpecError(f"dimension mismatch: x{x.shape}, u{u.shape}")
    ud = u if d is None else u + np.asarray(d, dtype=float)
    return (np.asarray(plant.f1(x), dtype=float)
            + np.asarray(plant.phi(np.asarray(theta, float), x), dtype=float)
            + np.asarray(plant.g1(x), dtype=float) @ ud)


def error_rhs(plant: Plant, ref: Reference, e: np.ndarray, t: float,
              theta: np.ndarray, u: np.ndarray,
              d: np.ndarray | None = None) -> np.ndarray:
    """Tracking-error dynamics: ``plant_rhs(e + x_r(t), ...) - dx_r(t)``."""
    if not (0.0 <= t <= ref.t_max):
        raise PlantSpecError(f"t={t} outside reference horizon [0, {ref.t_max}]")
    x = np.asarray(e, dtype=float) + np.asarray(ref.x_r(t), dtype=float)
    return plant_rhs(plant, x, theta, u, d) - np.asarray(ref.dx_r(t), dtype=float)


def tilde_phi_s(plant: Plant, p: SatParams, theta_dag: np.ndarray,
                theta_ddag: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Saturated parameter-difference term
    ``phi(satv(theta_dag + theta_ddag), x) - phi(satv(theta_dag), x)``."""
    theta_dag = np.asarray(theta_dag, dtype=float)
    theta_ddag = np.asarray(theta_ddag, dtype=float)
    a = np.asarray(plant.phi(satv(theta_dag + theta_ddag, p), x), dtype=float)
    b = np.asarray(plant.phi(satv(theta_dag, p), x), dtype=float)
    return a - b


# --------------------------------------------------------------------------
# kappa estimation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundFns:
    """The four comparison-function bounds used by the certificates."""

    kappa1: GainFn
    kappa2: GainFn
    kappa3: GainFn | None = None
    kappa4: GainFn | None = None
    kappa3_star: float = 0.0
    kappa4_star: float = 0.0


def _xr_samples(reference: Reference, mode: str, n: int, seed: int,
                n_dim: int) -> np.ndarray:
    if mode == "trajectory":
        ts = np.linspace(0.0, reference.t_max, n)
        return np.array([np.asarray(reference.x_r(t), float) for t in ts])
    if mode == "ball":
        return sample_ball(n, n_dim, reference.r1, seed=seed)
    raise ParameterError(f"unknown xr_mode {mode!r}")


def estimate_kappa(plant: Plant, reference: Reference, sat_params: SatParams,
                   which: int, radius_grid: Sequence[float],
                   varsigma: Callable[[np.ndarray], np.ndarray] | None = None,
                   n_samples: int = 4096, seed: int = 1234,
                   inflation: float = 1.05, xr_mode: str = "ball",
                   x_floor: Callable[[np.ndarray], np.ndarray] | None = None) -> GainFn:
    """Grid-sampled supremum bound, returned as a monotone piecewise-linear gain.

    ``which`` selects the quantity:

    * 1: sup of the theta-Jacobian norm of ``phi`` over the saturation-range
      ball x reference set x error ball of each radius (class SN).
    * 2: the summed row-norm bound of the varsigma-weighted difference
      function (class K, pinned to 0 at radius 0); requires ``varsigma``.
    * 3: excess of ``||g1(e + x_r)||`` over its reference-set supremum.
    * 4: excess of ``||varsigma(e + x_r)||`` over its reference-set supremum.

    ``xr_mode`` chooses reference samples from the ball of radius ``r1``
    (default) or from the trajectory itself; ``x_floor`` optionally clamps
    evaluation points away from singularities of ``phi``.
    """
    radius_grid = np.asarray(radius_grid, dtype=float)
    if radius_grid.size == 0:
        raise ParameterError("empty radius grid")
    if np.any(np.diff(radius_grid) <= 0) or np.any(radius_grid < 0):
        raise ParameterError("radius grid must be nonnegative and increasing")
    if which in (2, 4) and varsigma is None:
        raise ParameterError("kappa2/kappa4 need varsigma")

    n_pts = n_samples
    theta_pts = sample_ball(n_pts, plant.q, sat_params.cap, seed=seed)
    xr_pts = _xr_samples(reference, xr_mode, n_pts, seed + 1, plant.n)
    e_unit = sample_ball(n_pts, plant.n, 1.0, seed=seed + 2)

    def clamp(x: np.ndarray) -> np.ndarray:
        return x if x_floor is None else x_floor(x)

    if which == 3:
        star = max(float(np.linalg.norm(np.asarray(plant.g1(clamp(xr)), float), 2))
                   for xr in xr_pts[: min(n_pts, 1024)])
    elif which == 4:
        star = max(float(np.linalg.norm(np.asarray(varsigma(clamp(xr)), float), 2))
                   for xr in xr_pts[: min(n_pts, 1024)])
    else:
        star = 0.0

    values = np.zeros(radius_grid.size)
    for gi, s in enumerate(radius_grid):
        worst = 0.0
        if which == 2 and s == 0.0:
            values[gi] = 0.0
            continue
        for k in range(n_pts):
            xr = xr_pts[k]
            x = clamp(xr + s * e_unit[k])
            theta = theta_pts[k]
            if which == 1:
                val = float(np.linalg.norm(
                    np.asarray(plant.dphi_dtheta(theta, x), float), 2))
            elif which == 2:
                xr_c = clamp(xr)
                j1 = np.asarray(varsigma(xr_c), float) @ np.asarray(
                    plant.dphi_dtheta(theta, xr_c), float)
                j2 = np.asarray(varsigma(x), float) @ np.asarray(
                    plant.dphi_dtheta(theta, x), float)
                val = float(np.sum(np.linalg.norm(j1 - j2, axis=1)))
            elif which == 3:
                val = max(0.0, float(np.linalg.norm(
                    np.asarray(plant.g1(x), float), 2)) - star)
            elif which == 4:
                val = max(0.0, float(np.linalg.norm(
                    np.asarray(varsigma(x), float), 2)) - star)
            else:
                raise ParameterError(f"which must be 1..4, got {which}")
            worst = max(worst, val)
        if not math.isfinite(worst):
            raise PlantSpecError(f"kappa{which}: non-finite supremum at radius {s}")
        values[gi] = worst * inflation

    values = np.maximum.accumulate(values)
    if which == 1:
        xs = np.concatenate([[0.0], radius_grid]) if radius_grid[0] > 0 else radius_grid
        ys = np.concatenate([[values[0]], values]) if radius_grid[0] > 0 else values
        # class SN: constant below the first grid radius, running max above
        g = tabulated_gain(xs, ys, class_tag="SN", tail="linear", name="kappa1")
        return GainFn(lambda s, g=g: g.fn(max(s, 0.0)), class_tag="SN",
                      sup_limit=g.sup_limit, name="kappa1")
    grid0 = radius_grid if radius_grid[0] == 0.0 else np.concatenate([[0.0], radius_grid])
    vals0 = values if radius_grid[0] == 0.0 else np.concatenate([[0.0], values])
    if which in (2, 3, 4):
        vals0 = vals0.copy()
        vals0[0] = 0.0
        # strictly increasing knots so the table is a class-K function
        bump = 1e-12 * np.maximum(1.0, vals0[-1]) * np.arange(vals0.size)
        vals0 = np.maximum.accumulate(vals0) + bump
        vals0[0] = 0.0
    return tabulated_gain(grid0, vals0, class_tag="K", tail="linear",
                          name=f"kappa{which}")

"""Shaped parameter estimator: manifold-shaping and filter-based variants.

Two interchangeable designs live here.  The first uses a closed-form shaping
function ``beta`` whose error-direction Jacobian equals ``varsigma``; the
second replaces ``beta`` by ``varsigma(e_hat + x_r) e`` with ``e_hat`` the
state of an auxiliary filter, removing the need for the shaping integral to
exist in closed form.

The true parameter never enters any right-hand side computed here except
through the auxiliary field ``H`` and the diagnostic ``estimation_error``,
both of which belong to the verification harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gains import ParameterError, SatParams, dzv, satv
from .plant import Plant, Reference, sample_ball, tilde_phi_s

__all__ = [
    "ShapingFns",
    "EstimatorState",
    "DeadzoneGain",
    "estimation_error",
    "estimator_rhs",
    "H_field",
    "dH_dtilde",
    "beta_a",
    "dbeta_a_dehat",
    "filter_rhs",
    "estimator_filtered_rhs",
    "select_kdz",
    "fd_dvarsigma",
]


@dataclass(frozen=True)
class ShapingFns:
    """Shaping data: ``varsigma`` and, when available, the closed-form ``beta``.

    ``beta`` and its Jacobians are present only for the closed-form variant;
    ``dvarsigma`` (the q x n x n array of partials of ``varsigma``) is needed
    by the filter-based variant.
    """

    varsigma: Callable[[np.ndarray], np.ndarray]
    beta: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    dbeta_de: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    dbeta_dxr: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    dvarsigma: Callable[[np.ndarray], np.ndarray] | None = None

    def check_pde(self, e: np.ndarray, x_r: np.ndarray, tol: float = 1e-6) -> float:
        """Deviation of ``dbeta_de(e, x_r)`` from ``varsigma(e + x_r)``."""
        if self.dbeta_de is None:
            raise ParameterError("shaping has no closed-form beta")
        lhs = np.asarray(self.dbeta_de(e, x_r), dtype=float)
        rhs = np.asarray(self.varsigma(np.asarray(e) + np.asarray(x_r)), dtype=float)
        return float(np.max(np.abs(lhs - rhs)))


@dataclass
class EstimatorState:
    theta_hat: np.ndarray
    e_hat: np.ndarray | None = None


@dataclass(frozen=True)
class DeadzoneGain:
    k_dz: float
    k_dz_star: float
    r3: float
    r4: float
    max_m1_norm: float

    def __post_init__(self) -> None:
        if self.k_dz <= 0:
            raise ParameterError("k_dz must be positive")


def estimation_error(theta_hat: np.ndarray, theta_true: np.ndarray, e: np.ndarray,
                     x_r: np.ndarray, shaping: ShapingFns) -> np.ndarray:
    """Diagnostic shaped estimation error ``theta_hat - theta + beta(e, x_r)``.

    The true parameter is harness-only; controller and estimator code paths
    never call this.
    """
    if shaping.beta is None:
        raise ParameterError("closed-form beta required for estimation_error")
    return (np.asarray(theta_hat, float) - np.asarray(theta_true, float)
            + np.asarray(shaping.beta(np.asarray(e, float), np.asarray(x_r, float)), float))


def estimator_rhs(theta_hat: np.ndarray, e: np.ndarray, x_r: np.ndarray,
                  dx_r: np.ndarray, u: np.ndarray, plant: Plant,
                  shaping: ShapingFns, p: SatParams, k_dz: float) -> np.ndarray:
    """Closed-form-shaping estimator update.

    Applies the shaped-model drift through the error-direction Jacobian of
    ``beta``, compensates the reference motion, and adds the dead-zone pull
    that is active only outside the known parameter ball.
    """
    if shaping.dbeta_de is None or shaping.dbeta_dxr is None or shaping.beta is None:
        raise ParameterError("estimator_rhs needs beta and both Jacobians")
    theta_hat = np.asarray(theta_hat, float)
    e = np.asarray(e, float)
    x_r = np.asarray(x_r, float)
    x = e + x_r
    w = theta_hat + np.asarray(shaping.beta(e, x_r), float)
    drift = (np.asarray(plant.f1(x), float)
             + np.asarray(plant.phi(satv(w, p), x), float)
             + np.asarray(plant.g1(x), float) @ np.atleast_1d(u)
             - np.asarray(dx_r, float))
    return (-np.asarray(shaping.dbeta_de(e, x_r), float) @ drift
            - np.asarray(shaping.dbeta_dxr(e, x_r), float) @ np.asarray(dx_r, float)
            - k_dz * dzv(w, p.l_theta))


def H_field(theta: np.ndarray, tilde_theta: np.ndarray, x_r: np.ndarray,
            plant: Plant, shaping: ShapingFns, p: SatParams, k_dz: float) -> np.ndarray:
    """Auxiliary estimation-error field at the reference,
    ``-varsigma(x_r) tilde_phi_s(theta, tilde, x_r) - k_dz dzv(tilde + theta)``."""
    theta = np.asarray(theta, float)
    tilde_theta = np.asarray(tilde_theta, float)
    x_r = np.asarray(x_r, float)
    return (-np.asarray(shaping.varsigma(x_r), float)
            @ tilde_phi_s(plant, p, theta, tilde_theta, x_r)
            - k_dz * dzv(tilde_theta + theta, p.l_theta))


def dH_dtilde(theta: np.ndarray, tilde_theta: np.ndarray, x_r: np.ndarray,
              plant: Plant, shaping: ShapingFns, p: SatParams, k_dz: float) -> np.ndarray:
    """Jacobian of :func:`H_field` in the error direction (for sensitivity flows)."""
    from .gains import ddzv, dsatv

    theta = np.asarray(theta, float)
    tilde = np.asarray(tilde_theta, float)
    w = theta + tilde
    jac_phi = np.asarray(plant.dphi_dtheta(satv(w, p), np.asarray(x_r, float)), float)
    sig = np.asarray(shaping.varsigma(np.asarray(x_r, float)), float)
    return (-(sig @ jac_phi) * dsatv(w, p)[None, :]
            - k_dz * np.diag(ddzv(w, p.l_theta)))


# --------------------------------------------------------------------------
# filter-based variant
# --------------------------------------------------------------------------


def beta_a(e: np.ndarray, e_hat: np.ndarray, x_r: np.ndarray,
           varsigma: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Filter-based shaping term ``varsigma(e_hat + x_r) e``."""
    return np.asarray(varsigma(np.asarray(e_hat, float) + np.asarray(x_r, float)),
                      float) @ np.asarray(e, float)


def dbeta_a_dehat(e: np.ndarray, e_hat: np.ndarray, x_r: np.ndarray,
                  dvarsigma: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Jacobian of ``beta_a`` with respect to the filter state (q x n)."""
    tensor = np.asarray(dvarsigma(np.asarray(e_hat, float) + np.asarray(x_r, float)),
                        float)
    return np.einsum("kij,i->kj", tensor, np.asarray(e, float))


def fd_dvarsigma(varsigma: Callable[[np.ndarray], np.ndarray], n: int,
                 step: float = 1e-6) -> Callable[[np.ndarray], np.ndarray]:
    """Finite-difference fallback for the varsigma partials (tests only)."""

    def dv(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, float)
        base = np.asarray(varsigma(y), float)
        out = np.zeros(base.shape + (n,))
        for j in range(n):
            dy = np.zeros(n)
            dy[j] = step
            out[:, :, j] = (np.asarray(varsigma(y + dy), float)
                            - np.asarray(varsigma(y - dy), float)) / (2 * step)
        return out

    return dv


def filter_rhs(e_hat: np.ndarray, e: np.ndarray, theta_hat: np.ndarray,
               x_r: np.ndarray, dx_r: np.ndarray, u: np.ndarray, plant: Plant,
               varsigma: Callable[[np.ndarray], np.ndarray],
               K_fn: Callable[[np.ndarray], np.ndarray], p: SatParams) -> np.ndarray:
    """State filter tracking the error flow under the shaped model."""
    e_hat = np.asarray(e_hat, float)
    e = np.asarray(e, float)
    x = e + np.asarray(x_r, float)
    w = np.asarray(theta_hat, float) + beta_a(e, e_hat, x_r, varsigma)
    eps = e - e_hat
    return (np.asarray(K_fn(eps), float)
            + np.asarray(plant.f1(x), float)
            + np.asarray(plant.phi(satv(w, p), x), float)
            + np.asarray(plant.g1(x), float) @ np.atleast_1d(u)
            - np.asarray(dx_r, float))


def estimator_filtered_rhs(state: EstimatorState, e: np.ndarray, x_r: np.ndarray,
                           dx_r: np.ndarray, u: np.ndarray, plant: Plant,
                           shaping: ShapingFns,
                           K_fn: Callable[[np.ndarray], np.ndarray],
                           p: SatParams, k_dz: float) -> np.ndarray:
    """Filter-based estimator update (no shaping integral required)."""
    if shaping.dvarsigma is None:
        raise ParameterError("filtered estimator needs dvarsigma")
    theta_hat = np.asarray(state.theta_hat, float)
    e_hat = np.asarray(state.e_hat, float)
    e = np.asarray(e, float)
    x_r = np.asarray(x_r, float)
    x = e + x_r
    w = theta_hat + beta_a(e, e_hat, x_r, shaping.varsigma)
    drift = (np.asarray(plant.f1(x), float)
             + np.asarray(plant.phi(satv(w, p), x), float)
             + np.asarray(plant.g1(x), float) @ np.atleast_1d(u)
             - np.asarray(dx_r, float))
    ehat_dot = filter_rhs(e_hat, e, theta_hat, x_r, dx_r, u, plant,
                          shaping.varsigma, K_fn, p)
    jac_ehat = dbeta_a_dehat(e, e_hat, x_r, shaping.dvarsigma)
    # beta_a depends on x_r exactly as on e_hat (both shift varsigma's argument)
    jac_xr = jac_ehat
    sig = np.asarray(shaping.varsigma(e_hat + x_r), float)
    return (-sig @ drift - jac_ehat @ ehat_dot - jac_xr @ np.asarray(dx_r, float)
            - k_dz * dzv(w, p.l_theta))


# --------------------------------------------------------------------------
# dead-zone gain selection
# --------------------------------------------------------------------------


def select_kdz(plant: Plant, reference: Reference, shaping: ShapingFns,
               p: SatParams, max_m1_norm: float, config_k_dz: float = 0.0,
               n_samples: int = 4096, seed: int = 7, inflation: float = 1.05,
               tilde_radius: float | None = None) -> DeadzoneGain:
    """Estimate the dead-zone gain threshold and return a gain at least that big.

    ``r3`` is taken over samples outside the saturation-identity box (where the
    dead zone is guaranteed active in some component); samples outside the
    parameter ball but inside that box are covered by the monotonicity
    inequality instead, which matters when ``l_s`` is below ``sqrt(q) l_theta``.
    ``r4`` bounds the shaped model mismatch at the reference.  Both are sampled
    suprema with the standard inflation.
    """
    q = plant.q
    if tilde_radius is None:
        tilde_radius = 4.0 * (p.l_theta + 1.0)
    theta_pts = plant.theta_set.sample(n_samples, seed=seed)
    prime_pts = sample_ball(n_samples, q, tilde_radius, seed=seed + 1)
    ts = np.linspace(0.0, reference.period or reference.t_max,
                     min(n_samples, 257))
    xr_pts = np.array([np.asarray(reference.x_r(t), float) for t in ts])

    r3 = 0.0
    n_r3 = 0
    for k in range(n_samples):
        theta = theta_pts[k]
        prime = prime_pts[k]
        if np.max(np.abs(prime)) <= p.l_s:
            continue  # inside the saturation-identity box: monotonicity region
        denom = float((prime - theta) @ dzv(prime, p.l_theta))
        num = float(np.sum((prime - theta) ** 2))
        if denom <= 0.0:
            raise ParameterError(
                "r3 unbounded on samples: dead zone inactive outside the "
                "saturation box (l_s too close to l_theta)")
        r3 = max(r3, num / denom)
        n_r3 += 1
    if n_r3 == 0:
        raise ParameterError("no samples outside the saturation box; "
                             "enlarge tilde_radius")

    r4 = 0.0
    tilde_pts = sample_ball(n_samples, q, tilde_radius, seed=seed + 2)
    for k in range(n_samples):
        xr = xr_pts[k % xr_pts.shape[0]]
        sig = np.asarray(shaping.varsigma(xr), float)
        mismatch = tilde_phi_s(plant, p, theta_pts[k], tilde_pts[k], xr)
        r4 = max(r4, float(np.linalg.norm(sig @ mismatch)))

    r3 *= inflation
    r4 *= inflation
    k_star = r3 * r4 / (2.0 * p.l_theta + 1.0) + r3 * max_m1_norm
    k_star *= inflation
    return DeadzoneGain(k_dz=max(config_k_dz, k_star), k_dz_star=k_star,
                        r3=r3, r4=r4, max_m1_norm=max_m1_norm)

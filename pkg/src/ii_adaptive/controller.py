"""Feedback laws for the matched design: nominal and input-robustified.

The nominal law evaluates the stabilizing feedback of the known-parameter
problem at the saturated shaped estimate.  The robust variant subtracts a
damping term aligned with the error-gradient of the strict Lyapunov function,
which dominates matched input perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .estimator import ShapingFns, beta_a
from .gains import GainFn, ParameterError, SatParams, satv
from .plant import Plant

__all__ = ["IdealLaw", "DampingGain", "nominal_u", "nominal_u_filtered", "robust_u"]


@dataclass(frozen=True)
class IdealLaw:
    """Stabilizing feedback of the known-parameter problem plus its certificate.

    ``psi(x_r, dx_r, theta_arg, e)`` renders the error dynamics uniformly
    asymptotically stable for every fixed parameter, with strict Lyapunov
    function ``V_err`` sandwiched by ``alpha1``/``alpha2``, decrement
    ``alpha3`` and gradient bound ``alpha4``.
    """

    psi: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    V_err: Callable[[float, np.ndarray], float]
    dVerr_de: Callable[[float, np.ndarray], np.ndarray]
    alpha1: GainFn
    alpha2: GainFn
    alpha3: GainFn
    alpha4: GainFn


@dataclass(frozen=True)
class DampingGain:
    k_d: float

    def __post_init__(self) -> None:
        if self.k_d < 0:
            raise ParameterError("damping gain must be nonnegative")


def nominal_u(x_r: np.ndarray, dx_r: np.ndarray, theta_hat: np.ndarray,
              e: np.ndarray, shaping: ShapingFns, p: SatParams,
              law: IdealLaw) -> np.ndarray:
    """Certainty-style law at the shaped, saturated estimate."""
    if shaping.beta is None:
        raise ParameterError("nominal_u needs the closed-form shaping term")
    w = np.asarray(theta_hat, float) + np.asarray(
        shaping.beta(np.asarray(e, float), np.asarray(x_r, float)), float)
    return np.atleast_1d(np.asarray(
        law.psi(np.asarray(x_r, float), np.asarray(dx_r, float), satv(w, p),
                np.asarray(e, float)), float))


def nominal_u_filtered(x_r: np.ndarray, dx_r: np.ndarray, theta_hat: np.ndarray,
                       e: np.ndarray, e_hat: np.ndarray, shaping: ShapingFns,
                       p: SatParams, law: IdealLaw) -> np.ndarray:
    """Same law with the filter-based shaping term in place of ``beta``."""
    w = np.asarray(theta_hat, float) + beta_a(e, e_hat, x_r, shaping.varsigma)
    return np.atleast_1d(np.asarray(
        law.psi(np.asarray(x_r, float), np.asarray(dx_r, float), satv(w, p),
                np.asarray(e, float)), float))


def robust_u(x_r: np.ndarray, dx_r: np.ndarray, theta_hat: np.ndarray,
             e: np.ndarray, shaping: ShapingFns, p: SatParams, law: IdealLaw,
             k_d: float, plant: Plant, t: float = 0.0) -> np.ndarray:
    """Nominal law minus the gradient-aligned nonlinear damping.

    The damping is ``k_d [ (dV_err/de) g1(e + x_r) ]^T``, so its power into
    the error system is ``-k_d |(dV_err/de) g1|^2 <= 0`` identically.
    """
    u = nominal_u(x_r, dx_r, theta_hat, e, shaping, p, law)
    if k_d == 0.0:
        return u
    grad = np.asarray(law.dVerr_de(t, np.asarray(e, float)), float)
    g = np.asarray(plant.g1(np.asarray(e, float) + np.asarray(x_r, float)), float)
    return u - k_d * (grad @ g)

"""Built-in demonstration systems for the generic design framework.

The trig-diagonal plant below satisfies every standing assumption with known
closed forms: the parameterization is linear with a diagonal regressor, so the
shaping integral has an explicit antiderivative, the monotonicity condition
holds with equality, and the persistently excited window integral can be
computed by hand.  It is the workhorse of the unit tests and of the generic
scenario configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .estimator import ShapingFns
from .plant import Plant, Reference, ThetaSet

__all__ = ["TrigDiagonal", "make_trig_diagonal"]


def _phi_mat(x: np.ndarray) -> np.ndarray:
    return np.array([[math.sin(x[0]), 0.0], [0.0, math.cos(x[1])]])


@dataclass(frozen=True)
class TrigDiagonal:
    """Matched two-state plant with a diagonal trigonometric regressor.

    Dynamics: ``xdot = -x + Phi(x) theta + u`` with
    ``Phi(x) = diag(sin x1, cos x2)``.  The shaping function is the exact
    regressor transpose, so the manifold-shaping integral has the closed form
    used in :attr:`shaping`.
    """

    plant: Plant
    reference: Reference
    shaping: ShapingFns
    M1: Callable[[np.ndarray], np.ndarray]
    control_gain: float

    def ideal_psi(self, x_r: np.ndarray, dx_r: np.ndarray, theta_arg: np.ndarray,
                  e: np.ndarray) -> np.ndarray:
        """Feedback rendering the known-parameter error dynamics ``edot = -K e``."""
        x = e + x_r
        return x - _phi_mat(x) @ theta_arg + dx_r - self.control_gain * e

    def aux_field(self, sat, k_dz: float):
        """Batched auxiliary estimation-error field for the Lyapunov lab."""
        from .gains import ddzv, dsatv, dzv, satv
        from .lyapunov import AuxiliaryField

        r1 = self.reference.r1

        def regressor_sq(t: np.ndarray) -> np.ndarray:
            # diag entries of Phi(x_r(t))^T Phi(x_r(t))
            s1 = np.sin(r1 * np.sin(t)) ** 2
            s2 = np.cos(r1 * np.cos(t)) ** 2
            return np.stack([s1, s2], axis=1)

        def h(t, theta, tilde):
            m = regressor_sq(np.asarray(t, float))
            w = theta + tilde
            return (-m * (satv(w, sat) - satv(theta, sat))
                    - k_dz * dzv(w, sat.l_theta))

        def dh(t, theta, tilde):
            m = regressor_sq(np.asarray(t, float))
            w = theta + tilde
            diag = -m * dsatv(w, sat) - k_dz * ddzv(w, sat.l_theta)
            out = np.zeros(w.shape + (w.shape[1],))
            idx = np.arange(w.shape[1])
            out[:, idx, idx] = diag
            return out

        return AuxiliaryField(q=2, h=h, dh_dtilde=dh)


def make_trig_diagonal(l_theta: float = 0.6, control_gain: float = 2.0,
                       r1: float = 0.8, t_max: float = 200.0) -> TrigDiagonal:
    theta_set = ThetaSet.ball(radius=l_theta, dim=2)

    plant = Plant(
        n=2, m=2, q=2,
        f1=lambda x: -np.asarray(x, dtype=float),
        phi=lambda theta, x: _phi_mat(x) @ np.asarray(theta, dtype=float),
        g1=lambda x: np.eye(2),
        dphi_dtheta=lambda theta, x: _phi_mat(x),
        theta_set=theta_set,
        name="trig-diagonal",
    )

    reference = Reference(
        x_r=lambda t: r1 * np.array([math.sin(t), math.cos(t)]),
        dx_r=lambda t: r1 * np.array([math.cos(t), -math.sin(t)]),
        r1=r1, t_max=t_max, period=2.0 * math.pi,
    )

    def varsigma(x: np.ndarray) -> np.ndarray:
        return _phi_mat(x).T

    def beta(e: np.ndarray, x_r: np.ndarray) -> np.ndarray:
        return np.array([
            math.cos(x_r[0]) - math.cos(e[0] + x_r[0]),
            math.sin(e[1] + x_r[1]) - math.sin(x_r[1]),
        ])

    def dbeta_de(e: np.ndarray, x_r: np.ndarray) -> np.ndarray:
        return np.array([[math.sin(e[0] + x_r[0]), 0.0],
                         [0.0, math.cos(e[1] + x_r[1])]])

    def dbeta_dxr(e: np.ndarray, x_r: np.ndarray) -> np.ndarray:
        return np.array([
            [math.sin(e[0] + x_r[0]) - math.sin(x_r[0]), 0.0],
            [0.0, math.cos(e[1] + x_r[1]) - math.cos(x_r[1])],
        ])

    def dvarsigma(y: np.ndarray) -> np.ndarray:
        out = np.zeros((2, 2, 2))
        out[0, 0, 0] = math.cos(y[0])
        out[1, 1, 1] = -math.sin(y[1])
        return out

    shaping = ShapingFns(varsigma=varsigma, beta=beta, dbeta_de=dbeta_de,
                         dbeta_dxr=dbeta_dxr, dvarsigma=dvarsigma)

    def M1(x_r: np.ndarray) -> np.ndarray:
        m = _phi_mat(x_r)
        return m.T @ m

    return TrigDiagonal(plant=plant, reference=reference, shaping=shaping,
                        M1=M1, control_gain=control_gain)

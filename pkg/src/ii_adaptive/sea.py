"""Series-elastic-actuator case study.

The actuator is a DC motor driving a nonlinear spring whose elastic force
follows a power law with unknown coefficient and exponent.  After a state
and input transformation the system is in strict-feedback normal form with a
two-parameter nonlinear re-parameterization, and the controller is built by
backstepping: a virtual velocity law, a virtual force law carrying the shaped
parameter estimator, and the final input law that differentiates the force
law analytically.

This module owns the normal form, the scalar backstepping laws with their
exact partial derivatives, a fast scalar closed-loop integrator (the default
simulation path), the gain network of the interconnection, and the constant
calibration used by the certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .gains import (
    GainFn,
    GammaSParams,
    ParameterError,
    SatParams,
    dsat,
    dz,
    ddz,
    gamma_s,
    sat,
)

__all__ = [
    "SeaPhysical",
    "SeaNormal",
    "SeaGains",
    "sea_to_normal",
    "d_ref",
    "sea_phi",
    "sea_varsigma",
    "sea_tau2",
    "sea_f2",
    "sea_tau3",
    "sea_tau3_partials",
    "sea_ubar",
    "sea_u",
    "physical_input",
    "run_sea",
    "SeaRun",
]

_X1_FLOOR = 1e-12


# --------------------------------------------------------------------------
# physical model and normal form
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SeaPhysical:
    """Physical actuator constants; the true spring pair is harness-only."""

    m: float = 1.0
    mu_v: float = 1.0
    c_f: float = 1.0
    c_b: float = 0.1
    L: float = 0.1
    R: float = 1.0
    Q0: float = 1.25
    p: float = 1.0
    Q0_l: float = 0.5
    Q0_u: float = 2.0
    p_lo: float = 0.5
    p_hi: float = 1.5

    def __post_init__(self) -> None:
        if not (0.0 < self.Q0_l <= self.Q0 <= self.Q0_u):
            raise ParameterError("need 0 < Q0_l <= Q0 <= Q0_u")
        if not (0.0 < self.p_lo <= self.p <= self.p_hi):
            raise ParameterError("need 0 < p_lo <= p <= p_hi")
        for name in ("m", "mu_v", "c_f", "c_b", "L", "R"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")


@dataclass(frozen=True)
class SeaNormal:
    """Normal-form constants and the derived two-dimensional parameter."""

    b1: float
    b2: float
    b3: float
    p_star: float
    theta: tuple[float, float]
    p_lo: float
    p_hi: float
    Q0_l: float
    Q0_u: float
    m: float = 1.0

    @property
    def l_theta(self) -> float:
        return 0.5 * self.p_hi

    def theta_box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        half = 0.5 * (self.p_hi - self.p_lo)
        return ((-0.5 * self.p_lo, 0.5 * self.p_lo), (-half, half))


def sea_to_normal(phys: SeaPhysical) -> SeaNormal:
    """Map physical constants to the normal form and re-parameterize the spring.

    The derived parameter satisfies ``|theta| <= 0.5 p_hi`` for every
    admissible spring pair, and the re-parameterized nonlinearity reproduces
    ``(Q0/m) x |x|^p`` exactly.
    """
    b1 = (phys.Q0_l + phys.Q0_u) / (2.0 * phys.m)
    b2 = (2.0 / phys.p_lo) * max(
        math.log(2.0 * phys.Q0_u / (phys.Q0_u + phys.Q0_l)),
        math.log((phys.Q0_u + phys.Q0_l) / (2.0 * phys.Q0_l)))
    b3 = phys.mu_v / phys.m
    p_star = 0.5 * (phys.p_hi + phys.p_lo)
    th1 = math.log(2.0 * phys.Q0 / (phys.Q0_l + phys.Q0_u)) / b2
    th2 = phys.p - p_star
    return SeaNormal(b1=b1, b2=b2, b3=b3, p_star=p_star, theta=(th1, th2),
                     p_lo=phys.p_lo, p_hi=phys.p_hi, Q0_l=phys.Q0_l,
                     Q0_u=phys.Q0_u, m=phys.m)


def normal_from_theta(theta: tuple[float, float], Q0_l: float = 0.5,
                      Q0_u: float = 2.0, p_lo: float = 0.5, p_hi: float = 1.5,
                      m: float = 1.0, mu_v: float = 1.0) -> SeaNormal:
    """Normal form with the parameter set directly (the simulation's view).

    The conservative parameter box covers pairs that no physical spring in the
    bound set realizes; the closed loop only needs ``|theta| <= 0.5 p_hi``.
    """
    base = sea_to_normal(SeaPhysical(m=m, mu_v=mu_v, Q0=math.sqrt(Q0_l * Q0_u),
                                     p=0.5 * (p_lo + p_hi), Q0_l=Q0_l,
                                     Q0_u=Q0_u, p_lo=p_lo, p_hi=p_hi))
    if math.hypot(*theta) > base.l_theta + 1e-12:
        raise ParameterError(f"theta {theta} outside the ball of radius "
                             f"{base.l_theta}")
    return replace(base, theta=(float(theta[0]), float(theta[1])))


def sea_phi(n: SeaNormal, th1: float, th2: float, x1: float) -> float:
    """Re-parameterized spring nonlinearity ``b1 x1 exp(b2 th1) |x1|^(th2+p*)``."""
    a = abs(x1)
    if a < _X1_FLOOR:
        a = _X1_FLOOR
    return n.b1 * x1 * math.exp(n.b2 * th1) * a ** (th2 + n.p_star)


def sea_dphi_dtheta(n: SeaNormal, th1: float, th2: float, x1: float) -> tuple[float, float]:
    v = sea_phi(n, th1, th2, x1)
    a = max(abs(x1), _X1_FLOOR)
    return (n.b2 * v, v * math.log(a))


def sea_varsigma(n: SeaNormal, y: float) -> tuple[float, float]:
    """Shaping direction ``-y (b2, log|y|)`` for the estimator."""
    a = max(abs(y), _X1_FLOOR)
    return (-y * n.b2, -y * math.log(a))


def spring_from_theta(n: SeaNormal, x1: float) -> float:
    """The physical power-law force reconstructed from the parameterization."""
    return sea_phi(n, n.theta[0], n.theta[1], x1)


# --------------------------------------------------------------------------
# reference trajectory
# --------------------------------------------------------------------------


def d_ref(t: float) -> tuple[float, float, float, float]:
    """Reference ``exp(sin t)`` with first, second and third derivatives."""
    s = math.sin(t)
    c = math.cos(t)
    d = math.exp(s)
    d1 = c * d
    d2 = (c * c - s) * d
    d3 = (c * c * c - 3.0 * s * c - c) * d
    return d, d1, d2, d3


# --------------------------------------------------------------------------
# backstepping laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SeaGains:
    k1: float = 2.0
    k21: float = 5.0
    k22: float = 10.0
    k31: float = 50.0
    k32: float = 100.0
    k33: float = 100.0
    k_dz: float = 5.0
    k_d: float = 0.0
    tau3_exponent: str = "eq63"  # compensation exponent; "literal" uses 4p*+4

    def __post_init__(self) -> None:
        if self.k1 <= 1.0:
            raise ParameterError("virtual velocity gain k1 must exceed 1")
        if self.tau3_exponent not in ("eq63", "literal"):
            raise ParameterError("tau3_exponent must be 'eq63' or 'literal'")


def sea_tau2(e1: float, dr_dot: float, k1: float) -> float:
    """Virtual velocity law ``-(k1 + 1/2) e1 + dr_dot``."""
    if k1 <= 1.0:
        raise ParameterError("k1 must exceed 1")
    return -(k1 + 0.5) * e1 + dr_dot


def sea_f2(n: SeaNormal, g: SeaGains, x2: float, dr1: float, dr2: float) -> float:
    """Known drift of the virtual-velocity error equation."""
    return (g.k1 + 0.5 - n.b3) * x2 - (g.k1 + 0.5) * dr1 - dr2


def sea_tau3(n: SeaNormal, g: SeaGains, p: SatParams, e1: float, e2: float,
             x2: float, th: tuple[float, float], beta: tuple[float, float],
             dr: float, dr1: float, dr2: float) -> float:
    """Virtual force law with the shaped spring estimate."""
    x1 = e1 + dr
    w1, w2 = th[0] + beta[0], th[1] + beta[1]
    phi_hat = sea_phi(n, sat(w1, p), sat(w2, p), x1)
    f2 = sea_f2(n, g, x2, dr1, dr2)
    return (-g.k21 * e2 - g.k22 * e2 * abs(e2) ** (2.0 * n.p_star + 1.0)
            - f2 + phi_hat)


def sea_ubar(n: SeaNormal, g: SeaGains, e3: float) -> float:
    """Residual input law with the high-order damping terms."""
    a = abs(e3)
    return -(g.k31 + g.k32 * a ** (4.0 * n.p_star + 5.0)
             + g.k33 * a ** (4.0 * n.p_star + 1.0)) * e3


def physical_input(phys: SeaPhysical, u: float, x2: float, x3: float) -> float:
    """Armature voltage realizing the normal-form input ``u``."""
    k = phys.m * phys.L / phys.c_f
    return k * (u + (phys.c_f * phys.R / (phys.m * phys.L)) * x3
                + (phys.c_f * phys.c_b / (phys.m * phys.L)) * x2)


# --------------------------------------------------------------------------
# fast scalar closed loop
# --------------------------------------------------------------------------


@dataclass
class SeaRun:
    """Decimated log of one closed-loop run."""

    t: np.ndarray
    x: np.ndarray           # (N, 3)
    e: np.ndarray           # (N, 3) backstepping errors (e1, e2, e3)
    theta_hat: np.ndarray   # (N, 2)
    theta_tilde: np.ndarray  # (N, 2)
    eps: np.ndarray         # (N,) filter error (zeros for the closed-form variant)
    u: np.ndarray           # (N,)
    d: np.ndarray           # (N,)
    blown_up: bool
    variant: str
    tilde_dot: np.ndarray | None = None   # (N, 2) logged error velocity


def _dist_fn(kind: str, amp: float, freq: float, t_on: float):
    if kind == "zero":
        return lambda t: 0.0
    if kind == "sine":
        return lambda t: amp * math.sin(freq * t)
    if kind == "step":
        return lambda t: amp if t >= t_on else 0.0
    raise ParameterError(f"unknown disturbance {kind!r}")


def make_sea_rhs(n: SeaNormal, g: SeaGains, p: SatParams,
                 disturbance=("zero", 0.0, 0.0, 0.0), variant: str = "pde",
                 k_eps: float = 5.0, K1=(0.0, 1.0), K2=(0.0, 1.0)):
    """Build the scalar closed-loop right-hand side as a flat closure.

    Returns ``rhs(t, y) -> ydot`` over tuples.  ``variant`` selects the
    closed-form shaping ("pde", state ``(x1,x2,x3,th1,th2)``) or the
    filter-based estimator ("filtered", extra trailing filter state).  The
    controller and estimator read only measurable quantities; the true
    parameter enters the plant line alone.
    """
    dist = _dist_fn(*disturbance)
    b1, b2, b3, ps = n.b1, n.b2, n.b3, n.p_star
    tt1, tt2 = n.theta
    k1, k21, k22 = g.k1, g.k21, g.k22
    k31, k32, k33 = g.k31, g.k32, g.k33
    k_dz, k_d = g.k_dz, g.k_d
    l_s, eps_s, l_th = p.l_s, p.eps_s, p.l_theta
    cap = p.cap
    e2_exp = 2.0 * ps + 1.0 if g.tau3_exponent == "eq63" else 4.0 * ps + 4.0
    c1k, p1k = K1
    c2k, p2k = K2
    exp, log = math.exp, math.log
    kb = k1 + 0.5
    kfb = kb - b3

    def _sat(s):
        a = abs(s)
        if a <= l_s:
            return s
        if a >= l_s + eps_s:
            return cap if s > 0 else -cap
        r = (a - l_s) ** 2 / (2.0 * eps_s)
        return s - r if s > 0 else s + r

    def _dsat(s):
        a = abs(s)
        if a <= l_s:
            return 1.0
        if a >= l_s + eps_s:
            return 0.0
        return 1.0 - (a - l_s) / eps_s

    def _dz(s):
        a = abs(s)
        if a <= l_th:
            return 0.0
        if a >= l_th + 1.0:
            return s
        v = (a - l_th) ** 2 * (2.0 * (l_th + 1.0) ** 2 - (2.0 * l_th + 1.0) * a)
        return v if s > 0 else -v

    def core(t, x1, x2, x3, th1, th2, sig_x):
        """Shared controller/estimator algebra; sig_x is varsigma's argument."""
        s_ = math.sin(t)
        c_ = math.cos(t)
        dr = exp(s_)
        dr1 = c_ * dr
        dr2 = (c_ * c_ - s_) * dr
        dr3 = (c_ * c_ * c_ - 3.0 * s_ * c_ - c_) * dr
        e1 = x1 - dr
        e1dot = x2 - dr1
        e2 = x2 + kb * e1 - dr1
        ax = abs(sig_x)
        if ax < _X1_FLOOR:
            ax = _X1_FLOOR
        Ls = log(ax)
        sig1 = -sig_x * b2
        sig2 = -sig_x * Ls
        dsig1 = -b2
        dsig2 = -(Ls + 1.0)
        b_1 = sig1 * e2
        b_2 = sig2 * e2
        w1 = th1 + b_1
        w2 = th2 + b_2
        v1 = _sat(w1)
        v2 = _sat(w2)
        sv1 = _dsat(w1)
        sv2 = _dsat(w2)
        ax1 = abs(x1)
        if ax1 < _X1_FLOOR:
            ax1 = _X1_FLOOR
        L1 = log(ax1)
        phi_hat = b1 * x1 * exp(b2 * v1) * ax1 ** (v2 + ps)
        f2 = kfb * x2 - kb * dr1 - dr2
        ae2 = abs(e2)
        tau3 = -k21 * e2 - k22 * e2 * ae2 ** (2.0 * ps + 1.0) - f2 + phi_hat
        e3 = x3 - tau3
        dz1 = _dz(w1)
        dz2 = _dz(w2)
        bracket = x3 - phi_hat + f2
        return (dr, dr1, dr2, dr3, e1, e1dot, e2, e3, Ls, sig1, sig2, dsig1,
                dsig2, w1, w2, v1, v2, sv1, sv2, ax1, L1, phi_hat, f2, tau3,
                dz1, dz2, bracket, ae2)

    if variant == "pde":

        def rhs(t, y):
            x1, x2, x3, th1, th2 = y
            (dr, dr1, dr2, dr3, e1, e1dot, e2, e3, Ls, sig1, sig2, dsig1,
             dsig2, w1, w2, v1, v2, sv1, sv2, ax1, L1, phi_hat, f2, tau3,
             dz1, dz2, bracket, ae2) = core(t, x1, x2, x3, th1, th2, x1)
            th1dot = -sig1 * bracket - dsig1 * e2 * x2 - k_dz * dz1
            th2dot = -sig2 * bracket - dsig2 * e2 * x2 - k_dz * dz2
            # analytic partials of tau3 (w moves with x1 through varsigma)
            dtau3_de2 = (-k21 - k22 * (2.0 * ps + 2.0) * ae2 ** (2.0 * ps + 1.0)
                         - kfb + phi_hat * (b2 * sv1 * sig1 + L1 * sv2 * sig2))
            g_phi = phi_hat * ((1.0 + v2 + ps) / x1
                               + e2 * (b2 * sv1 * dsig1 + L1 * sv2 * dsig2))
            dtau3_de1 = kfb * kb + g_phi
            dtau3_dt = n.b3 * dr2 + dr3 + g_phi * dr1
            dtau3_th1 = phi_hat * b2 * sv1
            dtau3_th2 = phi_hat * L1 * sv2
            ubar = -(k31 + k32 * abs(e3) ** (4.0 * ps + 5.0)
                     + k33 * abs(e3) ** (4.0 * ps + 1.0)) * e3
            comp = e3 - k21 * e2 - k22 * e2 * ae2 ** e2_exp
            u = (ubar + dtau3_dt + dtau3_de1 * e1dot + dtau3_th1 * th1dot
                 + dtau3_th2 * th2dot + dtau3_de2 * comp)
            if k_d != 0.0:
                u -= k_d * 2.0 * e3
            phi_true = b1 * x1 * exp(b2 * tt1) * ax1 ** (tt2 + ps)
            return (x2,
                    -phi_true - b3 * x2 + x3,
                    u + dist(t),
                    th1dot,
                    th2dot)

        return rhs

    if variant == "filtered":

        def rhs(t, y):
            x1, x2, x3, th1, th2, ehat = y
            dr_t = exp(math.sin(t))
            xhat = ehat + dr_t
            (dr, dr1, dr2, dr3, e1, e1dot, e2, e3, Ls, sig1, sig2, dsig1,
             dsig2, w1, w2, v1, v2, sv1, sv2, ax1, L1, phi_hat, f2, tau3,
             dz1, dz2, bracket, ae2) = core(t, x1, x2, x3, th1, th2, xhat)
            eps = e1 - ehat
            K_val = k_eps * eps
            if c1k != 0.0:
                K_val += c1k * math.copysign(abs(eps) ** p1k, eps)
            if c2k != 0.0:
                K_val += c2k * math.copysign(abs(eps) ** p2k, eps)
            ehat_dot = K_val + x2 - dr1
            th1dot = -sig1 * bracket - dsig1 * e2 * (ehat_dot + dr1) - k_dz * dz1
            th2dot = -sig2 * bracket - dsig2 * e2 * (ehat_dot + dr1) - k_dz * dz2
            dtau3_de2 = (-k21 - k22 * (2.0 * ps + 2.0) * ae2 ** (2.0 * ps + 1.0)
                         - kfb + phi_hat * (b2 * sv1 * sig1 + L1 * sv2 * sig2))
            dphi_dx1 = phi_hat * (1.0 + v2 + ps) / x1
            dtau3_de1 = kfb * kb + dphi_dx1
            dtau3_dehat = phi_hat * e2 * (b2 * sv1 * dsig1 + L1 * sv2 * dsig2)
            dtau3_dt = n.b3 * dr2 + dr3 + dphi_dx1 * dr1 + dtau3_dehat * dr1
            dtau3_th1 = phi_hat * b2 * sv1
            dtau3_th2 = phi_hat * L1 * sv2
            ubar = -(k31 + k32 * abs(e3) ** (4.0 * ps + 5.0)
                     + k33 * abs(e3) ** (4.0 * ps + 1.0)) * e3
            comp = e3 - k21 * e2 - k22 * e2 * ae2 ** e2_exp
            u = (ubar + dtau3_dt + dtau3_de1 * e1dot + dtau3_dehat * ehat_dot
                 + dtau3_th1 * th1dot + dtau3_th2 * th2dot + dtau3_de2 * comp)
            if k_d != 0.0:
                u -= k_d * 2.0 * e3
            phi_true = b1 * x1 * exp(b2 * tt1) * ax1 ** (tt2 + ps)
            return (x2,
                    -phi_true - b3 * x2 + x3,
                    u + dist(t),
                    th1dot,
                    th2dot,
                    ehat_dot)

        return rhs

    raise ParameterError(f"unknown estimator variant {variant!r}")


def sea_u(n: SeaNormal, g: SeaGains, p: SatParams, t: float, x: np.ndarray,
          theta_hat: np.ndarray, disturbance=("zero", 0.0, 0.0, 0.0)) -> float:
    """Input law evaluated at one state (wrapper over the closed-loop algebra)."""
    rhs = make_sea_rhs(n, g, p, disturbance=("zero", 0.0, 0.0, 0.0))
    # reuse the rhs computation but return only u: recompute from x3dot - d
    y = (float(x[0]), float(x[1]), float(x[2]), float(theta_hat[0]),
         float(theta_hat[1]))
    ydot = rhs(t, y)
    return float(ydot[2])


def run_sea(n: SeaNormal, g: SeaGains, p: SatParams, x0, theta_hat0,
            T: float = 60.0, step: float = 1e-4, log_every: int = 100,
            disturbance=("zero", 0.0, 0.0, 0.0), variant: str = "pde",
            e_hat0: float = 0.0, k_eps: float = 5.0, K1=(0.0, 1.0),
            K2=(0.0, 1.0), log_tilde_dot: bool = False) -> SeaRun:
    """Fixed-step RK4 integration of the closed loop with decimated logging."""
    rhs = make_sea_rhs(n, g, p, disturbance=disturbance, variant=variant,
                       k_eps=k_eps, K1=K1, K2=K2)
    dist = _dist_fn(*disturbance)
    if variant == "pde":
        y = (float(x0[0]), float(x0[1]), float(x0[2]),
             float(theta_hat0[0]), float(theta_hat0[1]))
    else:
        y = (float(x0[0]), float(x0[1]), float(x0[2]),
             float(theta_hat0[0]), float(theta_hat0[1]), float(e_hat0))
    n_states = len(y)
    n_steps = int(round(T / step))
    n_logs = n_steps // log_every + 1
    t_log = np.empty(n_logs)
    y_log = np.empty((n_logs, n_states))
    u_log = np.empty(n_logs)
    d_log = np.empty(n_logs)
    tilde_dot_log = np.empty((n_logs, 2)) if log_tilde_dot else None
    h = step
    h2 = 0.5 * h
    h6 = h / 6.0
    t = 0.0
    blown = False
    row = 0

    def log_state(row, t, y):
        t_log[row] = t
        y_log[row] = y
        ydot = rhs(t, y)
        u_log[row] = ydot[2] - dist(t)
        d_log[row] = dist(t)
        if log_tilde_dot:
            # d/dt of the shaped error: estimator rate plus shaping motion
            tilde_dot_log[row] = _tilde_dot(n, g, p, variant, t, y, ydot, k_eps)

    log_state(0, 0.0, y)
    row = 1
    for k in range(1, n_steps + 1):
        try:
            k1v = rhs(t, y)
            ym = tuple(yi + h2 * ki for yi, ki in zip(y, k1v))
            k2v = rhs(t + h2, ym)
            ym = tuple(yi + h2 * ki for yi, ki in zip(y, k2v))
            k3v = rhs(t + h2, ym)
            ym = tuple(yi + h * ki for yi, ki in zip(y, k3v))
            k4v = rhs(t + h, ym)
        except (OverflowError, ValueError):
            blown = True
            break
        y = tuple(yi + h6 * (a + 2.0 * (b + c) + d)
                  for yi, a, b, c, d in zip(y, k1v, k2v, k3v, k4v))
        t = k * h
        if not all(math.isfinite(v) for v in y):
            blown = True
            break
        if k % log_every == 0:
            log_state(row, t, y)
            row += 1

    t_log = t_log[:row]
    y_log = y_log[:row]
    u_log = u_log[:row]
    d_log = d_log[:row]
    if log_tilde_dot:
        tilde_dot_log = tilde_dot_log[:row]

    x = y_log[:, :3]
    th = y_log[:, 3:5]
    e = np.empty_like(x)
    tilde = np.empty_like(th)
    eps_log = np.zeros(row)
    for i in range(row):
        ti = t_log[i]
        dr, dr1, dr2, _ = d_ref(ti)
        e1 = x[i, 0] - dr
        e2 = x[i, 1] + (g.k1 + 0.5) * e1 - dr1
        if variant == "pde":
            sig_x = x[i, 0]
        else:
            sig_x = y_log[i, 5] + dr
            eps_log[i] = e1 - y_log[i, 5]
        s1, s2 = sea_varsigma(n, sig_x)
        beta = (s1 * e2, s2 * e2)
        tau3 = sea_tau3(n, g, p, e1, e2, x[i, 1], (th[i, 0], th[i, 1]),
                        beta, dr, dr1, dr2)
        e[i] = (e1, e2, x[i, 2] - tau3)
        tilde[i] = (th[i, 0] - n.theta[0] + beta[0],
                    th[i, 1] - n.theta[1] + beta[1])
    return SeaRun(t=t_log, x=x, e=e, theta_hat=th, theta_tilde=tilde,
                  eps=eps_log, u=u_log, d=d_log, blown_up=blown,
                  variant=variant, tilde_dot=tilde_dot_log)


def _tilde_dot(n: SeaNormal, g: SeaGains, p: SatParams, variant: str,
               t: float, y, ydot, k_eps: float) -> tuple[float, float]:
    """Actual velocity of the shaped error at a state (harness diagnostic)."""
    x1, x2 = y[0], y[1]
    dr, dr1, _, _ = d_ref(t)
    e1 = x1 - dr
    e2 = x2 + (g.k1 + 0.5) * e1 - dr1
    e2dot = ydot[1] + (g.k1 + 0.5) * (x2 - dr1) - (d_ref(t)[2])
    if variant == "pde":
        sig_x = x1
        sig_x_dot = ydot[0]
    else:
        sig_x = y[5] + dr
        sig_x_dot = ydot[5] + dr1
    s1, s2 = sea_varsigma(n, sig_x)
    a = max(abs(sig_x), _X1_FLOOR)
    ds1, ds2 = -n.b2, -(math.log(a) + 1.0)
    return (ydot[3] + ds1 * sig_x_dot * e2 + s1 * e2dot,
            ydot[4] + ds2 * sig_x_dot * e2 + s2 * e2dot)


def sea_tau3_partials(n: SeaNormal, g: SeaGains, p: SatParams, t: float,
                      e1: float, e2: float, th: tuple[float, float]) -> dict:
    """Analytic partials of the virtual force law (closed-form variant),
    exposed for the finite-difference oracles."""
    dr, dr1, dr2, dr3 = d_ref(t)
    x1 = e1 + dr
    x2 = e2 - (g.k1 + 0.5) * e1 + dr1
    ax = max(abs(x1), _X1_FLOOR)
    Ls = math.log(ax)
    sig1, sig2 = -x1 * n.b2, -x1 * Ls
    dsig1, dsig2 = -n.b2, -(Ls + 1.0)
    w1 = th[0] + sig1 * e2
    w2 = th[1] + sig2 * e2
    v1, v2 = sat(w1, p), sat(w2, p)
    sv1, sv2 = dsat(w1, p), dsat(w2, p)
    phi_hat = n.b1 * x1 * math.exp(n.b2 * v1) * ax ** (v2 + n.p_star)
    kb = g.k1 + 0.5
    kfb = kb - n.b3
    ae2 = abs(e2)
    dtau3_de2 = (-g.k21 - g.k22 * (2 * n.p_star + 2) * ae2 ** (2 * n.p_star + 1)
                 - kfb + phi_hat * (n.b2 * sv1 * sig1 + Ls * sv2 * sig2))
    g_phi = phi_hat * ((1.0 + v2 + n.p_star) / x1
                       + e2 * (n.b2 * sv1 * dsig1 + Ls * sv2 * dsig2))
    # note: tau3's e2-dependence through x2 in f2 is kfb * 1; through tau2 none
    return {
        "de2": dtau3_de2,
        "de1": kfb * kb + g_phi,
        "dt": n.b3 * dr2 + dr3 + g_phi * dr1,
        "dth1": phi_hat * n.b2 * sv1,
        "dth2": phi_hat * Ls * sv2,
        "value": (-g.k21 * e2 - g.k22 * e2 * ae2 ** (2 * n.p_star + 1)
                  - (kfb * x2 - kb * dr1 - dr2) + phi_hat),
    }


# --------------------------------------------------------------------------
# generic-framework adapters (the virtual-velocity error subsystem)
# --------------------------------------------------------------------------


def sea_reference(t_max: float = 200.0):
    """The spring-deflection reference as a one-dimensional Reference."""
    from .plant import Reference

    return Reference(
        x_r=lambda t: np.array([math.exp(math.sin(t))]),
        dx_r=lambda t: np.array([math.cos(t) * math.exp(math.sin(t))]),
        r1=math.e, t_max=t_max, period=2.0 * math.pi)


def sea_subsystem_plant(n: SeaNormal):
    """One-dimensional plant adapter for the parameter-carrying error channel.

    The channel state is the virtual-velocity error; the parameterized term
    enters with a negative sign and its argument is the deflection, which the
    adapter treats as the plant state so that the bound estimators sample the
    deflection range.
    """
    from .plant import Plant, ThetaSet

    return Plant(
        n=1, m=1, q=2,
        f1=lambda x: np.zeros(1),
        phi=lambda th, x: np.array([-sea_phi(n, float(th[0]), float(th[1]),
                                             float(x[0]))]),
        g1=lambda x: np.eye(1),
        dphi_dtheta=lambda th, x: -np.array([sea_dphi_dtheta(
            n, float(th[0]), float(th[1]), float(x[0]))]),
        theta_set=ThetaSet.ball(radius=n.l_theta, dim=2),
        name="sea-e2-channel",
    )


def sea_varsigma_matrix(n: SeaNormal, x: np.ndarray) -> np.ndarray:
    """Shaping map as a (2 x 1) matrix for the generic interfaces."""
    s1, s2 = sea_varsigma(n, float(x[0]))
    return np.array([[s1], [s2]])


def sea_x_floor(floor: float = 0.05):
    """Clamp evaluation states away from the logarithmic singularity."""

    def clamp(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        mag = np.maximum(np.abs(x), floor)
        sign = np.where(x == 0.0, 1.0, np.sign(x))
        return sign * mag

    return clamp


def sea_M1(n: SeaNormal, M0: float):
    """Excitation matrix of the shaped parameterization at the reference."""

    def M1(x: np.ndarray) -> np.ndarray:
        y = float(np.atleast_1d(x)[0])
        L = math.log(max(abs(y), _X1_FLOOR))
        w = np.array([n.b2, L])
        return M0 * np.outer(w, w)

    return M1


def make_sea_aux_field(n: SeaNormal, p: SatParams, k_dz: float):
    """Batched auxiliary estimation-error field along the reference."""
    from .gains import ddzv, dsatv, dzv, satv
    from .lyapunov import AuxiliaryField

    b1, b2, ps = n.b1, n.b2, n.p_star

    def phi_batch(v1, v2, y):
        return b1 * y * np.exp(b2 * v1) * np.abs(y) ** (v2 + ps)

    def h(t, theta, tilde):
        t = np.asarray(t, float)
        y = np.exp(np.sin(t))
        L = np.log(y)
        w = theta + tilde
        v = satv(w, p)
        phid = (phi_batch(v[:, 0], v[:, 1], y)
                - phi_batch(satv(theta, p)[:, 0], satv(theta, p)[:, 1], y))
        sig = np.stack([-y * b2, -y * L], axis=1)
        return sig * phid[:, None] - k_dz * dzv(w, p.l_theta)

    def dh(t, theta, tilde):
        t = np.asarray(t, float)
        y = np.exp(np.sin(t))
        L = np.log(y)
        w = theta + tilde
        v = satv(w, p)
        phi_v = phi_batch(v[:, 0], v[:, 1], y)
        dphi = np.stack([b2 * phi_v, phi_v * L], axis=1)      # dphi/dv
        sig = np.stack([-y * b2, -y * L], axis=1)
        sv = dsatv(w, p)
        jac = sig[:, :, None] * (dphi * sv)[:, None, :]
        dd = ddzv(w, p.l_theta)
        idx = np.arange(2)
        jac[:, idx, idx] -= k_dz * dd
        return jac

    return AuxiliaryField(q=2, h=h, dh_dtilde=dh)


# --------------------------------------------------------------------------
# constant calibration
# --------------------------------------------------------------------------


def _fit_dominating_constants(basis: np.ndarray, targets: np.ndarray,
                              inflation: float = 1.05) -> np.ndarray:
    """Least coefficients with ``basis @ c >= targets`` componentwise.

    Small linear program over structured-supremum constraint rows; the
    objective weighs each coefficient by the mean of its basis column so no
    term is starved for scale reasons.
    """
    n_c = basis.shape[1]
    cost = np.maximum(basis.mean(axis=0), 1e-12)
    res = linprog(c=cost, A_ub=-basis, b_ub=-targets,
                  bounds=[(0, None)] * n_c, method="highs")
    if not res.success:
        raise ParameterError(f"constant fit failed: {res.message}")
    return res.x * inflation


@dataclass(frozen=True)
class SeaCalibration:
    """Numerically estimated constants of the case-study certificates."""

    normal: SeaNormal
    sat: SatParams
    gamma: GammaSParams
    kappa1: GainFn
    kappa2: GainFn
    M0: float
    max_m1_norm: float
    mu: float
    delta: float
    vest: "VestConstants"
    tau_est: float
    delta1: float
    delta2: float
    rho0: float
    rho1: float
    rho2: float
    g_const: float
    r3: float
    r4: float
    k_dz_star: float
    k_dz_descent: float
    monotonicity: "MonotonicityReport"
    gain_conditions: dict
    tilde_radius: float = 2.5
    flow_steps: int = 2000
    x_floor: float = 0.05
    k_dz: float = 5.0

    def summary(self) -> str:
        v = self.vest
        lines = [
            "SEA certificate calibration",
            f"  b2 = {self.normal.b2:.6f}, l_theta = {self.normal.l_theta}",
            f"  gamma_s: L0 = {self.gamma.L0:.6f}, l_gamma = {self.gamma.l_gamma:.6f}",
            f"  M0 = {self.M0:.6g}, max||M1|| = {self.max_m1_norm:.6g}",
            f"  PE window {self.delta:.6f}: mu = {self.mu:.6f}",
            f"  V_est: a1 = {v.a1:.6g}, a2 = {v.a2:.6g}, a3 = {v.a3:.6g}, "
            f"a4 = {v.a4:.6g}, a* = {v.a_star:.6g}",
            f"  deadzone: r3 = {self.r3:.6g}, r4 = {self.r4:.6g}, "
            f"k_dz* = {self.k_dz_star:.6g} (descent threshold "
            f"~ {self.k_dz_descent:.6g})",
            f"  backstepping constants: delta1 = {self.delta1:.6g}, "
            f"delta2 = {self.delta2:.6g}, rho0 = {self.rho0:.6g}, "
            f"rho1 = {self.rho1:.6g}, rho2 = {self.rho2:.6g}, g = {self.g_const:.6g}",
            "  gain conditions:",
        ]
        for k, (ok, need, have) in self.gain_conditions.items():
            lines.append(f"    {k}: need {need:.6g}, have {have:.6g} -> "
                         f"{'ok' if ok else 'NOT SATISFIED'}")
        return "\n".join(lines)


def sea_flow_steps(n: SeaNormal, p: SatParams, k_dz: float, delta: float,
                   tilde_radius: float, n_probe: int = 2048,
                   seed: int = 31) -> int:
    """Flow-step count from the sampled stiffness of the auxiliary field.

    The field's error-direction Jacobian reaches ~1e4 near the saturation
    knee, so a fixed fraction-of-window step is explosively unstable; the
    step is chosen to keep the scaled eigenvalue within the stability disk.
    """
    from .plant import sample_ball

    field = make_sea_aux_field(n, p, k_dz)
    rng = np.random.default_rng(seed)
    tilde = sample_ball(n_probe, 2, tilde_radius, seed=seed)
    theta = sea_subsystem_plant(n).theta_set.sample(n_probe, seed=seed + 1)
    ts = rng.uniform(0, 2 * math.pi, n_probe)
    jac = field.dh_dtilde(ts, theta, tilde)
    lam = float(np.linalg.norm(jac, ord=2, axis=(1, 2)).max())
    return max(2000, int(delta * lam / 1.5) + 1)


def calibrate_sea(n: SeaNormal, p: SatParams, gains: SeaGains,
                  margin: float = 0.1, tau_est: float = 1.4,
                  n_samples: int = 2048, seed: int = 99,
                  tilde_radius: float = 2.5, e1_range: float = 3.0,
                  e2_range: float = 3.0, x_floor: float = 0.05,
                  n_flow_steps: int | None = None,
                  kappa_grid=(0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0),
                  inflation: float = 1.05) -> SeaCalibration:
    """Estimate every constant the case-study certificates consume.

    All suprema are deterministic sampled estimates over the documented
    compact domains with the declared inflation; lower bounds are deflated.
    The boxed monotonicity check replaces the ball condition because the
    saturation cap forces ``l_s < sqrt(q) l_theta`` here.  ``tilde_radius``
    bounds the certified error domain: the dead-zone gain of the scenario is
    far below the conservative global threshold, so the window-contraction
    certificate is established on (and only claims) this sampled ball.
    """
    from .estimator import select_kdz, ShapingFns
    from .lyapunov import (VestEvaluator, check_monotonicity, check_pe,
                           estimate_a_constants)
    from .plant import estimate_kappa, sample_ball

    gamma = GammaSParams.from_sat(p, q=2, margin=margin)
    plant1 = sea_subsystem_plant(n)
    ref1 = sea_reference()
    clamp = sea_x_floor(x_floor)

    kappa1 = estimate_kappa(plant1, ref1, p, 1, kappa_grid,
                            n_samples=min(n_samples, 1024), seed=seed,
                            inflation=inflation, xr_mode="trajectory",
                            x_floor=clamp)
    kappa2 = estimate_kappa(plant1, ref1, p, 2, (0.0,) + tuple(kappa_grid),
                            varsigma=lambda x: sea_varsigma_matrix(n, x),
                            n_samples=min(n_samples, 1024), seed=seed + 1,
                            inflation=inflation, xr_mode="trajectory",
                            x_floor=clamp)

    # M0: calibrated from the monotonicity cross-product itself (unit-scale
    # first passers the supported scale, the final check re-verifies the
    # deflated value on the same geometry)
    rng_pts = sample_ball(n_samples, 2, p.l_s, seed=seed + 2)
    theta_pts = plant1.theta_set.sample(n_samples, seed=seed + 3)
    ts = np.linspace(0.0, 2.0 * math.pi, 64)
    box_primes = rng_pts[:256][np.max(np.abs(rng_pts[:256]), axis=1) <= p.l_s]
    mono_kwargs = dict(
        phi=plant1.phi, varsigma=lambda x: sea_varsigma_matrix(n, x),
        xr_samples=np.array([[math.exp(math.sin(t))] for t in ts[::4]]),
        theta_samples=theta_pts[:128], prime_samples=box_primes,
        l_s=p.l_s, l_theta=p.l_theta, q=2, strict_precondition=False)
    probe = check_monotonicity(M1=sea_M1(n, 1.0), **mono_kwargs)
    M0 = max(probe.m0_supported, 0.0) * 0.95
    M1 = sea_M1(n, M0)
    max_m1 = max(float(np.linalg.norm(M1(np.array([math.exp(math.sin(t))])), 2))
                 for t in ts)

    mono = check_monotonicity(M1=M1, **mono_kwargs)

    delta_pe = 2.0 * math.pi
    pe = check_pe(lambda t: M1(np.array([math.exp(math.sin(t))])), delta_pe,
                  np.linspace(0, 2 * math.pi, 5))

    shaping1 = ShapingFns(varsigma=lambda x: sea_varsigma_matrix(n, x))
    dzgain = select_kdz(plant1, ref1, shaping1, p, max_m1_norm=max_m1,
                        config_k_dz=gains.k_dz, n_samples=n_samples,
                        seed=seed + 4, tilde_radius=tilde_radius)

    # operational descent threshold: smallest k_dz with sampled descent on the
    # calibration domain (binary search over sampled directional derivative)
    k_dz_descent = _descent_threshold(n, p, theta_pts[:512],
                                      sample_ball(512, 2, tilde_radius,
                                                  seed=seed + 5), ts)

    if n_flow_steps is None:
        n_flow_steps = sea_flow_steps(n, p, gains.k_dz, delta_pe, tilde_radius)
    field = make_sea_aux_field(n, p, gains.k_dz)
    ev = VestEvaluator(field=field, delta=delta_pe, n_steps=n_flow_steps)
    rngv = np.random.default_rng(seed + 6)
    n_v = 1024
    tilde_v = rngv.normal(size=(n_v, 2))
    tilde_v /= np.linalg.norm(tilde_v, axis=1, keepdims=True)
    tilde_v *= rngv.uniform(0.05, tilde_radius, size=(n_v, 1))
    theta_v = plant1.theta_set.sample(n_v, seed=seed + 10)
    vest = estimate_a_constants(ev, theta_v, tilde_v,
                                rngv.uniform(0, 2 * math.pi, n_v),
                                deflate=0.8, a1_from_jacobian=True)

    # backstepping disturbance constants by structured-profile domination
    # fits: the binding states are joint corners (reference peak, saturated
    # estimate, extreme error), which random joint sampling under-covers
    prof = _mismatch_profiles(n, p, gamma, gains, clamp, tilde_radius,
                              e1_range=e1_range, e2_range=e2_range,
                              theta_samples=theta_pts[:24])
    d1, d2 = _fit_dominating_constants(
        np.stack([prof["delta_e1"] ** (2 * n.p_star + 2),
                  np.ones(prof["delta_e1"].size)], axis=1),
        prof["delta_ratio"], inflation)
    r0, r1c, r2c = _fit_dominating_constants(
        np.stack([prof["rho_gs"],
                  prof["rho_e1"] ** (4 * n.p_star + 6),
                  prof["rho_e2"] ** (4 * n.p_star + 2)], axis=1),
        prof["rho_lhs"], inflation)

    # closing constant of the tilde cycles
    grid = np.logspace(-8, 8, 200)
    cvals = np.array([gamma_s(tau_est * vest.a_star * gamma.l_gamma
                              * kappa2(math.sqrt(s)), gamma) / math.sqrt(s)
                      for s in grid])
    g_const = float(np.max(cvals))

    conds = {
        "k21 > g*delta2 + 2.5": (gains.k21 > g_const * d2 + 2.5,
                                 g_const * d2 + 2.5, gains.k21),
        "k22 >= delta1*l_gamma": (gains.k22 >= d1 * gamma.l_gamma,
                                  d1 * gamma.l_gamma, gains.k22),
        "k31 > g*rho0 + 1.5": (gains.k31 > g_const * r0 + 1.5,
                               g_const * r0 + 1.5, gains.k31),
        "k32 >= rho1": (gains.k32 >= r1c, r1c, gains.k32),
        "k33 >= rho2": (gains.k33 >= r2c, r2c, gains.k33),
    }

    return SeaCalibration(normal=n, sat=p, gamma=gamma, kappa1=kappa1,
                          kappa2=kappa2, M0=M0, max_m1_norm=max_m1, mu=pe.mu,
                          delta=delta_pe, vest=vest, tau_est=tau_est,
                          delta1=float(d1), delta2=float(d2), rho0=float(r0),
                          rho1=float(r1c), rho2=float(r2c), g_const=g_const,
                          r3=dzgain.r3, r4=dzgain.r4,
                          k_dz_star=dzgain.k_dz_star,
                          k_dz_descent=k_dz_descent, monotonicity=mono,
                          gain_conditions=conds, tilde_radius=tilde_radius,
                          flow_steps=n_flow_steps, x_floor=x_floor,
                          k_dz=gains.k_dz)


def _mismatch_profiles(n: SeaNormal, p: SatParams, gamma: GammaSParams,
                       gains: SeaGains, clamp, tilde_radius: float,
                       e1_range: float, e2_range: float,
                       theta_samples: np.ndarray,
                       n_phase: int = 25, n_dirs: int = 48,
                       n_mag: int = 10, n_bins: int = 9) -> dict:
    """Structured suprema feeding the dominating-constant fits.

    For every error-radius bin the inner supremum runs over a dense grid of
    reference phases, admissible parameters, and shaped-error directions and
    magnitudes, so the fit constraints see the binding corner states that a
    random joint sample would miss.
    """
    phases = np.linspace(0.0, 2.0 * math.pi, n_phase, endpoint=False)
    angles = np.linspace(0.0, 2.0 * math.pi, n_dirs, endpoint=False)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    mags = np.concatenate([np.linspace(0.05, 1.0, n_mag // 2),
                           np.linspace(1.2, tilde_radius, n_mag - n_mag // 2)])
    e1_bins = np.linspace(0.0, e1_range, n_bins)
    e2_bins = np.linspace(0.0, e2_range, n_bins)
    thetas = np.atleast_2d(theta_samples)

    delta_e1 = []
    delta_ratio = []
    for a1 in e1_bins:
        worst_ratio = 0.0
        for tphase in phases:
            dr = math.exp(math.sin(tphase))
            for sgn in (-1.0, 1.0):
                x1 = float(clamp(np.array([sgn * a1 + dr]))[0])
                for th in thetas:
                    base = sea_phi(n, th[0], th[1], x1)
                    for m in mags:
                        gs = gamma_s(float(m), gamma)
                        for d in dirs:
                            w = th + m * d
                            v1, v2 = sat(w[0], p), sat(w[1], p)
                            mism = abs(sea_phi(n, v1, v2, x1) - base)
                            worst_ratio = max(worst_ratio, mism / gs)
        delta_e1.append(a1)
        delta_ratio.append(worst_ratio)

    # rho rows: per (e1, e2, magnitude) bin the supremum of the slope-times-
    # mismatch product over a coarser inner grid (the slope varies slowly)
    rho_rows = []
    phases_r = phases[::2]
    dirs_r = dirs[:: max(1, n_dirs // 8)]
    thetas_r = thetas[:8]
    for a1 in e1_bins:
        for a2 in e2_bins:
            worst = {float(m): 0.0 for m in mags}
            for tphase in phases_r:
                dr = math.exp(math.sin(tphase))
                for sgn in (-1.0, 1.0):
                    x1 = float(clamp(np.array([sgn * a1 + dr]))[0])
                    for th in thetas_r:
                        base = sea_phi(n, th[0], th[1], x1)
                        for m in mags:
                            for d in dirs_r:
                                w = th + m * d
                                v1, v2 = sat(w[0], p), sat(w[1], p)
                                mism = abs(sea_phi(n, v1, v2, x1) - base)
                                lhs = abs(_dtau3_de2_at(
                                    n, gains, p, tphase, sgn * a1, a2, w,
                                    clamp)) * mism
                                worst[float(m)] = max(worst[float(m)], lhs)
            for m, lhs in worst.items():
                rho_rows.append((gamma_s(m, gamma), a1, a2, lhs))
    rho_rows = np.array(rho_rows)
    return {
        "delta_e1": np.array(delta_e1),
        "delta_ratio": np.array(delta_ratio),
        "rho_gs": rho_rows[:, 0],
        "rho_e1": rho_rows[:, 1],
        "rho_e2": rho_rows[:, 2],
        "rho_lhs": rho_rows[:, 3],
    }


def _dtau3_de2_at(n: SeaNormal, g: SeaGains, p: SatParams, t: float,
                  e1: float, e2: float, w: np.ndarray, clamp) -> float:
    dr = math.exp(math.sin(t))
    x1 = float(clamp(np.array([e1 + dr]))[0])
    L = math.log(abs(x1))
    sig1, sig2 = -x1 * n.b2, -x1 * L
    v1, v2 = sat(w[0], p), sat(w[1], p)
    sv1, sv2 = dsat(w[0], p), dsat(w[1], p)
    phi_hat = n.b1 * x1 * math.exp(n.b2 * v1) * abs(x1) ** (v2 + n.p_star)
    return (-g.k21 - g.k22 * (2 * n.p_star + 2) * abs(e2) ** (2 * n.p_star + 1)
            - (g.k1 + 0.5 - n.b3)
            + phi_hat * (n.b2 * sv1 * sig1 + L * sv2 * sig2))


def _descent_threshold(n: SeaNormal, p: SatParams, theta_pts: np.ndarray,
                       tilde_pts: np.ndarray, ts: np.ndarray) -> float:
    """Smallest dead-zone gain with sampled descent of the auxiliary field."""
    from .gains import dzv, satv

    worst = 0.0
    for k in range(theta_pts.shape[0]):
        theta = theta_pts[k]
        tilde = tilde_pts[k % tilde_pts.shape[0]]
        t = ts[k % ts.size]
        y = math.exp(math.sin(t))
        sig = np.array(sea_varsigma(n, y))
        w = theta + tilde
        v = satv(w, p)
        push = float(tilde @ sig * (sea_phi(n, v[0], v[1], y)
                                    - sea_phi(n, theta[0], theta[1], y)))
        pull = float(tilde @ dzv(w, p.l_theta))
        if push > 0.0 and pull > 1e-12:
            worst = max(worst, push / pull)
    return worst * 1.05


def sea_vest_evaluator(calib: SeaCalibration, k_dz: float | None = None):
    """Window-integral evaluator matching the calibration's field and step."""
    from .lyapunov import VestEvaluator

    field = make_sea_aux_field(calib.normal, calib.sat,
                               calib.k_dz if k_dz is None else k_dz)
    return VestEvaluator(field=field, delta=calib.delta,
                         n_steps=calib.flow_steps)


# --------------------------------------------------------------------------
# gain network
# --------------------------------------------------------------------------


def sea_gain_network(gains: SeaGains, calib: SeaCalibration,
                     s_min: float = 1e-8, s_max: float = 1e8,
                     n_grid: int = 200, k1_override: float | None = None):
    """Four-node interconnection of the backstepping design.

    Edges carry the constructed implication-form gains; the network has
    exactly five simple cycles.
    """
    from .gains import from_callable
    from .network import GainNetwork

    a1 = calib.vest.a1
    gamma = calib.gamma
    k1 = gains.k1 if k1_override is None else k1_override
    k21, k31 = gains.k21, gains.k31
    c_t1 = a1 * (calib.tau_est * calib.vest.a_star * gamma.l_gamma) ** 2
    d2, r0 = calib.delta2, calib.rho0

    g_12 = from_callable(lambda s: s / k1**2, "Kinf", name="gamma_1,2")
    g_21 = from_callable(lambda s: s, "Kinf", name="gamma_2,1")
    g_2t = from_callable(
        lambda s: (d2 / (k21 - 2.5)) ** 2 * gamma_s(math.sqrt(s / a1), gamma) ** 2,
        "K", sup_limit=(d2 / (k21 - 2.5)) ** 2 * gamma.l_gamma ** 2,
        name="gamma_2,tilde")
    g_23 = from_callable(lambda s: 0.5 * s, "Kinf", name="gamma_2,3")
    g_31 = from_callable(lambda s: s, "Kinf", name="gamma_3,1")
    g_3t = from_callable(
        lambda s: (r0 / (k31 - 1.5)) ** 2 * gamma_s(math.sqrt(s / a1), gamma) ** 2,
        "K", sup_limit=(r0 / (k31 - 1.5)) ** 2 * gamma.l_gamma ** 2,
        name="gamma_3,tilde")
    g_32 = from_callable(lambda s: s, "Kinf", name="gamma_3,2")
    g_t1 = from_callable(
        lambda s: c_t1 * calib.kappa2(math.sqrt(s)) ** 2,
        "K", name="gamma_tilde,1")

    return GainNetwork(
        nodes=("e1", "e2", "e3", "tilde"),
        edges={
            ("e2", "e1"): g_12,
            ("e1", "e2"): g_21,
            ("tilde", "e2"): g_2t,
            ("e3", "e2"): g_23,
            ("e1", "e3"): g_31,
            ("tilde", "e3"): g_3t,
            ("e2", "e3"): g_32,
            ("e1", "tilde"): g_t1,
        },
        s_min=s_min, s_max=s_max, n_grid=n_grid,
    )


# --------------------------------------------------------------------------
# default scenario and the convergence experiment
# --------------------------------------------------------------------------


def default_initial_state(n: SeaNormal, gains: SeaGains, p: SatParams,
                          e0=(0.2, 0.0, 0.0), theta_hat0=(0.0, 0.35)):
    """Map backstepping-error initial conditions to the plant state."""
    dr, dr1, dr2, _ = d_ref(0.0)
    e1, e2, e3 = e0
    x1 = dr + e1
    x2 = e2 + sea_tau2(e1, dr1, gains.k1)
    s1, s2 = sea_varsigma(n, x1)
    beta = (s1 * e2, s2 * e2)
    tau3 = sea_tau3(n, gains, p, e1, e2, x2, tuple(theta_hat0), beta,
                    dr, dr1, dr2)
    return (x1, x2, e3 + tau3)


@dataclass(frozen=True)
class FigureMetrics:
    sup_e1_tail: float
    sup_tilde_tail: float
    settle_time: float
    horizon: float
    runtime_s: float
    blown_up: bool


def reproduce_figures(theta=(0.2, 0.4), gains: SeaGains | None = None,
                      sat_params: SatParams | None = None, T: float = 60.0,
                      settle: float = 40.0, step: float = 1e-4,
                      theta_hat0=(0.0, 0.35), e0=(0.2, 0.0, 0.0),
                      variant: str = "pde") -> tuple[FigureMetrics, SeaRun]:
    """Run the convergence experiment of the case study and report tail bounds."""
    import time as _time

    n = normal_from_theta(tuple(theta))
    g = gains or SeaGains()
    p = sat_params or SatParams(l_s=0.76, eps_s=0.4, l_theta=n.l_theta)
    x0 = default_initial_state(n, g, p, e0=e0, theta_hat0=theta_hat0)
    t0 = _time.time()
    run = run_sea(n, g, p, x0=x0, theta_hat0=theta_hat0, T=T, step=step,
                  log_every=max(1, int(round(0.01 / step))), variant=variant,
                  e_hat0=0.0 if variant == "pde" else e0[0] * 0.0)
    el = _time.time() - t0
    mask = run.t >= settle
    sup_e1 = float(np.max(np.abs(run.e[mask, 0]))) if mask.any() else math.inf
    sup_t = float(np.max(np.linalg.norm(run.theta_tilde[mask], axis=1))) \
        if mask.any() else math.inf
    return FigureMetrics(sup_e1_tail=sup_e1, sup_tilde_tail=sup_t,
                         settle_time=settle, horizon=T, runtime_s=el,
                         blown_up=run.blown_up), run


# --------------------------------------------------------------------------
# filter-based variant instantiation
# --------------------------------------------------------------------------


def estimate_rho3(n: SeaNormal, p: SatParams, radius_grid, tilde_radius: float,
                  n_samples: int = 1024, seed: int = 55,
                  x_floor: float = 0.05, inflation: float = 1.05) -> GainFn:
    """Sensitivity of the coupling to the filter error.

    Bounds ``|varsigma(x1 - eps) - varsigma(x1)| |phi-mismatch|`` against
    ``gamma_s(|tilde|)`` over sampled states, per filter-error radius.
    """
    from .gains import tabulated_gain
    from .plant import sample_ball

    gamma = GammaSParams.from_sat(p, q=2)
    clamp = sea_x_floor(x_floor)
    rng = np.random.default_rng(seed)
    theta_pts = sea_subsystem_plant(n).theta_set.sample(n_samples, seed=seed)
    tilde_pts = sample_ball(n_samples, 2, tilde_radius, seed=seed + 1)
    ts = rng.uniform(0, 2 * math.pi, n_samples)
    e1s = rng.uniform(-1.5, 1.5, n_samples)
    eps_unit = rng.uniform(-1.0, 1.0, n_samples)
    values = []
    for s in radius_grid:
        worst = 0.0
        for k in range(n_samples):
            dr = math.exp(math.sin(ts[k]))
            x1 = float(clamp(np.array([e1s[k] + dr]))[0])
            xh = float(clamp(np.array([x1 - s * eps_unit[k]]))[0])
            th = theta_pts[k]
            w = th + tilde_pts[k]
            v1, v2 = sat(w[0], p), sat(w[1], p)
            mism = sea_phi(n, v1, v2, x1) - sea_phi(n, th[0], th[1], x1)
            dsig = (np.array(sea_varsigma(n, x1))
                    - np.array(sea_varsigma(n, xh)))
            gs = gamma_s(float(np.linalg.norm(tilde_pts[k])), gamma)
            if gs > 1e-9:
                worst = max(worst, float(np.linalg.norm(dsig)) * abs(mism) / gs)
        values.append(worst * inflation)
    grid0 = [0.0] + list(radius_grid)
    return tabulated_gain(grid0, [0.0] + values, class_tag="K", tail="linear",
                          name="rho3")


def fit_power_law(target, grid, inflation: float = 1.05) -> tuple[float, float]:
    """Odd power law ``c |s|^p`` dominating ``target`` on the grid.

    The exponent comes from a log-log regression of the target; the
    coefficient is lifted until the law dominates every grid point.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.array([max(float(target(s)), 0.0) for s in grid])
    mask = vals > 0
    if not np.any(mask):
        return 0.0, 1.0
    lg, lv = np.log(grid[mask]), np.log(vals[mask])
    p_exp = float(np.polyfit(lg, lv, 1)[0])
    p_exp = min(max(p_exp, 0.05), 4.0)
    c = float(np.max(vals / grid**p_exp)) * inflation
    return c, p_exp


@dataclass(frozen=True)
class SeaFilterDesign:
    """Filter-variant gains and the calibrated stabilizing terms."""

    gains_bundle: "Theorem4Gains"
    rho3: GainFn
    K1: tuple[float, float]
    K2: tuple[float, float]
    k_eps: float


def sea_theorem4(calib: SeaCalibration, tau_est: float | None = None,
                 tau_err_prime: float = 2.0, tau_err: float = 4.4,
                 k_eps: float = 5.0, fit_grid=None) -> SeaFilterDesign:
    """Instantiate the filter-design gain bundle for the actuator.

    The filter reconstructs the deflection error, whose model is exact, so
    the filter-error equation carries no parameter mismatch: the calibrated
    forcing bounds of that channel are identically zero and the first
    stabilizing term vanishes.  The second term keeps the formula's
    saturated-square part and is realized as a dominating odd power law.
    """
    from .gains import linear_gain
    from .network import theorem4_gains

    t_est = calib.tau_est if tau_est is None else tau_est
    if not (tau_err > tau_err_prime > t_est):
        t_est = min(t_est, 0.5 * (1.0 + tau_err_prime))
    rho3 = estimate_rho3(calib.normal, calib.sat,
                         (0.05, 0.1, 0.25, 0.5, 1.0, 2.0),
                         calib.tilde_radius, x_floor=calib.x_floor)
    alpha1 = GainFn(lambda s: s * s, class_tag="Kinf", name="alpha1")
    bundle = theorem4_gains(
        a1=calib.vest.a1, a_star=calib.vest.a_star,
        l_gamma=calib.gamma.l_gamma, rho2=calib.kappa2, rho3=rho3,
        alpha1=alpha1, gamma=calib.gamma, rho1=linear_gain(0.0),
        rho1_star=0.0, tau_est=t_est, tau_err_prime=tau_err_prime,
        tau_err=tau_err)
    if fit_grid is None:
        fit_grid = np.logspace(-6, 1, 80)
    k2_c, k2_p = fit_power_law(
        lambda s: bundle.pi_eps_tilde(bundle.gamma_tilde_eps(s * s)), fit_grid)
    # the filter-error channel has zero forcing: K1's target is identically 0
    return SeaFilterDesign(gains_bundle=bundle, rho3=rho3, K1=(0.0, 1.0),
                           K2=(k2_c, k2_p), k_eps=k_eps)

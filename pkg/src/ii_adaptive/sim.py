"""Deterministic ODE integration, closed-loop assembly, logging, CSV.

The fixed-step classical Runge-Kutta integrator is the reproducibility
baseline; an embedded Dormand-Prince pair with PI step control is available
for stiff configurations.  ``run_closed_loop`` assembles the loop selected by
a scenario: the actuator case study runs on its dedicated scalar path, the
benchmark plant runs on the generic array path.  The true parameter lives in
the harness only; logged estimation errors are reconstructed from logged
states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .scenario import Scenario, ScenarioError

__all__ = [
    "IntegratorError",
    "integrate",
    "Trajectory",
    "emit_csv",
    "read_csv",
    "run_closed_loop",
]


class IntegratorError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# generic integrators
# --------------------------------------------------------------------------

# Dormand-Prince 5(4) coefficients
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def integrate(rhs: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray,
              t0: float, T: float, method: str = "rk4", step: float = 1e-3,
              rtol: float = 1e-8, atol: float = 1e-10, log_every: int = 1,
              max_steps: int = 50_000_000):
    """Integrate ``ydot = rhs(t, y)`` over ``[t0, t0+T]``.

    Returns ``(t_log, y_log, blown_up)``.  The fixed-step method logs every
    ``log_every``-th step; the adaptive method logs every accepted step.
    Non-finite states truncate the trajectory and set the blow-up flag.
    """
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(np.asarray(rhs(t0, y), dtype=float))):
        raise IntegratorError("right-hand side not finite at the initial state")
    ts = [t0]
    ys = [y.copy()]
    blown = False

    if method == "rk4":
        n_steps = int(round(T / step))
        h = T / n_steps if n_steps else step
        t = t0
        for k in range(1, n_steps + 1):
            try:
                k1 = np.asarray(rhs(t, y), float)
                k2 = np.asarray(rhs(t + h / 2, y + h / 2 * k1), float)
                k3 = np.asarray(rhs(t + h / 2, y + h / 2 * k2), float)
                k4 = np.asarray(rhs(t + h, y + h * k3), float)
            except (OverflowError, FloatingPointError):
                blown = True
                break
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t0 + k * h
            if not np.all(np.isfinite(y)):
                blown = True
                break
            if k % log_every == 0:
                ts.append(t)
                ys.append(y.copy())
        return np.array(ts), np.array(ys), blown

    if method != "rk45":
        raise IntegratorError(f"unknown method {method!r}")

    t = t0
    t_end = t0 + T
    h = min(step if step else 1e-3, T)
    err_prev = 1.0
    n = 0
    while t < t_end - 1e-14:
        if n > max_steps:
            raise IntegratorError("step budget exhausted")
        h = min(h, t_end - t)
        ks = []
        try:
            for i in range(7):
                yi = y.copy()
                for j, a in enumerate(_DP_A[i]):
                    yi += h * a * ks[j]
                ks.append(np.asarray(rhs(t + _DP_C[i] * h, yi), float))
        except (OverflowError, FloatingPointError):
            blown = True
            break
        ks = np.array(ks)
        y5 = y + h * (_DP_B5 @ ks)
        y4 = y + h * (_DP_B4 @ ks)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean(((y5 - y4) / scale) ** 2)))
        if not math.isfinite(err):
            blown = True
            break
        if err <= 1.0:
            t += h
            y = y5
            if not np.all(np.isfinite(y)):
                blown = True
                break
            ts.append(t)
            ys.append(y.copy())
            # PI controller
            fac = 0.9 * (err + 1e-20) ** -0.7 * err_prev ** 0.4
            h *= min(5.0, max(0.2, fac))
            err_prev = max(err, 1e-10)
        else:
            h *= max(0.2, 0.9 * err ** -0.25)
            if h < 1e-14:
                blown = True
                break
        n += 1
    return np.array(ts), np.array(ys), blown


# --------------------------------------------------------------------------
# trajectory container and CSV schema
# --------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Time-indexed closed-loop log with the fixed column schema."""

    t: np.ndarray
    x: np.ndarray
    e: np.ndarray
    theta_hat: np.ndarray
    theta_tilde: np.ndarray
    eps_e: np.ndarray
    u: np.ndarray
    d: np.ndarray
    v_err: np.ndarray
    v_est: np.ndarray
    v_cl: np.ndarray
    blown_up: bool = False
    name: str = ""

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def q(self) -> int:
        return self.theta_hat.shape[1]

    def header(self) -> list[str]:
        cols = ["t"]
        cols += [f"x{i+1}" for i in range(self.n)]
        cols += [f"e{i+1}" for i in range(self.n)]
        cols += [f"theta_hat{i+1}" for i in range(self.q)]
        cols += [f"theta_tilde{i+1}" for i in range(self.q)]
        cols += [f"eps_e{i+1}" for i in range(self.n)]
        cols += [f"u{i+1}" for i in range(self.m)]
        cols += [f"d{i+1}" for i in range(self.m)]
        cols += ["V_err", "V_est", "V_cl"]
        return cols

    def matrix(self) -> np.ndarray:
        return np.column_stack([
            self.t, self.x, self.e, self.theta_hat, self.theta_tilde,
            self.eps_e, self.u, self.d, self.v_err, self.v_est, self.v_cl,
        ])


def emit_csv(traj: Trajectory, path: str | Path) -> Path:
    """Write the trajectory with 17-significant-digit decimal formatting."""
    path = Path(path)
    mat = traj.matrix()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(traj.header()) + "\n")
        for row in mat:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return path


def read_csv(path: str | Path) -> Trajectory:
    """Parse a trajectory CSV back into arrays (exact float round trip)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [list(map(float, line.strip().split(",")))
                for line in fh if line.strip()]
    mat = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))

    def count(prefix: str) -> int:
        return sum(1 for h in header if h.startswith(prefix)
                   and h[len(prefix):].isdigit())

    n = count("x")
    q = count("theta_hat")
    m = count("u")
    idx = {"t": 1, "x": n, "e": n, "theta_hat": q, "theta_tilde": q,
           "eps_e": n, "u": m, "d": m}
    pos = 0
    parts = {}
    for key, width in idx.items():
        parts[key] = mat[:, pos:pos + width]
        pos += width
    return Trajectory(
        t=parts["t"][:, 0] if mat.size else np.empty(0),
        x=parts["x"], e=parts["e"], theta_hat=parts["theta_hat"],
        theta_tilde=parts["theta_tilde"], eps_e=parts["eps_e"],
        u=parts["u"], d=parts["d"],
        v_err=mat[:, pos] if mat.size else np.empty(0),
        v_est=mat[:, pos + 1] if mat.size else np.empty(0),
        v_cl=mat[:, pos + 2] if mat.size else np.empty(0),
    )


# --------------------------------------------------------------------------
# closed-loop assembly
# --------------------------------------------------------------------------


def run_closed_loop(scn: Scenario) -> Trajectory:
    """Simulate the loop a scenario describes and return the decimated log."""
    if scn.plant["type"] == "sea":
        return _run_sea_scenario(scn)
    if scn.plant["type"] == "trig":
        return _run_trig_scenario(scn)
    raise ScenarioError(f"unsupported plant type {scn.plant['type']!r}")


def _disturbance_tuple(scn: Scenario):
    d = scn.disturbance
    return (d["type"], float(d["amp"]), float(d["freq"]), float(d["t_on"]))


def _run_sea_scenario(scn: Scenario) -> Trajectory:
    from . import sea as S
    from .gains import SatParams

    if scn.controller["variant"] not in ("sea", "robust"):
        raise ScenarioError("the actuator scenario needs controller.variant "
                            "'sea' (or 'robust' for the damped input)")
    p_cfg = scn.plant
    n = S.normal_from_theta(tuple(p_cfg["theta"]), Q0_l=p_cfg["Q0_l"],
                            Q0_u=p_cfg["Q0_u"], p_lo=p_cfg["p_lo"],
                            p_hi=p_cfg["p_hi"], m=p_cfg["m"],
                            mu_v=p_cfg["mu_v"])
    c = scn.controller
    k_d = float(c["k_d"]) if c["variant"] == "robust" else float(c["k_d"])
    gains = S.SeaGains(k1=c["k1"], k21=c["k21"], k22=c["k22"], k31=c["k31"],
                       k32=c["k32"], k33=c["k33"],
                       k_dz=scn.estimator["k_dz"], k_d=k_d,
                       tau3_exponent=c["tau3_exponent"])
    sat = SatParams(l_s=scn.sat["l_s"], eps_s=scn.sat["eps_s"],
                    l_theta=n.l_theta)
    variant = {"pde-beta": "pde", "filtered": "filtered"}[scn.estimator["variant"]]
    init = scn.initial
    if init.get("x0") is not None:
        x0 = tuple(float(v) for v in init["x0"])
    else:
        x0 = S.default_initial_state(n, gains, sat, e0=tuple(init["e0"]),
                                     theta_hat0=tuple(init["theta_hat0"]))
    if scn.integrator["method"] != "rk4":
        raise ScenarioError("the scalar actuator path is fixed-step rk4; "
                            "select integrator.method rk4")
    run = S.run_sea(n, gains, sat, x0=x0,
                    theta_hat0=tuple(init["theta_hat0"]), T=scn.horizon,
                    step=float(scn.integrator["step"]),
                    log_every=scn.log_every,
                    disturbance=_disturbance_tuple(scn), variant=variant,
                    e_hat0=float(init["e_hat0"]),
                    k_eps=float(scn.estimator["k_eps"]),
                    K1=tuple(scn.estimator["K1"]),
                    K2=tuple(scn.estimator["K2"]))
    N = run.t.size
    eps = np.zeros((N, 3))
    eps[:, 0] = run.eps
    v_err = np.einsum("bi,bi->b", run.e, run.e)
    traj = Trajectory(
        t=run.t, x=run.x, e=run.e, theta_hat=run.theta_hat,
        theta_tilde=run.theta_tilde, eps_e=eps,
        u=run.u[:, None], d=run.d[:, None], v_err=v_err,
        v_est=np.zeros(N), v_cl=np.zeros(N), blown_up=run.blown_up,
        name=scn.name)
    return traj


def _run_trig_scenario(scn: Scenario) -> Trajectory:
    import math as _m

    from .benchmarks import make_trig_diagonal
    from .controller import IdealLaw, nominal_u, nominal_u_filtered, robust_u
    from .estimator import (EstimatorState, estimator_filtered_rhs,
                            estimator_rhs, filter_rhs)
    from .gains import GainFn, SatParams, from_callable, linear_gain
    from .plant import error_rhs

    trig = make_trig_diagonal(control_gain=float(scn.plant["control_gain"]))
    plant, ref, shaping = trig.plant, trig.reference, trig.shaping
    theta = np.asarray(scn.plant["theta"], float)[:2]
    l_theta = scn.plant["l_theta"] or plant.theta_set.l_theta
    sat = SatParams(l_s=scn.sat["l_s"], eps_s=scn.sat["eps_s"],
                    l_theta=float(l_theta))
    law = IdealLaw(
        psi=trig.ideal_psi,
        V_err=lambda t, e: float(e @ e),
        dVerr_de=lambda t, e: 2.0 * np.asarray(e, float),
        alpha1=from_callable(lambda s: s**2, "Kinf"),
        alpha2=from_callable(lambda s: s**2, "Kinf"),
        alpha3=from_callable(lambda s: 2 * trig.control_gain * s**2, "Kinf"),
        alpha4=linear_gain(2.0),
    )
    k_dz = float(scn.estimator["k_dz"])
    k_eps = float(scn.estimator["k_eps"])
    k_d = float(scn.controller["k_d"])
    variant = scn.estimator["variant"]
    dist = _disturbance_tuple(scn)

    def d_fn(t: float) -> np.ndarray:
        kind, amp, freq, t_on = dist
        if kind == "zero":
            return np.zeros(2)
        if kind == "sine":
            return amp * _m.sin(freq * t) * np.ones(2)
        return (amp if t >= t_on else 0.0) * np.ones(2)

    K_fn = lambda epsv: k_eps * np.asarray(epsv, float)
    init = scn.initial
    e0 = np.asarray(init["e0"], float)[:2] if init.get("x0") is None else \
        np.asarray(init["x0"], float)[:2] - np.asarray(ref.x_r(0.0))
    th0 = np.asarray(init["theta_hat0"], float)[:2]

    if variant == "pde-beta":
        y0 = np.concatenate([e0, th0])
    else:
        eh0 = np.full(2, float(init["e_hat0"]))
        y0 = np.concatenate([e0, th0, eh0])

    def u_of(t, e, th, eh=None):
        xr = np.asarray(ref.x_r(t))
        dxr = np.asarray(ref.dx_r(t))
        if variant == "filtered":
            return nominal_u_filtered(xr, dxr, th, e, eh, shaping, sat, law)
        if scn.controller["variant"] == "robust" or k_d > 0:
            return robust_u(xr, dxr, th, e, shaping, sat, law, k_d, plant, t)
        return nominal_u(xr, dxr, th, e, shaping, sat, law)

    def rhs(t, y):
        e = y[:2]
        th = y[2:4]
        xr = np.asarray(ref.x_r(t))
        dxr = np.asarray(ref.dx_r(t))
        if variant == "pde-beta":
            u = u_of(t, e, th)
            e_dot = error_rhs(plant, ref, e, t, theta, u, d_fn(t))
            th_dot = estimator_rhs(th, e, xr, dxr, u, plant, shaping, sat, k_dz)
            return np.concatenate([e_dot, th_dot])
        eh = y[4:6]
        u = u_of(t, e, th, eh)
        e_dot = error_rhs(plant, ref, e, t, theta, u, d_fn(t))
        th_dot = estimator_filtered_rhs(EstimatorState(th, eh), e, xr, dxr, u,
                                        plant, shaping, K_fn, sat, k_dz)
        eh_dot = filter_rhs(eh, e, th, xr, dxr, u, plant, shaping.varsigma,
                            K_fn, sat)
        return np.concatenate([e_dot, th_dot, eh_dot])

    t_log, y_log, blown = integrate(
        rhs, y0, 0.0, scn.horizon, method=scn.integrator["method"],
        step=float(scn.integrator["step"]), rtol=float(scn.integrator["rtol"]),
        atol=float(scn.integrator["atol"]), log_every=scn.log_every)

    N = t_log.size
    x = np.array([y_log[i, :2] + np.asarray(ref.x_r(t_log[i]))
                  for i in range(N)])
    e = y_log[:, :2]
    th = y_log[:, 2:4]
    if variant == "filtered":
        eps = e - y_log[:, 4:6]
        tilde = np.array([th[i] - theta
                          + np.asarray(shaping.varsigma(y_log[i, 4:6]
                                                        + ref.x_r(t_log[i])))
                          @ e[i] for i in range(N)])
    else:
        eps = np.zeros((N, 2))
        tilde = np.array([th[i] - theta
                          + np.asarray(shaping.beta(e[i],
                                                    np.asarray(ref.x_r(t_log[i]))))
                          for i in range(N)])
    u_arr = np.array([u_of(t_log[i], e[i], th[i],
                           y_log[i, 4:6] if variant == "filtered" else None)
                      for i in range(N)])
    d_arr = np.array([d_fn(t) for t in t_log])
    return Trajectory(t=t_log, x=x, e=e, theta_hat=th, theta_tilde=tilde,
                      eps_e=eps, u=u_arr, d=d_arr,
                      v_err=np.einsum("bi,bi->b", e, e),
                      v_est=np.zeros(N), v_cl=np.zeros(N), blown_up=blown,
                      name=scn.name)

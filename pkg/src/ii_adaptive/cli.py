"""Command-line interface: simulate, verify, sweep.

Exit code 0 means every requested check passed; any blow-up, failed
certificate, or violated implication exits nonzero.  The output directory is
taken from ``--out``, then the ``II_ADAPTIVE_OUT`` environment variable, then
the working directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .scenario import Scenario, load_scenario
from .sim import emit_csv, run_closed_loop

__all__ = ["main"]


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("II_ADAPTIVE_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args) -> Scenario:
    scn = load_scenario(args.scenario)
    if args.seed is not None:
        scn = scn.override("seed", int(args.seed))
    return scn


def _cmd_simulate(args) -> int:
    scn = _load(args)
    traj = run_closed_loop(scn)
    out = _out_dir(args) / f"{scn.name}.csv"
    emit_csv(traj, out)
    tail = traj.t >= 0.5 * traj.t[-1] if traj.t.size else slice(0)
    print(f"wrote {out} ({traj.t.size} rows)")
    if traj.t.size:
        print(f"  final |e| = {np.linalg.norm(traj.e[-1]):.3e}, "
              f"final |theta_tilde| = {np.linalg.norm(traj.theta_tilde[-1]):.3e}")
        print(f"  tail sup|e| = {np.max(np.linalg.norm(traj.e[tail], axis=1)):.3e}")
    if traj.blown_up:
        print("  trajectory blew up (truncated)")
        return 1
    return 0


def _sea_setup(scn: Scenario):
    from . import sea as S
    from .gains import SatParams

    p_cfg = scn.plant
    if p_cfg["type"] != "sea":
        raise SystemExit("verification commands require an actuator scenario")
    n = S.normal_from_theta(tuple(p_cfg["theta"]), Q0_l=p_cfg["Q0_l"],
                            Q0_u=p_cfg["Q0_u"], p_lo=p_cfg["p_lo"],
                            p_hi=p_cfg["p_hi"], m=p_cfg["m"],
                            mu_v=p_cfg["mu_v"])
    c = scn.controller
    gains = S.SeaGains(k1=c["k1"], k21=c["k21"], k22=c["k22"], k31=c["k31"],
                       k32=c["k32"], k33=c["k33"], k_dz=scn.estimator["k_dz"],
                       k_d=c["k_d"], tau3_exponent=c["tau3_exponent"])
    sat = SatParams(l_s=scn.sat["l_s"], eps_s=scn.sat["eps_s"],
                    l_theta=n.l_theta)
    return S, n, gains, sat


def _cmd_verify_smallgain(args) -> int:
    from .network import certify, enumerate_simple_cycles

    scn = _load(args)
    S, n, gains, sat = _sea_setup(scn)
    calib = S.calibrate_sea(n, sat, gains, margin=scn.gamma_s["margin"],
                            n_samples=args.samples)
    net = S.sea_gain_network(gains, calib)
    cert = certify(net)
    out = _out_dir(args)
    report = out / f"{scn.name}_smallgain.txt"
    table = out / f"{scn.name}_smallgain.csv"
    grid = net.grid()
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("cycle,s,composed,margin\n")
        for res in cert.cycles:
            vals = res.composed.sample(grid)
            for s, v in zip(grid, vals):
                fh.write(f"{'>'.join(res.cycle)},{s:.17g},{v:.17g},"
                         f"{(s - v) / s:.17g}\n")
    lines = [calib.summary(), "", f"cycles: {len(cert.cycles)}"]
    for res in cert.cycles:
        lines.append(f"  {'>'.join(res.cycle)}: margin {res.margin:+.6g} "
                     f"at s = {res.worst_s:.3g} -> "
                     f"{'pass' if res.passed else 'FAIL'}")
    lines.append(f"certificate: {'PASS' if cert.passed else 'FAIL'} "
                 f"on grid [{net.s_min:g}, {net.s_max:g}] "
                 f"({net.n_grid} points)")
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    print(f"wrote {report} and {table}")
    return 0 if cert.passed else 1


def _cmd_verify_pe(args) -> int:
    from .lyapunov import check_pe

    scn = _load(args)
    S, n, gains, sat = _sea_setup(scn)
    M1 = S.sea_M1(n, 1.0)
    rep = check_pe(lambda t: M1(np.array([math.exp(math.sin(t))])),
                   2.0 * math.pi, np.linspace(0, 2 * math.pi, 5))
    closed = 2.0 * math.pi * min(2.0 * n.b2**2, 1.0)
    print(f"PE window 2*pi: mu = {rep.mu:.9f} (closed form {closed:.9f}, "
          f"relative gap {abs(rep.mu - closed) / closed:.2e})")
    print(f"persistently excited: {'yes' if rep.passed else 'NO'}")
    return 0 if rep.passed else 1


def _cmd_verify_lyapunov(args) -> int:
    from .lyapunov import check_lemma3_implication

    scn = _load(args)
    S, n, gains, sat = _sea_setup(scn)
    calib = S.calibrate_sea(n, sat, gains, margin=scn.gamma_s["margin"],
                            n_samples=args.samples)
    print(calib.summary())
    ev = S.sea_vest_evaluator(calib)
    scn_short = scn.override("horizon", min(scn.horizon, 10.0))
    init = scn_short.initial
    x0 = S.default_initial_state(n, gains, sat, e0=tuple(init["e0"]),
                                 theta_hat0=tuple(init["theta_hat0"]))
    run = S.run_sea(n, gains, sat, x0=x0,
                    theta_hat0=tuple(init["theta_hat0"]),
                    T=scn_short.horizon, step=float(scn.integrator["step"]),
                    log_every=max(scn.log_every * 10, 1000),
                    log_tilde_dot=True)
    rep = check_lemma3_implication(
        ev, calib.vest, kappa2=calib.kappa2, l_gamma=calib.gamma.l_gamma,
        tau_est=calib.tau_est, theta=np.asarray(n.theta),
        t_states=run.t, tilde_states=run.theta_tilde,
        e_norms=np.abs(run.e[:, 0]), tilde_dot_actual=run.tilde_dot)
    print(f"implication check: {rep.n_states} states, "
          f"{rep.n_level_active} level-active, {rep.n_violations} violations, "
          f"{rep.aux_violations} auxiliary-decrement violations")
    ok = rep.passed and rep.aux_violations == 0
    print(f"lyapunov verification: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _cmd_sweep(args) -> int:
    scn = _load(args)
    out = _out_dir(args)
    values = [float(v) for v in args.values.split(",")]
    rows = []
    worst = 0
    for v in values:
        s = scn.override(args.param, v)
        s = s.override("name", f"{scn.name}_{args.param.replace('.', '_')}_{v:g}")
        traj = run_closed_loop(s)
        emit_csv(traj, out / f"{s.name}.csv")
        tail = traj.t >= 0.5 * traj.t[-1]
        sup_e = float(np.max(np.linalg.norm(traj.e[tail], axis=1)))
        sup_t = float(np.max(np.linalg.norm(traj.theta_tilde[tail], axis=1)))
        rows.append((v, sup_e, sup_t, traj.blown_up))
        worst |= int(traj.blown_up)
    print(f"{args.param:>20} | tail sup|e| | tail sup|tilde| | blown")
    for v, se, st, bl in rows:
        print(f"{v:20g} | {se:11.4e} | {st:15.4e} | {bl}")
    return worst


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ii-adaptive",
        description="Adaptive-tracking simulation and certification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario file (YAML)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", default=None, help="seed override")

    p_sim = sub.add_parser("simulate", help="run a closed-loop simulation")
    common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_ver = sub.add_parser("verify", help="run a certification check")
    ver_sub = p_ver.add_subparsers(dest="check", required=True)
    for name, fn in (("smallgain", _cmd_verify_smallgain),
                     ("pe", _cmd_verify_pe),
                     ("lyapunov", _cmd_verify_lyapunov)):
        pc = ver_sub.add_parser(name)
        common(pc)
        pc.add_argument("--samples", type=int, default=1024)
        pc.set_defaults(func=fn)

    p_sweep = sub.add_parser("sweep", help="batch a parameter sweep")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True,
                         help="dotted scenario key, e.g. controller.k_d")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    p_sweep.set_defaults(func=_cmd_sweep)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

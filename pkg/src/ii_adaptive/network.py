"""ISS gain digraphs, simple-cycle enumeration and cyclic small-gain checks.

A :class:`GainNetwork` stores one class-K gain per directed influence edge.
Certification composes the edge gains around every simple cycle and demands
the composition stay strictly below the identity on a logarithmic grid; the
margin reported per cycle is the minimum relative gap.  The pointwise-on-R+
condition of the underlying theorem is not numerically checkable, so the grid
bounds are part of the certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import networkx as nx
import numpy as np

from .gains import GainFn, GammaSParams, ParameterError, compose, gamma_s, ominus

__all__ = [
    "GainNetwork",
    "CycleResult",
    "Certificate",
    "NetworkError",
    "enumerate_simple_cycles",
    "certify",
    "Theorem2Report",
    "check_theorem2_condition",
    "Theorem4Gains",
    "theorem4_gains",
]


class NetworkError(ValueError):
    """Structural problem in a gain network."""


@dataclass(frozen=True)
class GainNetwork:
    """Digraph of ISS subsystems with one gain per influence edge.

    ``edges[(src, dst)]`` holds the gain through which subsystem ``src``
    enters the implication-form certificate of subsystem ``dst`` (the
    ``gamma_{dst,src}`` of the cyclic small-gain condition).
    """

    nodes: tuple[str, ...]
    edges: dict[tuple[str, str], GainFn]
    s_min: float = 1e-8
    s_max: float = 1e8
    n_grid: int = 200

    def __post_init__(self) -> None:
        for (src, dst) in self.edges:
            if src == dst:
                raise NetworkError(f"self-loop on node {src!r}")
            if src not in self.nodes or dst not in self.nodes:
                raise NetworkError(f"edge ({src},{dst}) references unknown node")
        if not (0 < self.s_min < self.s_max):
            raise NetworkError("need 0 < s_min < s_max")

    def grid(self) -> np.ndarray:
        return np.logspace(math.log10(self.s_min), math.log10(self.s_max),
                           self.n_grid)

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges.keys())
        return g


def _canonical(cycle: Sequence[str], order: dict[str, int]) -> tuple[str, ...]:
    """Rotate so the smallest node (network order) comes first."""
    idx = min(range(len(cycle)), key=lambda i: order[cycle[i]])
    return tuple(cycle[idx:]) + tuple(cycle[:idx])


def enumerate_simple_cycles(net: GainNetwork) -> list[tuple[str, ...]]:
    """All simple directed cycles, one representative per rotation class.

    Each cycle is reported in influence order ``(v1, v2, ..., vr)`` meaning
    ``v1 -> v2 -> ... -> vr -> v1``, rotated so the smallest node leads.
    """
    order = {n: i for i, n in enumerate(net.nodes)}
    cycles = [_canonical(c, order) for c in nx.simple_cycles(net.digraph())]
    cycles = [c for c in cycles if len(c) >= 2]
    return sorted(set(cycles), key=lambda c: (len(c), [order[n] for n in c]))


@dataclass(frozen=True)
class CycleResult:
    cycle: tuple[str, ...]
    margin: float
    worst_s: float
    passed: bool
    composed: GainFn = field(repr=False)


@dataclass(frozen=True)
class Certificate:
    cycles: tuple[CycleResult, ...]
    passed: bool
    s_min: float
    s_max: float
    n_grid: int

    def failing(self) -> list[CycleResult]:
        return [c for c in self.cycles if not c.passed]


def cycle_gain(net: GainNetwork, cycle: Sequence[str]) -> GainFn:
    """Compose edge gains around ``cycle`` (influence order v1 -> v2 -> ...).

    The small-gain composition for the cycle ``(V_1 V_2 ... V_r V_1)`` is
    ``gamma_{1,2} o gamma_{2,3} o ... o gamma_{r,1}``; in influence order the
    innermost factor is the gain of the first influence edge.
    """
    chain: list[GainFn] = []
    r = len(cycle)
    for i in range(r):
        src = cycle[i]
        dst = cycle[(i + 1) % r]
        try:
            chain.append(net.edges[(src, dst)])
        except KeyError:
            raise NetworkError(f"missing edge gain for influence {src} -> {dst}")
    # outermost factor is the gain into the starting node
    return compose(list(reversed(chain)))


def certify(net: GainNetwork) -> Certificate:
    """Check the composed gain of every simple cycle against the identity."""
    grid = net.grid()
    results = []
    for cycle in enumerate_simple_cycles(net):
        g = cycle_gain(net, cycle)
        vals = g.sample(grid)
        rel = (grid - vals) / grid
        i = int(np.argmin(rel))
        results.append(CycleResult(cycle=cycle, margin=float(rel[i]),
                                   worst_s=float(grid[i]),
                                   passed=bool(rel[i] > 0.0), composed=g))
    return Certificate(cycles=tuple(results),
                       passed=all(r.passed for r in results),
                       s_min=net.s_min, s_max=net.s_max, n_grid=net.n_grid)


# --------------------------------------------------------------------------
# stability-condition reports for the matched designs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Theorem2Report:
    mode: str
    tau_err: float
    min_slack: float
    min_ratio: float
    worst_s: float
    passed: bool
    corollary1_constructible: bool
    grid: np.ndarray = field(repr=False)
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)


def check_theorem2_condition(alpha3: GainFn, gamma: GammaSParams, a_star: float,
                             l_gamma: float, kappa2: GainFn, alpha1: GainFn,
                             alpha2: GainFn, alpha4: GainFn, kappa1: GainFn,
                             tau_err: float, grid: np.ndarray,
                             mode: str = "nominal",
                             nu: GainFn | None = None,
                             rho2: GainFn | None = None) -> Theorem2Report:
    """Pointwise check of the decrement-domination condition on a grid.

    ``mode`` selects the inner coupling bound: ``"nominal"`` uses
    ``l_gamma * kappa2``, ``"robust"`` uses ``l_gamma * kappa2 + nu`` (the
    strictly larger perturbed bound), ``"filtered"`` uses ``l_gamma * rho2``.
    The report records the minimum slack ``alpha3 - tau_err * rhs`` and flags
    whether a sum-type Lyapunov function is constructible (requires the
    condition to hold with ``tau_err > 4``).
    """
    if tau_err <= 1.0:
        raise ParameterError("tau_err must exceed 1")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("empty grid")
    if mode == "nominal":
        inner = lambda s: l_gamma * kappa2(s)
    elif mode == "robust":
        if nu is None:
            raise ParameterError("robust mode needs nu")
        inner = lambda s: l_gamma * kappa2(s) + nu(s)
    elif mode == "filtered":
        if rho2 is None:
            raise ParameterError("filtered mode needs rho2")
        inner = lambda s: l_gamma * rho2(s)
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    if alpha1.class_tag != "Kinf":
        raise ParameterError("alpha1 must be class Kinf (invertible on R+)")

    lhs = alpha3.sample(grid)
    rhs = np.empty_like(lhs)
    for i, s in enumerate(grid):
        r = ominus(alpha1, alpha2(s), check=False)
        rhs[i] = (tau_err * gamma_s(a_star * inner(r), gamma)
                  * alpha4(s) * kappa1(s))
    slack = lhs - rhs
    ratio = np.where(rhs > 0, lhs / np.maximum(rhs, 1e-300), math.inf)
    i = int(np.argmin(slack))
    passed = bool(np.all(slack >= 0.0))
    return Theorem2Report(mode=mode, tau_err=tau_err,
                          min_slack=float(slack[i]),
                          min_ratio=float(np.min(ratio)),
                          worst_s=float(grid[i]), passed=passed,
                          corollary1_constructible=passed and tau_err > 4.0,
                          grid=grid, lhs=lhs, rhs=rhs)


# --------------------------------------------------------------------------
# filter-variant gain constructions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Theorem4Gains:
    """Gain bundle of the filter-based design's three-subsystem network."""

    gamma_tilde_e: GainFn
    gamma_tilde_eps: GainFn
    gamma_e_tilde: GainFn
    pi_eps_tilde: GainFn
    pi_eps_e: GainFn
    gamma_eps_tilde: GainFn
    gamma_eps_e: GainFn
    mu_prime: float
    tau_est: float
    tau_err_prime: float
    tau_err: float


def theorem4_gains(a1: float, a_star: float, l_gamma: float, rho2: GainFn,
                   rho3: GainFn, alpha1: GainFn, gamma: GammaSParams,
                   rho1: GainFn, rho1_star: float, tau_est: float,
                   tau_err_prime: float, tau_err: float,
                   mu_grid: np.ndarray | None = None) -> Theorem4Gains:
    """Construct the filter-design gains and the closing constant ``mu'``.

    ``mu'`` is the smallest grid-feasible constant in (0,1) with
    ``pi_eps_tilde(s)/2 <= pi_eps_tilde(mu' s)``; it exists because the
    coupling is linear-then-saturating in ``sqrt(s)``.
    """
    if not (tau_err > tau_err_prime > tau_est > 1.0):
        raise ParameterError("need tau_err > tau_err_prime > tau_est > 1")
    c = a1 * (tau_est * a_star * l_gamma) ** 2

    g_te = GainFn(lambda s: c * rho2(ominus(alpha1, s, check=False)) ** 2,
                  class_tag="K", name="gamma_tilde_e",
                  sup_limit=c * rho2.sup_limit ** 2 if math.isfinite(rho2.sup_limit)
                  else math.inf)
    c_eps = 4.0 * tau_est**2 / (tau_est - 1.0) ** 2 * c
    g_teps = GainFn(lambda s: c_eps * rho3(math.sqrt(s)) ** 2,
                    class_tag="K", name="gamma_tilde_eps",
                    sup_limit=c_eps * rho3.sup_limit ** 2
                    if math.isfinite(rho3.sup_limit) else math.inf)
    ratio = tau_est / tau_err_prime
    g_et = GainFn(lambda s: ominus(g_te, ratio * s, check=False),
                  class_tag="K", name="gamma_e_tilde")

    def pi_t(s: float) -> float:
        root = gamma_s(math.sqrt(max(s, 0.0) / a1), gamma)
        return rho1_star * root + 0.25 * root**2

    pi_eps_tilde = GainFn(pi_t, class_tag="K",
                          sup_limit=rho1_star * gamma.l_gamma
                          + 0.25 * gamma.l_gamma**2,
                          name="pi_eps_tilde")
    pi_eps_e = GainFn(lambda s: rho1(ominus(alpha1, s, check=False)) ** 2,
                      class_tag="K", name="pi_eps_e",
                      sup_limit=rho1.sup_limit ** 2
                      if math.isfinite(rho1.sup_limit) else math.inf)

    if mu_grid is None:
        mu_grid = np.logspace(-8, 8, 161)
    mu_prime = 0.0
    for cand in np.linspace(0.05, 0.999, 191):
        ok = True
        for s in mu_grid:
            if 0.5 * pi_t(float(s)) > pi_t(cand * float(s)) + 1e-15:
                ok = False
                break
        if ok:
            mu_prime = float(cand)
            break
    if mu_prime == 0.0 or mu_prime >= 1.0:
        raise ParameterError("no closing constant mu' in (0,1) found on the grid")

    g_eps_t = GainFn(lambda s: ominus(g_teps, mu_prime * s, check=False),
                     class_tag="K", name="gamma_eps_tilde")

    def g_eps_e_fn(s: float) -> float:
        v = pi_eps_e(s)
        if v == 0.0:
            # no tracking-error forcing reaches the filter channel: the
            # influence gain is identically zero and the cycle degenerates
            return 0.0
        v = ominus(pi_eps_e, 0.5 * v, check=False)
        # inverse of g_et in closed form: g_et(y) = g_te^{-1}(ratio y)
        v = g_te(v) / ratio
        return ominus(g_teps, v, check=False)

    g_eps_e = GainFn(g_eps_e_fn, class_tag="K", name="gamma_eps_e")

    return Theorem4Gains(gamma_tilde_e=g_te, gamma_tilde_eps=g_teps,
                         gamma_e_tilde=g_et, pi_eps_tilde=pi_eps_tilde,
                         pi_eps_e=pi_eps_e, gamma_eps_tilde=g_eps_t,
                         gamma_eps_e=g_eps_e, mu_prime=mu_prime,
                         tau_est=tau_est, tau_err_prime=tau_err_prime,
                         tau_err=tau_err)


def filter_network(g: Theorem4Gains, s_min: float = 1e-8, s_max: float = 1e8,
                   n_grid: int = 200) -> GainNetwork:
    """The three-node network (err, est, filter) of the filter-based design."""
    return GainNetwork(
        nodes=("e", "tilde", "eps"),
        edges={
            ("e", "tilde"): g.gamma_tilde_e,
            ("tilde", "e"): g.gamma_e_tilde,
            ("eps", "tilde"): g.gamma_tilde_eps,
            ("tilde", "eps"): g.gamma_eps_tilde,
            ("e", "eps"): g.gamma_eps_e,
        },
        s_min=s_min, s_max=s_max, n_grid=n_grid,
    )

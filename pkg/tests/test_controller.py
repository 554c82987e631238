import math

import numpy as np
import pytest

from ii_adaptive.controller import IdealLaw, nominal_u, nominal_u_filtered, robust_u
from ii_adaptive.estimator import estimation_error
from ii_adaptive.gains import SatParams, from_callable, linear_gain, satv
from ii_adaptive.plant import error_rhs, tilde_phi_s

SAT = SatParams(l_s=1.2, eps_s=0.2, l_theta=0.6)


@pytest.fixture(scope="module")
def law(trig):
    return IdealLaw(
        psi=trig.ideal_psi,
        V_err=lambda t, e: float(np.dot(e, e)),
        dVerr_de=lambda t, e: 2.0 * np.asarray(e, float),
        alpha1=from_callable(lambda s: s**2, "Kinf"),
        alpha2=from_callable(lambda s: s**2, "Kinf"),
        alpha3=from_callable(lambda s: 4.0 * s**2, "Kinf"),
        alpha4=linear_gain(2.0),
    )


class TestNominal:
    def test_on_manifold_matches_ideal(self, trig, law, rng):
        """With theta_hat + beta equal to the true parameter inside the
        saturation box, the law equals the known-parameter feedback."""
        theta = np.array([0.3, -0.2])
        for _ in range(10):
            t = float(rng.uniform(0, 2 * math.pi))
            e = rng.normal(size=2) * 0.5
            xr = np.asarray(trig.reference.x_r(t))
            dxr = np.asarray(trig.reference.dx_r(t))
            th_hat = theta - np.asarray(trig.shaping.beta(e, xr))
            u = nominal_u(xr, dxr, th_hat, e, trig.shaping, SAT, law)
            ideal = trig.ideal_psi(xr, dxr, theta, e)
            assert u == pytest.approx(ideal, abs=1e-12)

    def test_closed_loop_identity(self, trig, law, rng):
        """Substituting the law into the error dynamics leaves the ideal field
        at the saturated estimate minus the parameter-mismatch term."""
        p, ref, sh = trig.plant, trig.reference, trig.shaping
        theta = np.array([0.3, -0.2])
        for _ in range(50):
            t = float(rng.uniform(0, 2 * math.pi))
            e = rng.normal(size=2)
            th_hat = rng.normal(size=2)
            xr = np.asarray(ref.x_r(t))
            dxr = np.asarray(ref.dx_r(t))
            u = nominal_u(xr, dxr, th_hat, e, sh, SAT, law)
            e_dot = error_rhs(p, ref, e, t, theta, u)
            w = satv(th_hat + np.asarray(sh.beta(e, xr)), SAT)
            ideal_field = error_rhs(p, ref, e, t, w,
                                    np.asarray(trig.ideal_psi(xr, dxr, w, e)))
            tilde = estimation_error(th_hat, theta, e, xr, sh)
            mismatch = tilde_phi_s(p, SAT, theta, tilde, e + xr)
            assert np.max(np.abs(e_dot - (ideal_field - mismatch))) <= 1e-10


class TestRobust:
    def test_reduces_to_nominal_at_zero_damping(self, trig, law, rng):
        theta_hat = rng.normal(size=2)
        e = rng.normal(size=2)
        t = 0.7
        xr = np.asarray(trig.reference.x_r(t))
        dxr = np.asarray(trig.reference.dx_r(t))
        a = nominal_u(xr, dxr, theta_hat, e, trig.shaping, SAT, law)
        b = robust_u(xr, dxr, theta_hat, e, trig.shaping, SAT, law, 0.0,
                     trig.plant, t)
        assert np.array_equal(a, b)

    def test_zero_gradient_at_origin(self, trig, law):
        t = 0.2
        xr = np.asarray(trig.reference.x_r(t))
        dxr = np.asarray(trig.reference.dx_r(t))
        e = np.zeros(2)
        a = nominal_u(xr, dxr, np.zeros(2), e, trig.shaping, SAT, law)
        b = robust_u(xr, dxr, np.zeros(2), e, trig.shaping, SAT, law, 3.0,
                     trig.plant, t)
        assert a == pytest.approx(b, abs=1e-15)

    def test_damping_dissipates(self, trig, law, rng):
        """The damping's power through the input channel is the negative
        square of the projected gradient."""
        for _ in range(20):
            t = float(rng.uniform(0, 2 * math.pi))
            e = rng.normal(size=2)
            th = rng.normal(size=2)
            k_d = float(rng.uniform(0.1, 5.0))
            xr = np.asarray(trig.reference.x_r(t))
            dxr = np.asarray(trig.reference.dx_r(t))
            u_n = nominal_u(xr, dxr, th, e, trig.shaping, SAT, law)
            u_r = robust_u(xr, dxr, th, e, trig.shaping, SAT, law, k_d,
                           trig.plant, t)
            grad = law.dVerr_de(t, e)
            g = np.asarray(trig.plant.g1(e + xr))
            power = float((grad @ g) @ (u_r - u_n))
            assert power == pytest.approx(-k_d * np.dot(grad @ g, grad @ g),
                                          rel=1e-12, abs=1e-12)
            assert power <= 0.0


class TestFilteredLaw:
    def test_matches_nominal_when_filter_converged(self, trig, law, rng):
        for _ in range(10):
            t = float(rng.uniform(0, 2 * math.pi))
            e = rng.normal(size=2) * 0.4
            th = rng.normal(size=2) * 0.4
            xr = np.asarray(trig.reference.x_r(t))
            dxr = np.asarray(trig.reference.dx_r(t))
            # with e_hat = e the shaping argument agrees with varsigma(x)
            u_f = nominal_u_filtered(xr, dxr, th, e, e, trig.shaping, SAT, law)
            w_a = th + np.asarray(trig.shaping.varsigma(e + xr)) @ e
            u_direct = law.psi(xr, dxr, satv(w_a, SAT), e)
            assert u_f == pytest.approx(np.atleast_1d(u_direct), abs=1e-12)

    def test_ideal_decrement_along_known_parameter_loop(self, trig, law, rng):
        """Sanity of the certificate data: along the known-parameter loop the
        decrement bound holds at sampled states."""
        p, ref = trig.plant, trig.reference
        theta = np.array([0.2, 0.5])
        for _ in range(50):
            t = float(rng.uniform(0, 2 * math.pi))
            e = rng.normal(size=2)
            xr = np.asarray(ref.x_r(t))
            dxr = np.asarray(ref.dx_r(t))
            u = np.asarray(trig.ideal_psi(xr, dxr, theta, e))
            e_dot = error_rhs(p, ref, e, t, theta, u)
            vdot = float(law.dVerr_de(t, e) @ e_dot)
            assert vdot <= -law.alpha3(float(np.linalg.norm(e))) + 1e-9

import math

import numpy as np
import pytest

from ii_adaptive.gains import GainFn, GammaSParams, SatParams, from_callable, linear_gain
from ii_adaptive.lyapunov import (
    AuxiliaryField,
    CertificateError,
    VestConstants,
    VestEvaluator,
    build_vcl,
    check_lemma3_implication,
    check_monotonicity,
    check_pe,
    estimate_a_constants,
    integrate_flow,
    sigma_tilde_e,
)

SAT = SatParams(l_s=1.2, eps_s=0.2, l_theta=0.6)


def linear_field(q=2):
    """Synthetic test field H = -tilde (exact flow e^{-tau})."""
    return AuxiliaryField(
        q=q,
        h=lambda t, theta, tilde: -tilde,
        dh_dtilde=lambda t, theta, tilde: np.broadcast_to(
            -np.eye(tilde.shape[1]), tilde.shape + (tilde.shape[1],)).copy(),
    )


class TestFlowIntegral:
    def test_zero_initial_condition(self):
        ev = VestEvaluator(field=linear_field(), delta=1.0)
        tiny = ev.eval(0.0, np.array([0.0, 0.0]) + 1e-300, np.zeros(2))
        assert tiny <= 1e-30

    def test_closed_form_linear(self):
        # V_est = int_0^1 e^{-2 tau} dtau = (1 - e^-2)/2
        ev = VestEvaluator(field=linear_field(1), delta=1.0)
        v = ev.eval(0.0, np.array([1.0]), np.zeros(1))
        assert v == pytest.approx((1 - math.exp(-2)) / 2, abs=1e-8)

    def test_upper_bound_delta_norm_sq(self, rng):
        ev = VestEvaluator(field=linear_field(), delta=1.7, n_steps=500)
        tilde = rng.normal(size=(64, 2)) * 3
        res = ev.eval_batch(np.zeros(64), tilde, np.zeros((64, 2)))
        assert np.all(res.vest <= 1.7 * np.einsum("bi,bi->b", tilde, tilde) + 1e-9)

    def test_monotone_flow_has_no_growth(self, rng):
        ev = VestEvaluator(field=linear_field(), delta=1.0, n_steps=300)
        res = ev.eval_batch(np.zeros(16), rng.normal(size=(16, 2)),
                            np.zeros((16, 2)))
        assert res.max_growth <= 1e-12

    def test_blowup_raises(self):
        bad = AuxiliaryField(q=1, h=lambda t, th, x: x * x * x * 50.0)
        with pytest.raises(CertificateError):
            integrate_flow(bad, np.zeros(1), np.zeros((1, 1)),
                           np.array([[2.0]]), 5.0, 400)

    def test_gradient_matches_finite_differences(self, trig, rng):
        field = trig.aux_field(SAT, k_dz=3.0)
        ev = VestEvaluator(field=field, delta=2 * math.pi, n_steps=600)
        theta = np.array([0.2, -0.3])
        for _ in range(12):
            tilde = rng.normal(size=2) * 1.2
            t0 = float(rng.uniform(0, 2 * math.pi))
            res = ev.eval_batch(np.array([t0]), tilde[None, :], theta[None, :],
                                with_grad=True)
            grad = res.grad[0]
            fd = np.zeros(2)
            h = 1e-5
            for k in range(2):
                dk = np.zeros(2)
                dk[k] = h
                fd[k] = (ev.eval(t0, tilde + dk, theta)
                         - ev.eval(t0, tilde - dk, theta)) / (2 * h)
            assert np.max(np.abs(grad - fd)) <= 1e-5 * max(1.0, np.max(np.abs(grad)))


class TestAConstants:
    def test_synthetic_linear(self, rng):
        ev = VestEvaluator(field=linear_field(), delta=1.0)
        tilde = rng.normal(size=(128, 2))
        tilde /= np.linalg.norm(tilde, axis=1, keepdims=True)
        tilde *= rng.uniform(0.2, 3.0, size=(128, 1))
        consts = estimate_a_constants(ev, np.zeros((128, 2)), tilde,
                                      np.zeros(128))
        v_ratio = (1 - math.exp(-2)) / 2
        assert consts.a2 == 1.0
        assert consts.a1 == pytest.approx(0.95 * v_ratio, rel=1e-6)
        assert consts.a3 == pytest.approx(0.95 * (1 - math.exp(-2)), rel=1e-6)
        assert consts.a4 == pytest.approx(1.05 * (1 - math.exp(-2)), rel=1e-6)

    def test_a_star_formula(self):
        # direct check of the combination formula on hand inputs
        c = VestConstants(a1=1.0, a2=4.0, a3=2.0, a4=3.0,
                          a_star=math.sqrt(4.0) * 3.0 / (math.sqrt(1.0) * 2.0),
                          a1_raw=1, a3_raw=2, a4_raw=3, h_bound=1,
                          a4_formula=0, monotone_growth=0, n_samples=1)
        assert c.a_star == pytest.approx(3.0)

    def test_sandwich_bounds_hold_on_fresh_samples(self, trig, rng):
        field = trig.aux_field(SAT, k_dz=3.0)
        ev = VestEvaluator(field=field, delta=2 * math.pi, n_steps=400)
        theta = trig.plant.theta_set.sample(64, seed=5)
        tilde = rng.normal(size=(64, 2))
        tilde /= np.linalg.norm(tilde, axis=1, keepdims=True)
        tilde *= rng.uniform(0.1, 2.5, size=(64, 1))
        ts = rng.uniform(0, 2 * math.pi, 64)
        consts = estimate_a_constants(ev, theta, tilde, ts)
        fresh_theta = trig.plant.theta_set.sample(64, seed=99)
        fresh_tilde = rng.normal(size=(64, 2))
        fresh_tilde /= np.linalg.norm(fresh_tilde, axis=1, keepdims=True)
        fresh_tilde *= rng.uniform(0.1, 2.5, size=(64, 1))
        fresh_t = rng.uniform(0, 2 * math.pi, 64)
        res = ev.eval_batch(fresh_t, fresh_tilde, fresh_theta)
        nsq = np.einsum("bi,bi->b", fresh_tilde, fresh_tilde)
        assert np.all(res.vest >= consts.a1 * nsq - 1e-9)
        assert np.all(res.vest <= consts.a2 * nsq + 1e-9)

    def test_decrement_holds_with_deflated_a3(self, trig, rng):
        field = trig.aux_field(SAT, k_dz=3.0)
        ev = VestEvaluator(field=field, delta=2 * math.pi, n_steps=400)
        theta = trig.plant.theta_set.sample(64, seed=11)
        tilde = rng.normal(size=(64, 2))
        tilde /= np.linalg.norm(tilde, axis=1, keepdims=True)
        tilde *= rng.uniform(0.1, 2.5, size=(64, 1))
        ts = rng.uniform(0, 2 * math.pi, 64)
        consts = estimate_a_constants(ev, theta, tilde, ts)
        res = ev.eval_batch(ts, tilde, theta)
        nsq = np.einsum("bi,bi->b", tilde, tilde)
        vdot = res.phi_end_sq - nsq
        assert np.all(vdot <= -consts.a3 * nsq + 1e-9)


class TestPE:
    def test_constant_matrix(self):
        P = np.array([[2.0, 0.5], [0.5, 1.0]])
        rep = check_pe(lambda t: P, delta=1.5, t_grid=[0.0, 1.0, 2.0])
        lam = np.linalg.eigvalsh(P + P.T)[0]
        assert rep.mu == pytest.approx(1.5 * lam, rel=1e-9)
        assert rep.passed

    def test_zero_matrix_fails(self):
        rep = check_pe(lambda t: np.zeros((2, 2)), delta=2.0, t_grid=[0.0])
        assert rep.mu == pytest.approx(0.0, abs=1e-12)
        assert not rep.passed

    def test_trig_regressor_window(self, trig):
        # closed form: int_0^{2pi} diag(2 sin^2(0.8 sin t), 2 cos^2(0.8 cos t)) dt
        from scipy.integrate import quad

        rep = check_pe(lambda t: trig.M1(np.asarray(trig.reference.x_r(t))),
                       delta=2 * math.pi, t_grid=np.linspace(0, 2 * math.pi, 7))
        i1 = quad(lambda t: 2 * math.sin(0.8 * math.sin(t)) ** 2, 0, 2 * math.pi)[0]
        i2 = quad(lambda t: 2 * math.cos(0.8 * math.cos(t)) ** 2, 0, 2 * math.pi)[0]
        assert rep.mu == pytest.approx(min(i1, i2), rel=1e-7)


class TestMonotonicity:
    def test_linear_case_equality(self, trig, rng):
        ts = rng.uniform(0, 2 * math.pi, 8)
        xr = np.array([trig.reference.x_r(t) for t in ts])
        theta = trig.plant.theta_set.sample(16, seed=0)
        prime = rng.uniform(-1.2, 1.2, size=(16, 2))
        prime = prime[np.linalg.norm(prime, axis=1) <= SAT.l_s]
        rep = check_monotonicity(
            phi=trig.plant.phi, varsigma=trig.shaping.varsigma, M1=trig.M1,
            xr_samples=xr, theta_samples=theta, prime_samples=prime,
            l_s=SAT.l_s, l_theta=SAT.l_theta, q=2)
        assert rep.passed
        assert rep.max_violation_lower <= 1e-9

    def test_precondition_enforced(self, trig):
        with pytest.raises(Exception):
            check_monotonicity(
                phi=trig.plant.phi, varsigma=trig.shaping.varsigma, M1=trig.M1,
                xr_samples=np.zeros((1, 2)), theta_samples=np.zeros((1, 2)),
                prime_samples=np.zeros((1, 2)),
                l_s=0.7, l_theta=0.6, q=2)

    def test_wrong_m1_detected(self, trig, rng):
        big_m1 = lambda xr: 10.0 * np.eye(2)
        ts = rng.uniform(0, 2 * math.pi, 4)
        xr = np.array([trig.reference.x_r(t) for t in ts])
        rep = check_monotonicity(
            phi=trig.plant.phi, varsigma=trig.shaping.varsigma, M1=big_m1,
            xr_samples=xr, theta_samples=trig.plant.theta_set.sample(8, seed=1),
            prime_samples=rng.uniform(-0.8, 0.8, size=(8, 2)),
            l_s=SAT.l_s, l_theta=SAT.l_theta, q=2)
        assert not rep.passed


class TestLemma3:
    def setup_eval(self, trig):
        field = trig.aux_field(SAT, k_dz=3.0)
        ev = VestEvaluator(field=field, delta=2 * math.pi, n_steps=400)
        rng = np.random.default_rng(3)
        theta = trig.plant.theta_set.sample(48, seed=2)
        tilde = rng.normal(size=(48, 2))
        tilde /= np.linalg.norm(tilde, axis=1, keepdims=True)
        tilde *= rng.uniform(0.1, 2.0, size=(48, 1))
        consts = estimate_a_constants(ev, theta, tilde,
                                      rng.uniform(0, 2 * math.pi, 48))
        return ev, consts

    def test_zero_input_states_pass(self, trig, rng):
        """With e = 0 the level condition is vacuous and the pure window
        decrement must hold everywhere."""
        ev, consts = self.setup_eval(trig)
        theta = np.array([0.2, -0.3])
        tilde = rng.normal(size=(32, 2))
        tilde /= np.linalg.norm(tilde, axis=1, keepdims=True)
        tilde *= rng.uniform(0.1, 2.0, size=(32, 1))
        ts = rng.uniform(0, 2 * math.pi, 32)
        theta_b = np.broadcast_to(theta, tilde.shape)
        h = ev.field.h(ts, theta_b, tilde)
        rep = check_lemma3_implication(
            ev, consts, kappa2=linear_gain(1.0), l_gamma=2.0, tau_est=1.4,
            theta=theta, t_states=ts, tilde_states=tilde,
            e_norms=np.zeros(32), tilde_dot_actual=h)
        assert rep.n_level_active == 32
        assert rep.n_violations == 0
        assert rep.aux_violations == 0
        assert rep.passed

    def test_slowed_field_produces_violations(self, trig, rng):
        """An actual velocity slower than the certified field must trip the
        zero-input decrement check."""
        ev, consts = self.setup_eval(trig)
        theta = np.array([0.2, -0.3])
        tilde = rng.normal(size=(24, 2))
        tilde /= np.linalg.norm(tilde, axis=1, keepdims=True)
        tilde *= rng.uniform(0.5, 2.0, size=(24, 1))
        ts = rng.uniform(0, 2 * math.pi, 24)
        theta_b = np.broadcast_to(theta, tilde.shape)
        h = ev.field.h(ts, theta_b, tilde)
        rep = check_lemma3_implication(
            ev, consts, kappa2=linear_gain(1.0), l_gamma=2.0, tau_est=1.4,
            theta=theta, t_states=ts, tilde_states=tilde,
            e_norms=np.zeros(24), tilde_dot_actual=0.05 * h)
        assert rep.n_violations > 0
        assert not rep.passed


class TestSumLyapunov:
    GS = GammaSParams(L0=2.0, margin=0.1)

    def make(self):
        consts = VestConstants(a1=0.5, a2=2.0, a3=0.8, a4=2.5,
                               a_star=math.sqrt(2.0) * 2.5 / (math.sqrt(0.5) * 0.8),
                               a1_raw=0.5, a3_raw=0.8, a4_raw=2.5, h_bound=1.0,
                               a4_formula=0.0, monotone_growth=0.0, n_samples=1)
        alpha1 = from_callable(lambda s: s**2, "Kinf")
        alpha2 = from_callable(lambda s: s**2, "Kinf")
        alpha4 = linear_gain(2.0)
        kappa1 = from_callable(lambda s: 1.0 + 0.3 * s, "SN")
        kappa2 = linear_gain(0.6)
        lyap, blocks = build_vcl(alpha1, alpha2, alpha4, kappa1, kappa2,
                                 self.GS, consts, tau1=2.1, tau2=2.1,
                                 tau_err=4.5)
        return lyap, blocks

    def test_zero_at_origin(self):
        lyap, _ = self.make()
        assert lyap.value(0.0, 0.0) == 0.0

    def test_positive_away_from_origin(self, rng):
        lyap, _ = self.make()
        for _ in range(50):
            v_err = float(rng.uniform(0, 4))
            v_est = float(rng.uniform(0, 4))
            if v_err + v_est < 1e-9:
                continue
            assert lyap.value(v_err, v_est) > 0.0

    def test_monotone_in_both_arguments(self):
        lyap, _ = self.make()
        assert lyap.value(2.0, 1.0) > lyap.value(1.0, 1.0)
        assert lyap.value(1.0, 2.0) > lyap.value(1.0, 1.0)

    def test_tau_constraints(self):
        consts = VestConstants(a1=0.5, a2=2.0, a3=0.8, a4=2.5, a_star=8.8,
                               a1_raw=0.5, a3_raw=0.8, a4_raw=2.5, h_bound=1.0,
                               a4_formula=0.0, monotone_growth=0.0, n_samples=1)
        with pytest.raises(Exception):
            build_vcl(from_callable(lambda s: s**2, "Kinf"),
                      from_callable(lambda s: s**2, "Kinf"),
                      linear_gain(2.0), linear_gain(1.0), linear_gain(1.0),
                      self.GS, consts, tau1=1.5, tau2=2.1, tau_err=4.0)


def test_sigma_tilde_e_formula():
    k2 = linear_gain(0.5)
    val = sigma_tilde_e(2.0, a1=0.5, tau_est=1.4, a_star=10.0, l_gamma=2.0,
                        kappa2=k2)
    assert val == pytest.approx(0.5 * (1.4 * 10.0 * 2.0) ** 2 * 1.0 ** 2)

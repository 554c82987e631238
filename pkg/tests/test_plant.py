import math

import numpy as np
import pytest

from ii_adaptive.gains import SatParams, satv
from ii_adaptive.plant import (
    Plant,
    PlantSpecError,
    Reference,
    ThetaSet,
    error_rhs,
    estimate_kappa,
    plant_rhs,
    sample_ball,
    tilde_phi_s,
)

SAT = SatParams(l_s=1.2, eps_s=0.2, l_theta=0.6)


class TestThetaSet:
    def test_ball_l_theta(self):
        s = ThetaSet.ball(radius=0.6, dim=2)
        assert s.l_theta == pytest.approx(0.6)
        assert s.contains([0.3, 0.3])
        assert not s.contains([0.6, 0.6])

    def test_box_l_theta_from_vertices(self):
        s = ThetaSet.box([-0.3, -0.4], [0.5, 0.2])
        assert s.l_theta == pytest.approx(math.hypot(0.5, 0.4))
        assert s.vertices().shape == (4, 2)

    def test_samples_inside(self):
        s = ThetaSet.ball(radius=0.6, dim=3)
        pts = s.sample(512, seed=3)
        assert np.all(np.linalg.norm(pts, axis=1) <= 0.6 + 1e-12)
        b = ThetaSet.box([-1, 0], [1, 2])
        pts = b.sample(512, seed=3)
        assert np.all(pts[:, 0] >= -1) and np.all(pts[:, 1] <= 2)


class TestSampleBall:
    def test_radius_and_determinism(self):
        a = sample_ball(256, 2, 1.5, seed=9)
        b = sample_ball(256, 2, 1.5, seed=9)
        assert np.array_equal(a, b)
        assert np.all(np.linalg.norm(a, axis=1) <= 1.5 + 1e-12)

    def test_coverage(self):
        pts = sample_ball(4096, 2, 1.0, seed=1)
        # points should reach most of the radius range
        r = np.linalg.norm(pts, axis=1)
        assert r.max() > 0.97
        assert r.min() < 0.1


class TestRhs:
    def test_trivial_zero(self):
        plant = Plant(
            n=2, m=2, q=1,
            f1=lambda x: np.zeros(2),
            phi=lambda th, x: np.zeros(2),
            g1=lambda x: np.eye(2),
            dphi_dtheta=lambda th, x: np.zeros((2, 1)),
            theta_set=ThetaSet.ball(1.0, 1),
        )
        out = plant_rhs(plant, np.zeros(2), np.zeros(1), np.zeros(2))
        assert np.array_equal(out, np.zeros(2))

    def test_linearity_in_u(self, trig, rng):
        p = trig.plant
        for _ in range(20):
            x = rng.normal(size=2)
            th = rng.normal(size=2) * 0.3
            u1 = rng.normal(size=2)
            u2 = rng.normal(size=2)
            lhs = plant_rhs(p, x, th, u1 + u2) - plant_rhs(p, x, th, u1)
            assert lhs == pytest.approx(np.asarray(p.g1(x)) @ u2, abs=1e-12)

    def test_disturbance_enters_through_g1(self, trig, rng):
        p = trig.plant
        x = rng.normal(size=2)
        th = np.array([0.1, -0.2])
        u = rng.normal(size=2)
        d = rng.normal(size=2)
        assert plant_rhs(p, x, th, u, d) == pytest.approx(
            plant_rhs(p, x, th, u + d), abs=1e-14)

    def test_error_rhs_consistency_identity(self, trig, rng):
        p, ref = trig.plant, trig.reference
        for _ in range(100):
            e = rng.normal(size=2)
            t = float(rng.uniform(0, ref.t_max))
            th = rng.normal(size=2) * 0.3
            u = rng.normal(size=2)
            direct = error_rhs(p, ref, e, t, th, u)
            manual = plant_rhs(p, e + ref.x_r(t), th, u) - ref.dx_r(t)
            assert np.max(np.abs(direct - manual)) <= 1e-12

    def test_exact_tracking_equilibrium(self, trig):
        p, ref = trig.plant, trig.reference
        t, e = 0.3, np.zeros(2)
        theta = np.array([0.2, -0.1])
        u = trig.ideal_psi(ref.x_r(t), ref.dx_r(t), theta, e)
        assert error_rhs(p, ref, e, t, theta, u) == pytest.approx(np.zeros(2), abs=1e-12)

    def test_horizon_checked(self, trig):
        with pytest.raises(PlantSpecError):
            error_rhs(trig.plant, trig.reference, np.zeros(2),
                      trig.reference.t_max + 1.0, np.zeros(2), np.zeros(2))

    def test_dimension_mismatch(self, trig):
        with pytest.raises(PlantSpecError):
            plant_rhs(trig.plant, np.zeros(3), np.zeros(2), np.zeros(2))


class TestValidation:
    def test_plant_validate_passes(self, trig, rng):
        trig.plant.validate(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)) * 0.3)

    def test_plant_validate_catches_wrong_jacobian(self, trig, rng):
        bad = Plant(
            n=2, m=2, q=2,
            f1=trig.plant.f1, phi=trig.plant.phi, g1=trig.plant.g1,
            dphi_dtheta=lambda th, x: np.ones((2, 2)),
            theta_set=trig.plant.theta_set,
        )
        with pytest.raises(PlantSpecError):
            bad.validate(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)) * 0.3)

    def test_reference_validate(self, trig):
        trig.reference.validate()
        bad = Reference(x_r=trig.reference.x_r, dx_r=lambda t: np.zeros(2),
                        r1=trig.reference.r1, t_max=10.0)
        with pytest.raises(PlantSpecError):
            bad.validate()


class TestTildePhiS:
    def test_zero_ddag(self, trig, rng):
        for _ in range(10):
            th = rng.normal(size=2) * 0.3
            x = rng.normal(size=2)
            out = tilde_phi_s(trig.plant, SAT, th, np.zeros(2), x)
            assert out == pytest.approx(np.zeros(2), abs=1e-15)

    def test_linear_parameterization_identity_region(self, trig, rng):
        # phi = Phi(x) theta, both arguments inside the saturation box
        p = trig.plant
        for _ in range(20):
            th = rng.uniform(-0.4, 0.4, 2)
            dd = rng.uniform(-0.4, 0.4, 2)
            if np.max(np.abs(th + dd)) > SAT.l_s or np.max(np.abs(th)) > SAT.l_s:
                continue
            x = rng.normal(size=2)
            expected = np.asarray(p.dphi_dtheta(th, x)) @ dd
            assert tilde_phi_s(p, SAT, th, dd, x) == pytest.approx(expected, abs=1e-12)


class TestEstimateKappa:
    def test_phi_zero_gives_zero_kappa1(self, trig):
        plant = Plant(
            n=2, m=2, q=2,
            f1=lambda x: -x,
            phi=lambda th, x: np.zeros(2),
            g1=lambda x: np.eye(2),
            dphi_dtheta=lambda th, x: np.zeros((2, 2)),
            theta_set=ThetaSet.ball(0.6, 2),
        )
        k1 = estimate_kappa(plant, trig.reference, SAT, 1, [0.5, 1.0, 2.0],
                            n_samples=128)
        assert k1(0.0) == 0.0 and k1(1.5) == pytest.approx(0.0, abs=1e-9)

    def test_bounded_regressor_gives_inflated_constant(self, trig):
        # ||Phi|| <= 1 on every ball; the sup should approach 1 and carry the
        # 1.05 inflation
        k1 = estimate_kappa(trig.plant, trig.reference, SAT, 1,
                            [0.5, 1.0, 2.0, 4.0], n_samples=512)
        assert k1.class_tag == "SN"
        v = k1(4.0)
        assert 0.9 * 1.05 <= v <= 1.0 * 1.05 + 1e-9

    def test_kappa2_zero_at_origin_and_monotone(self, trig):
        k2 = estimate_kappa(trig.plant, trig.reference, SAT, 2,
                            [0.0, 0.25, 0.5, 1.0, 2.0],
                            varsigma=trig.shaping.varsigma, n_samples=256)
        assert k2(0.0) == 0.0
        grid = np.linspace(0.0, 3.0, 50)
        vals = k2.sample(grid)
        assert np.all(np.diff(vals) >= 0.0)

    def test_kappa1_is_an_upper_bound_empirically(self, trig, rng):
        """The inflated kappa1 dominates |tilde_phi_s| / gamma_s(|ddag|)."""
        from ii_adaptive.gains import GammaSParams, gamma_s

        p = trig.plant
        ref = trig.reference
        k1 = estimate_kappa(p, ref, SAT, 1, [0.25, 0.5, 1.0, 2.0, 4.0],
                            n_samples=1024)
        g = GammaSParams.from_sat(SAT, q=2)
        violations = 0
        for _ in range(2000):
            theta = p.theta_set.sample(1, seed=int(rng.integers(1 << 30)))[0]
            ddag = rng.normal(size=2) * rng.uniform(0.1, 4.0)
            e = rng.normal(size=2)
            e *= rng.uniform(0, 4.0) / max(np.linalg.norm(e), 1e-12)
            t = float(rng.uniform(0, 2 * math.pi))
            x = e + ref.x_r(t)
            lhs = float(np.linalg.norm(tilde_phi_s(p, SAT, theta, ddag, x)))
            rhs = k1(float(np.linalg.norm(e))) * gamma_s(float(np.linalg.norm(ddag)), g)
            if lhs > rhs + 1e-9:
                violations += 1
        assert violations == 0

    def test_empty_grid_rejected(self, trig):
        with pytest.raises(Exception):
            estimate_kappa(trig.plant, trig.reference, SAT, 1, [])

    def test_kappa3_and_star(self, trig):
        k3 = estimate_kappa(trig.plant, trig.reference, SAT, 3, [0.5, 1.0],
                            n_samples=128)
        # g1 is constant identity: kappa3 == 0, kappa3* == 1 handled internally
        assert k3(1.0) == pytest.approx(0.0, abs=1e-9)

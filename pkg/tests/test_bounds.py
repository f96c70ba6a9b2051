import numpy as np
import pytest

from scfo.bounds import (
    GrowthBounds,
    constraint_floor,
    filter_gain_floor,
    linear_growth,
    max_feasible_iterations,
    quadratic_growth,
    validate_lipschitz,
    worst_case_growth,
)
from scfo.engine import ProjectionParams
from scfo.model import Box, LipschitzData, ProjectionCeilings

from conftest import box_samples


class TestGrowthTerms:
    def test_linear_growth_hand_value(self):
        v = linear_growth(np.array([10.0, 2.0]), np.array([-0.45, 0.05]), np.array([-0.35, 0.15]))
        assert v == pytest.approx(1.2, abs=1e-15)

    def test_linear_growth_zero_displacement(self):
        u = np.array([0.3, -0.2])
        assert linear_growth(np.array([5.0, 7.0]), u, u) == 0.0

    def test_linear_growth_full_box(self):
        # kappa row (3, 2) stretched over displacement (-1, 0.8)
        v = linear_growth(np.array([3.0, 2.0]), np.array([0.5, 0.0]), np.array([-0.5, 0.8]))
        assert v == pytest.approx(4.6, abs=1e-15)

    def test_quadratic_growth_hand_value(self):
        M = np.array([[3.0, 1.0], [1.0, 3.0]])
        v = quadratic_growth(M, np.zeros(2), np.array([0.1, 0.1]))
        assert v == pytest.approx(0.04, abs=1e-15)

    def test_quadratic_growth_zero_displacement(self):
        M = np.array([[2.0, 1.0], [1.0, 2.0]])
        u = np.array([1.0, 2.0])
        assert quadratic_growth(M, u, u) == 0.0

    def test_quadratic_growth_unit_displacement(self):
        M = np.array([[1500.0, 500.0], [500.0, 300.0]])
        v = quadratic_growth(M, np.zeros(2), np.ones(2))
        assert v == pytest.approx(1400.0, abs=1e-12)


class TestWorstCaseGrowth:
    def test_constrained_quadratic_values(self, spec44):
        gb = worst_case_growth(spec44.lipschitz, spec44.box)
        np.testing.assert_allclose(gb.L_p, [11.6, 4.6], atol=1e-12)
        assert gb.Q_phi == pytest.approx(6.52, abs=1e-12)

    def test_rosenbrock_value(self, spec46):
        gb = worst_case_growth(spec46.lipschitz, spec46.box)
        assert gb.Q_phi == pytest.approx(2800.0, abs=1e-12)

    def test_unit_identity_case(self):
        lip = LipschitzData(
            kappa_p=np.array([[1.0]]), kappa=np.zeros((0, 1)),
            M_phi=np.array([[1.0]]), M_g=(), M_gp=(np.array([[1.0]]),),
            gamma=np.array([0.5]), gamma_phi=0.5,
        )
        gb = worst_case_growth(lip, Box(np.zeros(1), np.ones(1)))
        assert gb.L_p[0] == pytest.approx(1.0)
        assert gb.Q_phi == pytest.approx(1.0)

    def test_dominates_pointwise_growth(self, spec44):
        gb = worst_case_growth(spec44.lipschitz, spec44.box)
        pts = box_samples(spec44.box, 400, seed=3)
        for u, v in zip(pts[:200], pts[200:]):
            for j in range(2):
                assert linear_growth(spec44.lipschitz.kappa_p[j], u, v) <= gb.L_p[j] + 1e-12
            assert 2.0 * quadratic_growth(spec44.lipschitz.M_phi, u, v) <= gb.Q_phi + 1e-12


def _params(eps_p=(), eps=(), delta_gp=(), delta_g=(), delta_phi=1.0, level=0):
    return ProjectionParams(ProjectionCeilings(
        eps_p=np.asarray(eps_p, dtype=float),
        eps=np.asarray(eps, dtype=float),
        delta_gp=np.asarray(delta_gp, dtype=float),
        delta_g=np.asarray(delta_g, dtype=float),
        delta_phi=delta_phi,
    ), level)


def _lip_one_gp(gamma=0.95, gamma_phi=0.95):
    return LipschitzData(
        kappa_p=np.array([[1.0, 1.0]]), kappa=np.zeros((0, 2)),
        M_phi=np.array([[1.0, 0.5], [0.5, 1.0]]), M_g=(),
        M_gp=(np.array([[1.0, 0.5], [0.5, 1.0]]),),
        gamma=np.array([gamma]), gamma_phi=gamma_phi,
    )


class TestFilterGainFloor:
    def test_cost_block_only(self, spec46):
        gb = worst_case_growth(spec46.lipschitz, spec46.box)
        k = filter_gain_floor(_params(delta_phi=1.0), gb, spec46.lipschitz, np.zeros(0))
        assert k == pytest.approx(2.0 / 2800.0, rel=1e-12)

    def test_experimental_block_hand_value(self):
        # one measured constraint: gamma 0.95, eps_p = delta_gp = 4, Q_gp = 10,
        # L_p = 11.6, -g_p(u0) = 0.19, cost block 2/6.52
        gb = GrowthBounds(L_p=np.array([11.6]), L=np.zeros(0), Q_phi=6.52,
                          Q_g=np.zeros(0), Q_gp=np.array([10.0]))
        lip = _lip_one_gp(gamma=0.95)
        k = filter_gain_floor(_params(eps_p=[4.0], delta_gp=[4.0], delta_phi=1.0),
                              gb, lip, np.array([-0.19]))
        assert k == pytest.approx(0.16 / 11.6, rel=1e-12)  # inner min picks 2(1-g)d^2/Q

    def test_linear_in_delta_phi(self, spec46):
        gb = worst_case_growth(spec46.lipschitz, spec46.box)
        k1 = filter_gain_floor(_params(delta_phi=1.0), gb, spec46.lipschitz, np.zeros(0))
        k2 = filter_gain_floor(_params(delta_phi=0.5), gb, spec46.lipschitz, np.zeros(0))
        assert k2 == pytest.approx(0.5 * k1, rel=1e-12)

    def test_rejects_infeasible_start(self):
        gb = GrowthBounds(L_p=np.array([1.0]), L=np.zeros(0), Q_phi=1.0,
                          Q_g=np.zeros(0), Q_gp=np.array([1.0]))
        with pytest.raises(ValueError):
            filter_gain_floor(_params(eps_p=[1.0], delta_gp=[1.0]), gb, _lip_one_gp(), np.array([0.0]))

    def test_monotone_in_parameters(self, spec44):
        gb = worst_case_growth(spec44.lipschitz, spec44.box)
        gp0 = np.array([-0.19, -0.52])

        def floor(scale_eps_p=1.0, scale_eps=1.0, scale_dgp=1.0, scale_dg=1.0, dphi=1.0):
            p = _params(eps_p=np.array([4.0, 2.0]) * scale_eps_p,
                        eps=np.array([1.0]) * scale_eps,
                        delta_gp=np.array([4.0, 2.0]) * scale_dgp,
                        delta_g=np.array([1.0]) * scale_dg,
                        delta_phi=dphi)
            return filter_gain_floor(p, gb, spec44.lipschitz, gp0)

        base = floor()
        for kw in ("scale_eps_p", "scale_eps", "scale_dgp", "scale_dg", "dphi"):
            assert floor(**{kw: 0.5}) <= base + 1e-15
            assert floor(**{kw: 2.0}) >= base - 1e-15
        assert filter_gain_floor(_params(eps_p=[4, 2], eps=[1], delta_gp=[4, 2], delta_g=[1]),
                                 gb, spec44.lipschitz, np.array([-0.1, -0.52])) <= base + 1e-15


class TestConstraintFloor:
    def test_hand_value(self):
        gb = GrowthBounds(L_p=np.array([11.6]), L=np.zeros(0), Q_phi=6.52,
                          Q_g=np.zeros(0), Q_gp=np.array([10.0]))
        f = constraint_floor(_lip_one_gp(0.95), _params(eps_p=[4.0], delta_gp=[4.0]),
                             gb, np.array([-0.19]), 0)
        assert f == pytest.approx(0.16, rel=1e-12)

    def test_initial_value_dominates(self):
        gb = GrowthBounds(L_p=np.array([1.0]), L=np.zeros(0), Q_phi=1.0,
                          Q_g=np.zeros(0), Q_gp=np.array([1.0]))
        f = constraint_floor(_lip_one_gp(0.5), _params(eps_p=[10.0], delta_gp=[10.0]),
                             gb, np.array([-0.01]), 0)
        assert f == pytest.approx(0.01)

    def test_vanishes_as_gamma_tends_to_one(self):
        gb = GrowthBounds(L_p=np.array([1.0]), L=np.zeros(0), Q_phi=1.0,
                          Q_g=np.zeros(0), Q_gp=np.array([1.0]))
        f = constraint_floor(_lip_one_gp(1.0 - 1e-9), _params(eps_p=[1.0], delta_gp=[1.0]),
                             gb, np.array([-0.5]), 0)
        assert 0.0 < f < 1e-8

    def test_never_exceeds_initial_clearance(self, spec44):
        gb = worst_case_growth(spec44.lipschitz, spec44.box)
        gp0 = np.array([-0.19, -0.52])
        for level in range(8):
            p = ProjectionParams(spec44.default_ceilings, level)
            for j in range(2):
                assert constraint_floor(spec44.lipschitz, p, gb, gp0, j) <= -gp0[j] + 1e-15


class TestMaxFeasibleIterations:
    def test_rosenbrock_hand_value(self, spec46):
        gb = worst_case_growth(spec46.lipschitz, spec46.box)
        bound = max_feasible_iterations(2.0 / 2800.0, spec46.lipschitz, gb,
                                        delta_phi=1.0, phi_u0=1.0, phi_lower=0.0)
        assert bound == pytest.approx(28000.0, rel=1e-10)

    def test_zero_gap_gives_zero(self, spec46):
        gb = worst_case_growth(spec46.lipschitz, spec46.box)
        assert max_feasible_iterations(2.0 / 2800.0, spec46.lipschitz, gb, 1.0, 5.0, 5.0) == 0.0

    def test_linear_cost_special_case(self):
        lip = LipschitzData(
            kappa_p=np.zeros((0, 1)), kappa=np.zeros((0, 1)),
            M_phi=np.array([[2.0]]), M_g=(), M_gp=(),
            gamma=np.zeros(0), gamma_phi=0.0,
        )
        gb = worst_case_growth(lip, Box(np.zeros(1), np.ones(1)))
        K, dphi = 0.25, 0.5
        bound = max_feasible_iterations(K, lip, gb, dphi, 1.0, 0.0)
        denom = max(-K * dphi, -2.0 * dphi**2 / gb.Q_phi)
        assert bound == pytest.approx(-1.0 / denom, rel=1e-12)

    def test_rejects_nonnegative_denominator(self, spec46):
        gb = worst_case_growth(spec46.lipschitz, spec46.box)
        with pytest.raises(ValueError):
            # gain far above the certified floor makes the first branch positive
            max_feasible_iterations(1.0, spec46.lipschitz, gb, 1e-6, 1.0, 0.0)


class TestBoundSoundness:
    """Growth bounds must dominate the true functions everywhere in the box."""

    @pytest.mark.parametrize("name", ["constrained_quadratic", "rosenbrock"])
    def test_linear_and_quadratic_bounds_hold(self, name, spec44, spec46):
        spec = spec44 if name == "constrained_quadratic" else spec46
        plant = spec.oracle
        pts = box_samples(spec.box, 2000, seed=11)
        for u, v in zip(pts[:1000], pts[1000:]):
            mu = plant.measure(u)
            mv = plant.measure(v)
            for j in range(spec.n_gp):
                gap = mu.g_p[j] + linear_growth(spec.lipschitz.kappa_p[j], u, v) - mv.g_p[j]
                assert gap > 0.0
            lin = float(mu.grad_phi @ (v - u))
            gap = lin + quadratic_growth(spec.lipschitz.M_phi, u, v) - (mv.phi - mu.phi)
            assert gap > 0.0


class TestValidateLipschitz:
    def test_paper_constants_pass(self, spec44):
        rep = validate_lipschitz(spec44, samples=4000, seed=1)
        assert rep.ok
        kp11 = next(e for e in rep.entries if e.family == "kappa_p" and e.index == (0, 0))
        assert kp11.worst_observed <= 9.5 + 1e-9  # sup |d g_p1 / d u1| on the box

    def test_rosenbrock_constants_pass(self, spec46):
        rep = validate_lipschitz(spec46, samples=4000, seed=1)
        assert rep.ok
        m11 = next(e for e in rep.entries if e.family == "M_phi" and e.index == (0, 0))
        assert m11.worst_observed <= 1202.0 + 1e-9

    @pytest.mark.parametrize("name", ["constrained_quadratic", "rosenbrock"])
    def test_halved_constants_fail(self, name, spec44, spec46):
        spec = spec44 if name == "constrained_quadratic" else spec46
        weak = _scale_lipschitz(spec, 0.5)
        rep = validate_lipschitz(weak, samples=4000, seed=1)
        assert not rep.ok
        assert rep.violations()


def _scale_lipschitz(spec, factor):
    import dataclasses

    lip = spec.lipschitz
    scaled = LipschitzData(
        kappa_p=lip.kappa_p * factor,
        kappa=lip.kappa * factor,
        M_phi=lip.M_phi * factor,
        M_g=tuple(m * factor for m in lip.M_g),
        M_gp=tuple(m * factor for m in lip.M_gp),
        gamma=lip.gamma.copy(),
        gamma_phi=lip.gamma_phi,
    )
    return dataclasses.replace(spec, lipschitz=scaled)

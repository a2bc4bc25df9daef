import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from rewet.discretization import BANDWIDTH, THETA, Grid, Model
from rewet.errors import InvalidParameterError, NonlinearFailure, NumericalFailure, StiffFailure
from rewet.experiments import base_scenario, run_scenario
from rewet.integrator import (
    BandedJacobian,
    IntegratorConfig,
    column_groups,
    fd_jacobian,
    integrate,
)
from rewet.parameters import preset


def banded_matrix(rng, n, bw):
    M = rng.normal(size=(n, n))
    i, j = np.indices((n, n))
    M[np.abs(i - j) > bw] = 0.0
    return M


class TestConfig:
    def test_defaults(self):
        cfg = IntegratorConfig()
        assert cfg.rtol == cfg.atol == 1e-8
        assert cfg.t_end == 28.0
        np.testing.assert_allclose(cfg.output_times, np.linspace(0, 28, 10))

    @pytest.mark.parametrize("kw", [
        dict(rtol=0.0), dict(atol=-1.0), dict(t_end=0.0), dict(output_times=[2.0, 1.0]),
        dict(output_times=[0.0, 30.0]), dict(max_newton_iters=0), dict(error_norm="l1"),
    ])
    def test_invalid(self, kw):
        with pytest.raises(InvalidParameterError):
            IntegratorConfig(**kw)


class TestBandedAlgebra:
    @pytest.mark.parametrize("n,bw", [(10, 1), (25, 9), (40, 3)])
    def test_solve_matches_dense(self, n, bw):
        rng = np.random.default_rng(n)
        M = banded_matrix(rng, n, bw)
        J = BandedJacobian(n, bw, bw)
        for j in range(n):
            for i in range(max(0, j - bw), min(n, j + bw + 1)):
                J.data[2 * bw + i - j, j] = M[i, j]
        np.testing.assert_array_equal(J.to_dense(), M)
        c = 0.3
        b = rng.normal(size=n)
        x = J.solve(J.factor(c), b)
        np.testing.assert_allclose((np.eye(n) - c * M) @ x, b, atol=1e-10)

    @pytest.mark.parametrize("n", [50, 500, 4000])
    def test_group_count_independent_of_size(self, n):
        groups = column_groups(n, BANDWIDTH, block=5)
        assert len(groups) == 15
        assert sorted(np.concatenate(groups)) == list(range(n))
        assert len(column_groups(n, 4)) == 9

    def test_block_groups_three_cells_apart(self):
        for cols in column_groups(200, BANDWIDTH, block=5):
            cells = cols // 5
            assert np.all(np.diff(cells) >= 3)

    def test_band_groups_do_not_overlap_in_rows(self):
        for cols in column_groups(200, 4):
            assert np.all(np.diff(cols) > 2 * 4)


class TestFdJacobian:
    def test_linear_recovers_matrix(self):
        rng = np.random.default_rng(7)
        M = banded_matrix(rng, 30, 4)
        y = rng.normal(size=30)
        jac, nev = fd_jacobian(lambda t, y: M @ y, 0.0, y, M @ y, bandwidth=4)
        np.testing.assert_allclose(jac.to_dense(), M, rtol=1e-6, atol=1e-6 * np.abs(M).max())
        assert nev == 9

    def test_zero_rhs(self):
        jac, _ = fd_jacobian(lambda t, y: np.zeros_like(y), 0.0, np.ones(20), bandwidth=3)
        assert np.all(jac.to_dense() == 0.0)

    def test_model_jacobian_uses_15_evaluations(self):
        p = preset("base")
        m = Model(p, Grid(100, p.L))
        y = m.y0()
        _, nev = fd_jacobian(m, 0.0, y, m(0.0, y), bandwidth=BANDWIDTH, block=5)
        assert nev <= 15

    def test_model_jacobian_matches_dense_difference(self):
        p = preset("base").replace(k_diss=0.4)
        g = Grid(8, p.L)
        m = Model(p, g)
        rng = np.random.default_rng(5)
        y = m.y0()
        y[THETA::5] = rng.uniform(0.045, 0.065, 8)
        y[4::5] = rng.uniform(0, 0.002, 8)
        f0 = m(0.0, y)
        jac, _ = fd_jacobian(m, 0.0, y, f0, bandwidth=BANDWIDTH, block=5)
        # dense central differences, one column at a time
        dense = np.empty((40, 40))
        for j in range(40):
            h = 1e-5 * max(abs(y[j]), 1e-3)
            yp, ym = y.copy(), y.copy()
            yp[j] += h
            ym[j] -= h
            dense[:, j] = (m(0.0, yp) - m(0.0, ym)) / (2 * h)
        np.testing.assert_allclose(jac.to_dense(), dense, rtol=0, atol=1e-5 * np.abs(dense).max())


class TestIntegrate:
    def test_zero_rhs(self):
        y0 = np.array([1.0, -2.0, 3.0])
        sol = integrate(lambda t, y: np.zeros_like(y), y0, IntegratorConfig(t_end=5.0))
        assert np.all(sol.y == y0)

    def test_stiff_scalar_decay(self):
        lam = 1e6
        cfg = IntegratorConfig(t_end=1.0, output_times=[0.0, 1e-6, 1.0])
        sol = integrate(lambda t, y: -lam * y, np.array([1.0]), cfg)
        assert abs(sol.y[-1, 0] - np.exp(-lam)) < cfg.atol
        assert sol.y[1, 0] == pytest.approx(np.exp(-1.0), rel=1e-5)
        assert sol.trace.accepted < 2000

    def test_nonstiff_accuracy(self):
        cfg = IntegratorConfig(t_end=2.0, output_times=np.linspace(0, 2, 5))
        sol = integrate(lambda t, y: np.array([y[1], -y[0]]), np.array([1.0, 0.0]), cfg)
        np.testing.assert_allclose(sol.y[:, 0], np.cos(cfg.output_times), atol=1e-6)

    def test_robertson_against_reference(self):
        def rob(t, y):
            a, b, c = y
            return np.array([-0.04 * a + 1e4 * b * c, 0.04 * a - 1e4 * b * c - 3e7 * b * b, 3e7 * b * b])

        cfg = IntegratorConfig(rtol=1e-8, atol=1e-12, t_end=40.0, output_times=[40.0])
        sol = integrate(rob, np.array([1.0, 0.0, 0.0]), cfg)
        ref = solve_ivp(rob, (0, 40), [1.0, 0.0, 0.0], method="Radau", rtol=1e-12, atol=1e-16)
        np.testing.assert_allclose(sol.y[-1], ref.y[:, -1], rtol=1e-5, atol=1e-11)
        assert sol.y[-1].sum() == pytest.approx(1.0, abs=1e-10)

    def test_samples_and_hook(self):
        calls = []
        cfg = IntegratorConfig(t_end=1.0, output_times=[1.0])
        sol = integrate(lambda t, y: -y, np.array([1.0]), cfg, sample_times=np.linspace(0, 1, 11),
                        sampler=lambda t, y: float(y[0]),
                        step_hook=lambda a, b, f: calls.append((a, b, float(f(0.5 * (a + b))[0]))))
        np.testing.assert_allclose(sol.samples, np.exp(-np.linspace(0, 1, 11)), rtol=1e-6)
        assert len(calls) == sol.trace.accepted
        assert calls[0][0] == 0.0 and calls[-1][1] == 1.0
        for a, b, mid in calls:
            assert mid == pytest.approx(np.exp(-0.5 * (a + b)), rel=1e-6)

    def test_guard_forces_underflow(self):
        cfg = IntegratorConfig(t_end=2.0)
        with pytest.raises(StiffFailure) as info:
            integrate(lambda t, y: -np.ones_like(y), np.array([1.0]), cfg, guard=lambda y: y[0] > 0.5)
        assert info.value.t == pytest.approx(0.5, abs=1e-3)

    def test_guard_rejects_initial_state(self):
        with pytest.raises(InvalidParameterError):
            integrate(lambda t, y: y, np.array([1.0]), IntegratorConfig(), guard=lambda y: False)

    def test_newton_failure(self):
        def rhs(t, y):
            if t > 0.5:
                raise NumericalFailure("blow-up")
            return -y

        with pytest.raises(NonlinearFailure) as info:
            integrate(rhs, np.array([1.0]), IntegratorConfig(t_end=1.0))
        assert info.value.t <= 0.5

    def test_step_budget(self):
        with pytest.raises(StiffFailure):
            integrate(lambda t, y: np.cos(50 * t) * np.ones_like(y), np.array([0.0]),
                      IntegratorConfig(t_end=10.0, max_steps=20))

    def test_max_step(self):
        sol = integrate(lambda t, y: np.zeros_like(y), np.array([1.0]),
                        IntegratorConfig(t_end=1.0, max_step=0.1))
        assert sol.trace.accepted >= 10

    @settings(max_examples=15, deadline=None)
    @given(lam=st.floats(0.1, 1e5), y0=st.floats(-10, 10))
    def test_linear_decay_property(self, lam, y0):
        cfg = IntegratorConfig(t_end=1.0, output_times=[0.25, 1.0], rtol=1e-8, atol=1e-10)
        sol = integrate(lambda t, y: -lam * y, np.array([y0]), cfg)
        exact = y0 * np.exp(-lam * cfg.output_times)
        np.testing.assert_allclose(sol.y[:, 0], exact, rtol=1e-5, atol=1e-8)


class TestModelIntegration:
    def test_base_case_completes(self, base_run):
        assert base_run.trace.accepted > 0
        assert base_run.t[-1] == 28.0
        assert base_run.runtime < 60.0

    def test_never_sees_nonpositive_water(self):
        p = preset("base")
        m = Model(p, Grid(100, p.L))
        seen = []

        def rhs(t, y):
            seen.append(float(y[THETA::5].min()))
            return m(t, y)

        integrate(rhs, m.y0(), IntegratorConfig(), bandwidth=BANDWIDTH, block=5,
                  guard=lambda y: bool(y[THETA::5].min() > 0.5 * p.theta_min))
        assert min(seen) > 0.0

    def test_deterministic(self, base_run):
        again = run_scenario(base_scenario("base"))
        assert np.array_equal(again.final_state, base_run.final_state)
        assert np.array_equal(again.front.s, base_run.front.s)

    def test_output_refinement_invariance(self, base_run):
        denser = run_scenario(base_scenario("base", cfg=IntegratorConfig(output_times=np.linspace(0, 28, 37))))
        np.testing.assert_allclose(denser.theta[::4], base_run.theta, rtol=10 * 1e-8, atol=1e-15)
        np.testing.assert_allclose(denser.C[:, ::4], base_run.C, rtol=10 * 1e-8, atol=1e-15)

    def test_tolerance_convergence(self, base_run):
        rtol = IntegratorConfig().rtol
        halved = run_scenario(base_scenario("base", cfg=IntegratorConfig(rtol=rtol / 2, atol=rtol / 2)))
        change = np.linalg.norm(halved.final_state - base_run.final_state) / np.linalg.norm(halved.final_state)
        assert change < 10 * rtol

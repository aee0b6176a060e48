"""Tests for the IMEX steppers, the linear mode oracle, and the energy
identity residual."""

import numpy as np
import pytest

from mpfc_lab import (
    ConfigurationError,
    Field,
    Grid,
    LinearModeOracle,
    ModelParams,
    State,
    StepKind,
    StepScheme,
    energy,
    energy_identity_residual,
    mean_mode_exact,
    oracle_solve,
    step,
    step_mpfc,
    step_pfc,
    trajectory,
)
from mpfc_lab.integrators import _implicit_symbol
from mpfc_lab.spectral import hm_norm, mean, zero_mean
from helpers import cos_field, linear_error, loglog_slope, rk4_mode

TWO_PI = 2.0 * np.pi
LAM1 = TWO_PI**2


def _params(beta, eps=0.5, k=1.0, cubic=True):
    return ModelParams(
        beta=beta, epsilon=eps, k_split=k, beta0=max(1.0, beta), cubic=cubic
    )


class TestScheme:
    def test_dt_positive(self):
        with pytest.raises(ValueError, match="dt"):
            StepScheme(StepKind.PFC_IMEX1, 0.0)

    def test_routing(self):
        g = Grid(1, 32)
        p = _params(0.0)
        s0 = State.overdamped(cos_field(g, 0.1, mean_val=0.2))
        out = step(s0, StepScheme(StepKind.PFC_IMEX1, 1e-3), p)
        assert out.beta == 0.0
        assert out.time == pytest.approx(1e-3)

    def test_preconditions(self):
        g = Grid(1, 32)
        sch = StepScheme(StepKind.PFC_IMEX1, 1e-3)
        pfc_state = State.overdamped(cos_field(g, 0.1))
        mpfc_state = State(
            phi=cos_field(g, 0.1), phi_t=Field.zeros(g), beta=0.5
        )
        with pytest.raises(ValueError, match="beta"):
            step_mpfc(pfc_state, sch, _params(0.0))
        with pytest.raises(ValueError, match="beta"):
            step_pfc(mpfc_state, sch, _params(0.5))


class TestImplicitSymbol:
    def test_nonnegative_on_unit_box(self):
        # every nonzero mode has lam >= 4*pi^2, so even k = 0 is safe
        g = Grid(1, 128)
        sym = _implicit_symbol(g, 0.0)
        assert np.min(sym) >= 0.0

    def test_configuration_error_names_mode(self):
        class ToyGrid:
            dim = 1
            n_points = 4
            shape = (4,)
            freqs = (np.array([0.0, 1.0, -2.0, -1.0]),)
            k2 = np.array([0.0, 1.0, 4.0, 1.0])

            @staticmethod
            def step_table(key, builder):
                return builder()

        with pytest.raises(ConfigurationError, match=r"kappa=\(1,\)"):
            _implicit_symbol(ToyGrid(), 0.5)


class TestStepPfc:
    def test_constant_fixed_point(self):
        g = Grid(1, 32)
        p = _params(0.0)
        s = State.overdamped(Field.constant(g, 0.4))
        for dt in (1e-3, 0.1, 1.0):
            out = step_pfc(s, StepScheme(StepKind.PFC_IMEX1, dt), p)
            assert np.max(np.abs(out.phi.values - 0.4)) <= 1e-13

    def test_mean_exact(self):
        g = Grid(1, 64)
        p = _params(0.0)
        rng = np.random.default_rng(3)
        s = State.overdamped(Field(g, values=rng.standard_normal(g.shape) * 0.2))
        m0 = mean(s.phi)
        sch = StepScheme(StepKind.PFC_IMEX1, 1e-2)
        for _ in range(200):
            s = step_pfc(s, sch, p)
        assert mean(s.phi) == m0  # bit-exact: kappa=0 row untouched

    def test_linear_convergence_first_order(self):
        # resolved horizon: the slowest mode decays by an O(1) factor
        g = Grid(1, 32)
        p = _params(0.0, cubic=False)
        a1 = LAM1 * (LAM1**2 - 2.0 * LAM1 + 0.5)
        horizon = 5.0 / a1
        s0 = State.overdamped(cos_field(g, 0.1, mean_val=0.1))
        dts = [horizon * 2.0**-k for k in range(4, 10)]
        errs = [
            linear_error(g, p, s0, step_pfc, StepScheme, StepKind.PFC_IMEX1, dt, horizon)
            for dt in dts
        ]
        slope = loglog_slope(dts, errs)
        assert 0.9 <= slope <= 1.1

    def test_energy_decrease_random_fields(self):
        # empirical contract of the splitting: no per-step energy increase
        g = Grid(1, 64)
        for trial in range(20):
            rng = np.random.default_rng(300 + trial)
            eps = float(rng.uniform(-1.0, 2.0))
            p = ModelParams(beta=0.0, epsilon=eps, beta0=1.0)
            vals = rng.standard_normal(g.shape)
            vals *= float(rng.uniform(0.05, 0.5)) / np.max(np.abs(vals))
            s = State.overdamped(Field(g, values=vals + rng.uniform(-0.5, 0.5)))
            for dt in (1e-3, 1e-2, 1e-1, 1.0):
                st = s
                sch = StepScheme(StepKind.PFC_IMEX1, dt)
                e_prev = energy(st.phi, p)
                for _ in range(10):
                    st = step_pfc(st, sch, p)
                    e_now = energy(st.phi, p)
                    assert e_now - e_prev <= 1e-10
                    e_prev = e_now

    def test_dissipation_sign(self):
        # -dE >= (1-delta)*dt*||zero_mean((phi'-phi)/dt)||_{-1}^2 for small dt
        g = Grid(1, 64)
        p = _params(0.0)
        dt = 1e-7
        s = State.overdamped(cos_field(g, 0.2, mean_val=0.1))
        sch = StepScheme(StepKind.PFC_IMEX1, dt)
        for _ in range(50):
            s2 = step_pfc(s, sch, p)
            drop = energy(s.phi, p) - energy(s2.phi, p)
            v = (s2.phi - s.phi) * (1.0 / dt)
            assert drop >= 0.8 * dt * hm_norm(zero_mean(v), -1) ** 2
            s = s2


class TestStepMpfc:
    def test_mean_decay_law(self):
        g = Grid(1, 64)
        beta = 0.5
        p = _params(beta)
        rng = np.random.default_rng(4)
        s = State(
            phi=Field(g, values=rng.standard_normal(g.shape) * 0.1 + 0.1),
            phi_t=Field(g, values=rng.standard_normal(g.shape) * 0.1 + 0.2),
            beta=beta,
        )
        m1 = mean(s.phi_t)
        charge0 = beta * m1 + mean(s.phi)
        dt = 1e-3
        sch = StepScheme(StepKind.MPFC_IMEX1, dt)
        for n in range(1, 2001):
            s = step_mpfc(s, sch, p)
            assert abs(mean(s.phi_t) - m1 * np.exp(-n * dt / beta)) <= 1e-13
            assert abs(beta * mean(s.phi_t) + mean(s.phi) - charge0) <= 1e-13

    def test_constant_state_relaxes_mean_only(self):
        g = Grid(1, 32)
        beta = 1.0
        p = _params(beta)
        s = State(
            phi=Field.constant(g, 0.3), phi_t=Field.constant(g, 0.2), beta=beta
        )
        sch = StepScheme(StepKind.MPFC_IMEX1, 1e-2)
        for _ in range(100):
            s = step_mpfc(s, sch, p)
        m_phi, m_phit = mean_mode_exact(p, 0.3, 0.2, s.time)
        assert np.max(np.abs(s.phi.values - m_phi)) <= 1e-12
        assert np.max(np.abs(s.phi_t.values - m_phit)) <= 1e-12

    def test_linear_convergence_first_order(self):
        g = Grid(1, 32)
        beta = 4.0
        p = _params(beta, cubic=False)
        a1 = LAM1 * (LAM1**2 - 2.0 * LAM1 + 0.5)
        omega = np.sqrt(4.0 * beta * a1 - 1.0) / (2.0 * beta)
        horizon = 1.2 / omega
        s0 = State(
            phi=cos_field(g, 0.1, mean_val=0.1),
            phi_t=cos_field(g, 0.1, mean_val=0.15),
            beta=beta,
        )
        dts = [horizon * 2.0**-k for k in range(4, 10)]
        errs = [
            linear_error(
                g, p, s0, step_mpfc, StepScheme, StepKind.MPFC_IMEX1, dt, horizon
            )
            for dt in dts
        ]
        slope = loglog_slope(dts, errs)
        assert 0.9 <= slope <= 1.1

    def test_trajectory_storage(self):
        g = Grid(1, 32)
        p = _params(0.5)
        s = State(phi=cos_field(g, 0.1), phi_t=Field.zeros(g), beta=0.5)
        traj = trajectory(s, StepScheme(StepKind.MPFC_IMEX1, 1e-3), p, 10, 3)
        assert [round(st.time / 1e-3) for st in traj] == [0, 3, 6, 9, 10]


class TestOracle:
    def test_validation(self):
        with pytest.raises(ValueError, match="lam"):
            LinearModeOracle(lam=-1.0, beta=0.0, epsilon=0.5)
        orc = LinearModeOracle(lam=0.0, beta=1.0, epsilon=0.5)
        with pytest.raises(ValueError, match="t"):
            oracle_solve(orc, 1.0, 0.0, -0.5)

    def test_lam_zero_matches_mean_ode(self):
        orc = LinearModeOracle(lam=0.0, beta=0.7, epsilon=0.5)
        p = ModelParams(beta=0.7, epsilon=0.5)
        for t in (0.0, 0.3, 2.0):
            c, cdot = oracle_solve(orc, 0.2, -0.4, t)
            m_phi, m_phit = mean_mode_exact(p, 0.2, -0.4, t)
            assert c == pytest.approx(m_phi, abs=1e-14)
            assert cdot == pytest.approx(m_phit, abs=1e-14)

    def test_beta_zero_decay_rate(self):
        # rate factors as lam*(lam-1)^2 at epsilon=0
        orc = LinearModeOracle(lam=LAM1, beta=0.0, epsilon=0.0)
        assert orc.rate == pytest.approx(LAM1 * (LAM1 - 1.0) ** 2, rel=1e-14)
        t = 5e-5
        c, cdot = oracle_solve(orc, 1.0, 0.0, t)
        assert c == pytest.approx(np.exp(-orc.rate * t), rel=1e-10)
        assert cdot == pytest.approx(-orc.rate * c, rel=1e-12)

    @pytest.mark.parametrize(
        "lam,beta,eps,t",
        [
            (1.0, 1.0, 0.5, 1.0),    # complex roots
            (1.0, 0.1, -1.0, 2.0),   # distinct real roots
            (1.0, 0.25, -1.0, 2.0),  # repeated root (4*beta*a = 1)
            (LAM1, 0.5, 0.5, 1e-4),  # stiff complex regime
        ],
    )
    def test_against_scalar_integrator(self, lam, beta, eps, t):
        orc = LinearModeOracle(lam=lam, beta=beta, epsilon=eps)
        c, cdot = oracle_solve(orc, 0.5, 0.1, t)
        c_ref, d_ref = rk4_mode(beta, orc.rate, 0.5, 0.1, t, n=100000)
        assert c == pytest.approx(c_ref, abs=1e-9)
        assert cdot == pytest.approx(d_ref, abs=1e-7)

    def test_beta_to_zero_limit(self):
        t = 1e-5
        c_lim, _ = oracle_solve(
            LinearModeOracle(lam=LAM1, beta=0.0, epsilon=0.5), 1.0, 0.0, t
        )
        betas = [1e-6, 1e-7, 1e-8, 1e-9]
        errs = [
            abs(
                oracle_solve(
                    LinearModeOracle(lam=LAM1, beta=b, epsilon=0.5), 1.0, 0.0, t
                )[0]
                - c_lim
            )
            for b in betas
        ]
        slope = np.polyfit(np.log(betas), np.log(errs), 1)[0]
        assert errs[-1] < 1e-4
        assert slope >= 0.8  # first-order vanishing in beta


class TestEnergyIdentity:
    def test_needs_two_states(self):
        p = _params(0.5)
        g = Grid(1, 16)
        s = State(phi=Field.zeros(g), phi_t=Field.zeros(g), beta=0.5)
        with pytest.raises(ValueError, match="2 states"):
            energy_identity_residual([s], p)

    def test_stationary_state(self):
        g = Grid(1, 32)
        p = _params(0.5)
        states = [
            State(
                phi=Field.constant(g, 0.3),
                phi_t=Field.zeros(g),
                beta=0.5,
                time=0.1 * i,
            )
            for i in range(5)
        ]
        assert energy_identity_residual(states, p) <= 1e-14

    def test_mpfc_residual_halves(self):
        # <phi_1> = 0: the two-term balance decays at first order
        g = Grid(1, 64)
        beta = 400.0
        p = _params(beta)
        res = []
        for dt in (1e-3, 5e-4, 2.5e-4):
            n = int(round(1.0 / dt))
            s = State(
                phi=cos_field(g, 0.08, mean_val=0.1),
                phi_t=cos_field(g, 0.08, mean_val=0.0),
                beta=beta,
            )
            traj = trajectory(s, StepScheme(StepKind.MPFC_IMEX1, dt), p, n)
            res.append(energy_identity_residual(traj, p))
        slope = loglog_slope([1e-3, 5e-4, 2.5e-4], res)
        assert slope >= 0.9

    def test_pfc_residual_first_order(self):
        g = Grid(1, 64)
        p = _params(0.0)
        dts = [1e-3, 5e-4, 2.5e-4, 1.25e-4]
        res = []
        for dt in dts:
            n = int(round(0.1 / dt))
            s = State.overdamped(cos_field(g, 0.1, mean_val=0.1))
            traj = trajectory(s, StepScheme(StepKind.PFC_IMEX1, dt), p, n)
            res.append(energy_identity_residual(traj, p))
        slope = loglog_slope(dts, res)
        assert slope >= 0.9

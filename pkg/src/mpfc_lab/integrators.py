"""First-order IMEX time steppers with exact integration of the mean modes.

Both steppers treat the stiff linear operator lap(lap^2 + 2 lap + k) by
backward Euler and the remainder lap(f(phi) - k phi) explicitly; the
splitting constant k comes from :class:`~mpfc_lab.model.ModelParams` and must
keep the implicit symbol lam^2 - 2*lam + k nonnegative on the grid (k >= 1
always suffices, and on the unit box every nonzero mode has lam >= 4*pi^2 so
even k = 0 works).

The kappa = 0 (mean) modes are advanced by the exact solution of
beta*m'' + m' = 0 instead of the IMEX update, which turns the conservation
laws of the flow into rounding-limited identities rather than O(dt) ones.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import ModelParams, State, f_eval, full_energy, mean, rhs_pfc
from .spectral import Field, Grid, hm_norm, zero_mean


class StepKind(enum.Enum):
    PFC_IMEX1 = "pfc_imex1"
    MPFC_IMEX1 = "mpfc_imex1"


@dataclass(frozen=True)
class StepScheme:
    kind: StepKind
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")


def _implicit_symbol(grid: Grid, k_split: float) -> np.ndarray:
    """lam^2 - 2*lam + k per mode, validated nonnegative."""

    def build():
        lam = grid.k2
        sym = lam**2 - 2.0 * lam + k_split
        if np.min(sym) < 0.0:
            idx = np.unravel_index(int(np.argmin(sym)), grid.shape)
            kappa = tuple(int(grid.freqs[j][idx]) for j in range(grid.dim))
            raise ConfigurationError(
                f"implicit symbol lam^2-2*lam+k is negative at mode kappa={kappa}"
                f" (lam={lam[idx]:.6g}, k={k_split:.6g}); increase k_split"
            )
        return sym

    return grid.step_table(("sym", k_split), build)


def _nonlinear_term(phi: Field, params: ModelParams) -> np.ndarray:
    """Dealiased transform of f(phi) - k*phi."""
    grid = phi.grid
    work = f_eval(phi.values, params) - params.k_split * phi.values
    out = np.fft.fftn(work, norm="forward")
    out *= grid.dealias_mask
    return out


def step_pfc(state: State, scheme: StepScheme, params: ModelParams) -> State:
    """One IMEX step of the overdamped (beta = 0) flow.

    (phi^{n+1} - phi^n)/dt = lap(lap^2 + 2 lap + k) phi^{n+1}
                             + lap(f(phi^n) - k phi^n),

    solved mode-wise by dividing by 1 + dt*lam*(lam^2 - 2*lam + k).  The mean
    of phi is unchanged exactly (the kappa=0 row is untouched).
    """
    if state.beta != 0.0:
        raise ValueError("step_pfc requires a beta=0 state")
    grid = state.grid
    dt = scheme.dt
    lam = grid.k2
    sym = _implicit_symbol(grid, params.k_split)
    denom = grid.step_table(
        ("pfc_denom", dt, params.k_split), lambda: 1.0 + dt * lam * sym
    )
    nl = _nonlinear_term(state.phi, params)
    new_spec = (state.phi.spectrum - dt * lam * nl) / denom
    return State(
        phi=Field(grid, spectrum=new_spec),
        phi_t=Field.zeros(grid),
        beta=0.0,
        time=state.time + dt,
    )


def imex_pair_update(
    grid: Grid,
    beta: float,
    dt: float,
    k_split: float,
    phi_spec: np.ndarray,
    v_spec: np.ndarray,
    nl_hat: np.ndarray,
):
    """Shared spectral core of the (phi, v) IMEX step.

    Solves, mode by mode,

        beta*(v' - v)/dt + v' = -lam*(lam^2-2*lam+k)*phi' + (-lam)*nl_hat,
        phi' = phi + dt*v',

    then overwrites the kappa=0 pair with the exact solution of
    beta*m'' + m' = 0 over dt.  Returns (phi', v') spectra.
    """
    lam = grid.k2
    sym = _implicit_symbol(grid, k_split)
    c_imp = grid.step_table(("cimp", k_split), lambda: lam * sym)
    denom = grid.step_table(
        ("pair_denom", dt, beta, k_split),
        lambda: beta + dt + dt * dt * c_imp,
    )
    # denom >= beta + dt > 0 for dt > 0, beta > 0 since c_imp >= 0
    v_new = (beta * v_spec + dt * (-c_imp * phi_spec - lam * nl_hat)) / denom
    phi_new = phi_spec + dt * v_new

    zero = grid.zero_index
    m_phi = phi_spec[zero].real
    m_v = v_spec[zero].real
    v_new[zero] = m_v * np.exp(-dt / beta)
    phi_new[zero] = m_phi - beta * m_v * np.expm1(-dt / beta)
    return phi_new, v_new


def step_mpfc(state: State, scheme: StepScheme, params: ModelParams) -> State:
    """One IMEX step of the relaxation (beta > 0) flow on (phi, v = phi_t).

    The v update is implicit in v and in the stiff linear operator applied to
    phi^{n+1} (eliminated through phi^{n+1} = phi^n + dt*v^{n+1}), explicit in
    lap(f(phi^n) - k phi^n); the kappa=0 pair is then overwritten with the
    exact solution of beta*m'' + m' = 0 over dt.
    """
    if not state.beta > 0.0:
        raise ValueError("step_mpfc requires a beta>0 state")
    grid = state.grid
    nl = _nonlinear_term(state.phi, params)
    phi_new, v_new = imex_pair_update(
        grid,
        state.beta,
        scheme.dt,
        params.k_split,
        state.phi.spectrum,
        state.phi_t.spectrum,
        nl,
    )
    return State(
        phi=Field(grid, spectrum=phi_new),
        phi_t=Field(grid, spectrum=v_new),
        beta=state.beta,
        time=state.time + scheme.dt,
    )


def step(state: State, scheme: StepScheme, params: ModelParams) -> State:
    """Advance one step, routing beta = 0 states to the overdamped stepper."""
    if state.beta == 0.0:
        return step_pfc(state, scheme, params)
    return step_mpfc(state, scheme, params)


def trajectory(
    state: State,
    scheme: StepScheme,
    params: ModelParams,
    n_steps: int,
    store_every: int = 1,
) -> list:
    """Integrate n_steps and return stored states (initial state included).

    States at step indices divisible by ``store_every`` plus the final state
    are kept.
    """
    out = [state]
    for n in range(1, n_steps + 1):
        state = step(state, scheme, params)
        if n % store_every == 0 or n == n_steps:
            out.append(state)
    return out


@dataclass(frozen=True)
class LinearModeOracle:
    """Closed-form solution of one Fourier mode of the linearised flow.

    With lam = |2*pi*kappa|^2 and a = lam*(lam^2 - 2*lam + 1 - epsilon), the
    mode amplitude obeys beta*c'' + c' + a*c = 0 (or c' = -a*c for beta = 0).
    """

    lam: float
    beta: float
    epsilon: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    @property
    def rate(self) -> float:
        return self.lam * (self.lam**2 - 2.0 * self.lam + 1.0 - self.epsilon)


def oracle_solve(oracle: LinearModeOracle, c0: float, c1: float, t: float):
    """Exact (c, c') at time t for the oracle's mode ODE.

    Handles the three root regimes of beta*r^2 + r + a = 0 (distinct real,
    repeated, complex).  For beta = 0 solves c' = -a*c and ignores c1.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    a = oracle.rate
    beta = oracle.beta
    if beta == 0.0:
        c = c0 * np.exp(-a * t)
        return c, -a * c
    disc = 1.0 - 4.0 * beta * a
    # treat a discriminant within rounding of zero as the repeated root
    tiny = 1e-12 * (1.0 + 4.0 * beta * abs(a))
    if disc > tiny:
        root = np.sqrt(disc)
        r1 = (-1.0 + root) / (2.0 * beta)
        r2 = (-1.0 - root) / (2.0 * beta)
        b_coef = (c1 - r1 * c0) / (r2 - r1)
        a_coef = c0 - b_coef
        c = a_coef * np.exp(r1 * t) + b_coef * np.exp(r2 * t)
        cdot = a_coef * r1 * np.exp(r1 * t) + b_coef * r2 * np.exp(r2 * t)
        return c, cdot
    if disc < -tiny:
        sigma = 1.0 / (2.0 * beta)
        omega = np.sqrt(-disc) / (2.0 * beta)
        q = (c1 + sigma * c0) / omega
        env = np.exp(-sigma * t)
        cos_t, sin_t = np.cos(omega * t), np.sin(omega * t)
        c = env * (c0 * cos_t + q * sin_t)
        cdot = -sigma * c + env * omega * (-c0 * sin_t + q * cos_t)
        return c, cdot
    r = -1.0 / (2.0 * beta)
    b_coef = c1 - r * c0
    env = np.exp(r * t)
    c = (c0 + b_coef * t) * env
    cdot = (b_coef + r * (c0 + b_coef * t)) * env
    return c, cdot


def _phi_t_for_identity(state: State, params: ModelParams) -> Field:
    # for the overdamped flow the stored phi_t is zero; use the instantaneous
    # right-hand side instead
    if state.beta > 0.0:
        return state.phi_t
    return rhs_pfc(state.phi, params)


def energy_identity_residual(trajectory_states, params: ModelParams) -> float:
    """Defect of the energy balance along a stored uniform-dt trajectory.

    Computes | E(t) - E(s) + int ||zero_mean(phi_t)||_{-1}^2
              - int <phi_t> * int f(phi) dx |
    with both time integrals by the trapezoid rule on the stored states
    (<phi_t(tau)> equals <phi_1> e^{-tau/beta} exactly for the steppers
    here, so the last factor uses the stored mean directly).
    """
    states = list(trajectory_states)
    if len(states) < 2:
        raise ValueError("need at least 2 states")
    times = np.array([s.time for s in states])
    spacings = np.diff(times)
    if np.max(np.abs(spacings - spacings[0])) > 1e-9 * max(abs(spacings[0]), 1e-300):
        raise ValueError("trajectory must be sampled at uniform dt")
    dissipation = np.empty(len(states))
    pumping = np.empty(len(states))
    for i, s in enumerate(states):
        v = _phi_t_for_identity(s, params)
        dissipation[i] = hm_norm(zero_mean(v), -1) ** 2
        pumping[i] = mean(s.phi_t) * float(
            np.mean(f_eval(s.phi.values, params))
        )
    e_start = full_energy(states[0], params)
    e_end = full_energy(states[-1], params)
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    int_dissipation = float(trapezoid(dissipation, times))
    int_pumping = float(trapezoid(pumping, times))
    return abs(e_end - e_start + int_dissipation - int_pumping)

"""Contracting/compact split of the relaxation flow, run alongside the full
solution.

The solution is written as phi = phi_d + phi_c, where

* the d part evolves under the monotone-shifted nonlinearity
  f_k(s) = f(s) + k*s with zero-mean initial data (zero-mean parts of the
  full data) and stays zero-mean forever; its product-space norm decays
  exponentially;
* the c part carries the means (constant initial data <phi_0>, <phi_1>) and
  is forced by the coupling terms f_k(phi) - f_k(phi - phi_c) and k*phi,
  evaluated explicitly at the previous time level against the synchronous
  full solution.

Both subsystems use the same implicit operator lap(lap^2 + 2 lap + k) as the
full stepper, so the explicit forcings telescope exactly and the discrete
sum phi_d + phi_c reproduces the full discrete trajectory to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrators import StepScheme, _nonlinear_term, imex_pair_update, step_mpfc
from .model import ModelParams, State, fk_eval
from .spectral import Field, hm_norm, mean, x_norm, zero_mean

MEAN_CONTRACT_TOL = 1e-12


def split_initial_states(state: State) -> tuple:
    """Initial (d, c) pair: zero-mean parts and constant mean parts."""
    grid = state.grid
    d0 = State(
        phi=zero_mean(state.phi),
        phi_t=zero_mean(state.phi_t),
        beta=state.beta,
        time=state.time,
    )
    c0 = State(
        phi=Field.constant(grid, mean(state.phi)),
        phi_t=Field.constant(grid, mean(state.phi_t)),
        beta=state.beta,
        time=state.time,
    )
    return d0, c0


def step_d(state_d: State, scheme: StepScheme, params: ModelParams) -> State:
    """Advance the zero-mean contracting part one step.

    Same IMEX machinery as the full stepper with f replaced by f_k; since
    f_k - k*id = f, the explicit term is lap(f(phi_d)).  The kappa=0 modes
    are projected to exactly zero.
    """
    if not state_d.beta > 0.0:
        raise ValueError("step_d requires a beta>0 state")
    if abs(mean(state_d.phi)) > MEAN_CONTRACT_TOL or (
        abs(mean(state_d.phi_t)) > MEAN_CONTRACT_TOL
    ):
        raise ValueError(
            "zero-mean contract violated: step_d input has nonzero mean "
            f"({mean(state_d.phi):.3e}, {mean(state_d.phi_t):.3e})"
        )
    grid = state_d.grid
    # explicit part of f_k under the k-shifted implicit operator: f_k - k*id = f
    nl = np.fft.fftn(
        fk_eval(state_d.phi.values, params) - params.k_split * state_d.phi.values,
        norm="forward",
    )
    nl *= grid.dealias_mask
    phi_new, v_new = imex_pair_update(
        grid,
        state_d.beta,
        scheme.dt,
        params.k_split,
        state_d.phi.spectrum,
        state_d.phi_t.spectrum,
        nl,
    )
    zero = grid.zero_index
    phi_new[zero] = 0.0
    v_new[zero] = 0.0
    return State(
        phi=Field(grid, spectrum=phi_new),
        phi_t=Field(grid, spectrum=v_new),
        beta=state_d.beta,
        time=state_d.time + scheme.dt,
    )


def step_c(
    state_c: State, phi_full: Field, scheme: StepScheme, params: ModelParams
) -> State:
    """Advance the mean-carrying compact part one step.

    ``phi_full`` must be the full solution at the same time level; the
    coupling terms f_k(phi) - f_k(phi - phi_c) and k*phi (minus the k-shift
    of the implicit operator, k*phi_c) are evaluated explicitly there.
    """
    if not state_c.beta > 0.0:
        raise ValueError("step_c requires a beta>0 state")
    if phi_full.grid.shape != state_c.grid.shape:
        raise ValueError("grid mismatch between phi_full and the c state")
    grid = state_c.grid
    k = params.k_split
    phi_vals = phi_full.values
    c_vals = state_c.phi.values
    coupling = (
        fk_eval(phi_vals, params)
        - fk_eval(phi_vals - c_vals, params)
        - k * phi_vals
        - k * c_vals
    )
    nl = np.fft.fftn(coupling, norm="forward")
    nl *= grid.dealias_mask
    phi_new, v_new = imex_pair_update(
        grid,
        state_c.beta,
        scheme.dt,
        k,
        state_c.phi.spectrum,
        state_c.phi_t.spectrum,
        nl,
    )
    return State(
        phi=Field(grid, spectrum=phi_new),
        phi_t=Field(grid, spectrum=v_new),
        beta=state_c.beta,
        time=state_c.time + scheme.dt,
    )


@dataclass
class SplitRun:
    """Stored lockstep trajectories of the full solution and its two parts."""

    times: list
    full: list
    d_part: list
    c_part: list
    k_split: float

    def reconstruction_error(self, i: int) -> float:
        """|| phi - (phi_d + phi_c) ||_2 at stored index i."""
        diff = self.full[i].phi - (self.d_part[i].phi + self.c_part[i].phi)
        return hm_norm(diff, 2)

    def reconstruction_error_velocity(self, i: int) -> float:
        """|| phi_t - (phi_d_t + phi_c_t) ||_{-1} at stored index i."""
        diff = self.full[i].phi_t - (self.d_part[i].phi_t + self.c_part[i].phi_t)
        return hm_norm(diff, -1)

    def d_norm(self, i: int, level: int = 0) -> float:
        return x_norm(self.d_part[i], level)

    def c_norm(self, i: int, level: int = 1) -> float:
        return x_norm(self.c_part[i], level)


def run_split(
    state: State,
    scheme: StepScheme,
    params: ModelParams,
    n_steps: int,
    store_every: int = 1,
) -> SplitRun:
    """Integrate the full solution and the (d, c) pair in lockstep.

    The c step always sees the full solution at its own (previous) time
    level, so the two subsolvers stay synchronous with the full one.
    """
    d_state, c_state = split_initial_states(state)
    run = SplitRun(
        times=[state.time],
        full=[state],
        d_part=[d_state],
        c_part=[c_state],
        k_split=params.k_split,
    )
    for n in range(1, n_steps + 1):
        c_next = step_c(c_state, state.phi, scheme, params)
        d_state = step_d(d_state, scheme, params)
        state = step_mpfc(state, scheme, params)
        c_state = c_next
        if n % store_every == 0 or n == n_steps:
            run.times.append(state.time)
            run.full.append(state)
            run.d_part.append(d_state)
            run.c_part.append(c_state)
    return run


def fit_decay_rate(series) -> tuple:
    """Least-squares exponential fit of (t, value) pairs.

    Regresses log(value) on t and returns (rate, prefactor) with
    value ~= prefactor * exp(-rate * t); a positive rate means decay.
    """
    rate, prefactor, _ = fit_decay_diagnostics(series)
    return rate, prefactor


def fit_decay_diagnostics(series) -> tuple:
    """Like :func:`fit_decay_rate` but also returns the R^2 of the log fit."""
    pts = list(series)
    if len(pts) < 10:
        raise ValueError(f"need at least 10 samples, got {len(pts)}")
    t = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    if np.any(v <= 0.0):
        raise ValueError("decay fit requires strictly positive values")
    logv = np.log(v)
    slope, intercept = np.polyfit(t, logv, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((logv - fitted) ** 2))
    ss_tot = float(np.sum((logv - np.mean(logv)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(-slope), float(np.exp(intercept)), r2

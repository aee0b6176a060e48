"""Shared helpers for the test suite."""

import numpy as np

from mpfc_lab import Field, LinearModeOracle, State, oracle_solve, x_norm
from mpfc_lab.spectral import coordinates


def cos_field(grid, amp=1.0, mean_val=0.0, kappa=1, axis=0):
    """mean + amp*cos(2*pi*kappa*x_axis) sampled on the grid."""
    x = coordinates(grid)[axis]
    return Field(grid, values=mean_val + amp * np.cos(2.0 * np.pi * kappa * x))


def cos_field_exact(grid, amp=1.0, mean_val=0.0, kappa=1, axis=0):
    """Same mode built directly in spectral space (no sampling dust)."""
    spec = np.zeros(grid.shape, dtype=complex)
    idx_pos = [0] * grid.dim
    idx_neg = [0] * grid.dim
    idx_pos[axis] = kappa
    idx_neg[axis] = grid.n_points - kappa
    spec[tuple(idx_pos)] = 0.5 * amp
    spec[tuple(idx_neg)] = 0.5 * amp
    spec[(0,) * grid.dim] = mean_val
    return Field(grid, spectrum=spec)


def rk4_mode(beta, a, c0, c1, t, n=20000):
    """Independent scalar integrator for beta*c'' + c' + a*c = 0 (beta > 0)."""
    h = t / n
    c, d = c0, c1

    def f(c, d):
        return d, -(d + a * c) / beta

    for _ in range(n):
        k1c, k1d = f(c, d)
        k2c, k2d = f(c + 0.5 * h * k1c, d + 0.5 * h * k1d)
        k3c, k3d = f(c + 0.5 * h * k2c, d + 0.5 * h * k2d)
        k4c, k4d = f(c + h * k3c, d + h * k3d)
        c += h * (k1c + 2 * k2c + 2 * k3c + k4c) / 6
        d += h * (k1d + 2 * k2d + 2 * k3d + k4d) / 6
    return c, d


def oracle_state(grid, params, phi_spec, v_spec, t):
    """Evolve every mode of (phi, v) by the closed-form linear solution."""
    exact_phi = np.zeros(grid.shape, dtype=complex)
    exact_v = np.zeros(grid.shape, dtype=complex)
    it = np.nditer(grid.k2, flags=["multi_index"])
    for lam in it:
        idx = it.multi_index
        orc = LinearModeOracle(lam=float(lam), beta=params.beta, epsilon=params.epsilon)
        cr, cdr = oracle_solve(orc, phi_spec[idx].real, v_spec[idx].real, t)
        ci, cdi = oracle_solve(orc, phi_spec[idx].imag, v_spec[idx].imag, t)
        exact_phi[idx] = cr + 1j * ci
        exact_v[idx] = cdr + 1j * cdi
    return exact_phi, exact_v


def linear_error(grid, params, state0, stepper, scheme_cls, kind, dt, horizon):
    """Global error at the horizon against the per-mode closed form."""
    n = int(round(horizon / dt))
    s = state0
    scheme = scheme_cls(kind, dt)
    for _ in range(n):
        s = stepper(s, scheme, params)
    exact_phi, exact_v = oracle_state(
        grid, params, state0.phi.spectrum, state0.phi_t.spectrum, n * dt
    )
    if params.beta == 0.0:
        diff_v = Field.zeros(grid)
    else:
        diff_v = s.phi_t - Field(grid, spectrum=exact_v)
    diff = State(
        phi=s.phi - Field(grid, spectrum=exact_phi),
        phi_t=diff_v,
        beta=params.beta,
        time=s.time,
    )
    return x_norm(diff, 0)


def loglog_slope(xs, ys):
    ys = np.asarray(ys, dtype=float)
    if np.any(ys <= 0.0):
        return float("nan")
    return float(np.polyfit(np.log2(xs), np.log2(ys), 1)[0])

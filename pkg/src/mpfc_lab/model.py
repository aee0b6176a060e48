"""Model parameters, nonlinearity, splitting, energies, and mean-mode laws.

The evolution equations on the unit periodic box are

    relaxation form:  beta*phi_tt + phi_t = lap[lap^2 phi + 2 lap phi + f(phi)]
    overdamped form (beta = 0):  phi_t = lap[lap^2 phi + 2 lap phi + f(phi)]

with the cubic nonlinearity f(s) = s^3 + (1 - epsilon) s and free energy
density F(s) = (1-epsilon)/2 s^2 + 1/4 s^4, so that

    E(phi) = int ( 1/2 |lap phi|^2 - |grad phi|^2 + F(phi) ) dx

is the dissipated functional of the beta = 0 flow in the H^{-1} metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import Field, Grid, hm_norm, mean, zero_mean


def default_k_split(epsilon: float) -> float:
    """Default splitting constant: keeps s -> f(s) + k*s monotone and the
    implicit symbol lam^2 - 2*lam + k nonnegative for every real lam."""
    return max(1.0, epsilon - 1.0 + 0.1)


@dataclass(frozen=True)
class ModelParams:
    """Immutable model/scheme parameters.

    beta     : relaxation time, >= 0
    epsilon  : undercooling parameter, any real
    k_split  : splitting constant k >= max(0, epsilon - 1), so that
               f_k(s) = f(s) + k*s has f_k'(s) = 3 s^2 + (1 - epsilon) + k >= 0
    beta0    : reference relaxation time > 0 with beta <= beta0
    cubic    : set False to drop the cubic term (linear benchmarking only)
    """

    beta: float
    epsilon: float
    k_split: float = None  # type: ignore[assignment]
    beta0: float = None  # type: ignore[assignment]
    cubic: bool = True

    def __post_init__(self):
        if self.k_split is None:
            object.__setattr__(self, "k_split", default_k_split(self.epsilon))
        if self.beta0 is None:
            object.__setattr__(self, "beta0", max(1.0, float(self.beta)))
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.beta0 <= 0:
            raise ValueError(f"beta0 must be > 0, got {self.beta0}")
        if self.beta > self.beta0:
            raise ValueError(f"beta={self.beta} exceeds beta0={self.beta0}")
        if self.k_split < 0 or self.k_split < self.epsilon - 1.0:
            raise ValueError(
                f"k_split={self.k_split} violates k >= max(0, epsilon-1)"
                f" with epsilon={self.epsilon}"
            )


@dataclass(frozen=True)
class State:
    """A point (phi, phi_t) in phase space, tagged with its beta and time.

    For beta = 0 the second component must be identically zero (the
    overdamped flow carries no independent velocity).
    """

    phi: Field
    phi_t: Field
    beta: float
    time: float = 0.0

    def __post_init__(self):
        if self.phi.grid.shape != self.phi_t.grid.shape:
            raise ValueError("phi and phi_t live on different grids")
        if self.beta < 0:
            raise ValueError("state beta must be >= 0")
        if self.time < 0:
            raise ValueError("state time must be >= 0")
        if self.beta == 0.0:
            if np.max(np.abs(self.phi_t.values)) > 1e-13:
                raise ValueError("beta=0 state requires phi_t identically zero")

    @classmethod
    def overdamped(cls, phi: Field, time: float = 0.0) -> "State":
        return cls(phi=phi, phi_t=Field.zeros(phi.grid), beta=0.0, time=time)

    @property
    def grid(self) -> Grid:
        return self.phi.grid


@dataclass(frozen=True)
class ConservedCharge:
    """The invariant beta*<phi_t> + <phi> of the relaxation dynamics."""

    value: float

    @classmethod
    def of(cls, state: State) -> "ConservedCharge":
        return cls(state.beta * mean(state.phi_t) + mean(state.phi))


def f_eval(s, params: ModelParams):
    """Cubic nonlinearity f(s) = s^3 + (1 - epsilon) s (elementwise)."""
    lin = (1.0 - params.epsilon) * s
    if not params.cubic:
        return lin
    return s**3 + lin


def fk_eval(s, params: ModelParams):
    """Monotone shift f_k(s) = f(s) + k s."""
    return f_eval(s, params) + params.k_split * s


def free_energy_density(s, params: ModelParams):
    """F(s) = (1-epsilon)/2 s^2 + 1/4 s^4; bounded below by -(1-epsilon)^2/4."""
    quad = 0.5 * (1.0 - params.epsilon) * s**2
    if not params.cubic:
        return quad
    return quad + 0.25 * s**4


def energy(phi: Field, params: ModelParams) -> float:
    """E(phi) = int( 1/2 |lap phi|^2 - |grad phi|^2 + F(phi) ) dx.

    Quadratic terms are evaluated spectrally (exact for band-limited fields);
    the F term uses the equal-weight grid quadrature.
    """
    lam = phi.grid.k2
    power = np.abs(phi.spectrum) ** 2
    quad = float(np.sum((0.5 * lam**2 - lam) * power))
    bulk = float(np.mean(free_energy_density(phi.values, params)))
    return quad + bulk


def full_energy(state: State, params: ModelParams) -> float:
    """(beta/2)*||zero_mean(phi_t)||_{-1}^2 + E(phi).

    This is the functional whose decrease balance the energy identity tests
    verify; for beta = 0 it reduces to E(phi).
    """
    base = energy(state.phi, params)
    if state.beta == 0.0:
        return base
    vbar = hm_norm(zero_mean(state.phi_t), -1)
    return 0.5 * state.beta * vbar**2 + base


def mean_mode_exact(
    params: ModelParams, mean_phi0: float, mean_phi1: float, t: float
):
    """Closed-form means (<phi>, <phi_t>) at time t.

    beta > 0:  <phi_t> = <phi_1> e^{-t/beta},
               <phi>   = beta <phi_1> + <phi_0> - beta <phi_1> e^{-t/beta};
    beta = 0:  (<phi_0>, 0)  (mass conservation).

    The pair satisfies beta*<phi_t> + <phi> = beta*<phi_1> + <phi_0>.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    beta = params.beta
    if beta == 0.0:
        return float(mean_phi0), 0.0
    decay = np.exp(-t / beta)
    mean_phit = mean_phi1 * decay
    mean_phi = beta * mean_phi1 + mean_phi0 - beta * mean_phi1 * decay
    return float(mean_phi), float(mean_phit)


def rhs_pfc(phi: Field, params: ModelParams) -> Field:
    """Right-hand side lap[lap^2 phi + 2 lap phi + f(phi)], dealiased.

    The outer Laplacian kills kappa=0, so the result has exactly zero mean.
    """
    grid = phi.grid
    lam = grid.k2
    f_hat = np.fft.fftn(f_eval(phi.values, params), norm="forward")
    f_hat *= grid.dealias_mask
    inner = (lam**2 - 2.0 * lam) * phi.spectrum + f_hat
    return Field(grid, spectrum=-lam * inner)


def energy_gradient_pairing(phi: Field, v: Field, params: ModelParams) -> float:
    """int (lap^2 phi + 2 lap phi + f(phi)) * v dx.

    Quadratic part spectrally, f-part by the grid quadrature; matches the
    directional derivative of :func:`energy` along v.
    """
    lam = phi.grid.k2
    quad = float(
        np.sum(((lam**2 - 2.0 * lam) * phi.spectrum) * np.conj(v.spectrum)).real
    )
    bulk = float(np.mean(f_eval(phi.values, params) * v.values))
    return quad + bulk

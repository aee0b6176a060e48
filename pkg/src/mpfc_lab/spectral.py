"""Periodic spectral grids, fields, and Sobolev-scale norms.

Everything lives on the unit box (0,1)^n, n <= 3, with periodic boundary
conditions, so the Fourier wavevectors are exactly 2*pi*kappa for integer
frequency vectors kappa.  The unit box is hard-coded: no length parameter.

Conventions
-----------
* A :class:`Field` keeps real samples and complex Fourier coefficients in
  lazy sync.  Coefficients are stored in "Fourier series" normalisation
  (``fftn(values, norm="forward")``), so the kappa=0 coefficient equals the
  spatial mean and Parseval reads ``int |u|^2 dx = sum_k |u_hat_k|^2``.
* ``hm_norm(u, m)`` for m >= 0 is the full Sobolev norm built from the
  multi-index sum over all derivatives of order <= m, evaluated spectrally.
  For m = -1 it is the dual norm ``sqrt(||grad psi_u||^2 + <u>^2)`` where
  ``-lap psi_u = u - <u>`` with zero-mean ``psi_u``.
* Dealiasing follows the two-thirds rule: modes with any ``|kappa_j| >
  n_points/3`` are zeroed after nonlinear products.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidFieldError

SOBOLEV_LEVELS = frozenset({-1, 0, 1, 2, 3, 4, 5})


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Grid:
    """Periodic lattice on the unit box with precomputed wavenumber tables.

    Parameters
    ----------
    dim : int
        Spatial dimension, one of {1, 2, 3}.
    n_points : int
        Samples per axis; must be a power of two (>= 4) so the two-thirds
        mask keeps at least the first mode.

    Attributes
    ----------
    freqs : tuple of ndarray
        Integer frequencies kappa_j per axis in FFT ordering, broadcast to
        the full grid shape.
    wavevectors : tuple of ndarray
        Components 2*pi*kappa_j of the wavevector, full grid shape.
    k2 : ndarray
        |2*pi*kappa|^2 per mode.
    dealias_mask : ndarray of bool
        True where the mode survives the two-thirds rule.
    """

    dim: int
    n_points: int
    freqs: tuple = field(init=False, repr=False)
    wavevectors: tuple = field(init=False, repr=False)
    k2: np.ndarray = field(init=False, repr=False)
    dealias_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not _is_power_of_two(self.n_points) or self.n_points < 4:
            raise ValueError(
                f"n_points must be a power of two >= 4, got {self.n_points}"
            )
        n = self.n_points
        kappa1d = np.fft.fftfreq(n, d=1.0 / n)  # integer-valued floats
        axes = np.meshgrid(*([kappa1d] * self.dim), indexing="ij")
        freqs = tuple(a for a in axes)
        wavevectors = tuple(2.0 * np.pi * a for a in axes)
        k2 = np.zeros(freqs[0].shape)
        for w in wavevectors:
            k2 += w * w
        cutoff = n / 3.0
        mask = np.ones(freqs[0].shape, dtype=bool)
        for a in freqs:
            mask &= np.abs(a) <= cutoff
        for name, value in (
            ("freqs", freqs),
            ("wavevectors", wavevectors),
            ("k2", k2),
            ("dealias_mask", mask),
        ):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "_mult_cache", {})
        object.__setattr__(self, "_table_cache", {})

    @property
    def shape(self) -> tuple:
        return (self.n_points,) * self.dim

    @property
    def size(self) -> int:
        return self.n_points**self.dim

    @property
    def zero_index(self) -> tuple:
        return (0,) * self.dim

    def sobolev_multiplier(self, m: int) -> np.ndarray:
        """Spectral multiplier for the squared H^m norm, m >= 0.

        Sum over multi-indices alpha with |alpha| <= m of
        prod_j (2*pi*kappa_j)^(2*alpha_j).
        """
        if m < 0:
            raise ValueError("sobolev_multiplier requires m >= 0")
        cache = self._mult_cache
        if m not in cache:
            mult = np.zeros(self.shape)
            for alpha in itertools.product(range(m + 1), repeat=self.dim):
                if sum(alpha) > m:
                    continue
                term = np.ones(self.shape)
                for j, a in enumerate(alpha):
                    if a:
                        term = term * self.wavevectors[j] ** (2 * a)
                mult += term
            cache[m] = mult
        return cache[m]

    def inv_k2(self) -> np.ndarray:
        """1/|2*pi*kappa|^2 with the kappa=0 entry set to zero."""
        cache = self._mult_cache
        if "inv_k2" not in cache:
            safe = self.k2.copy()
            safe[self.zero_index] = 1.0
            inv = 1.0 / safe
            inv[self.zero_index] = 0.0
            cache["inv_k2"] = inv
        return cache["inv_k2"]

    def step_table(self, key, builder):
        """Memoise per-grid solver tables (implicit symbols etc.)."""
        cache = self._table_cache
        if key not in cache:
            cache[key] = builder()
        return cache[key]


class Field:
    """Real scalar samples on a :class:`Grid` with a lazily cached transform.

    Construct from ``values`` (real samples) or ``spectrum`` (normalised
    Fourier coefficients); the missing representation is materialised on
    first access.  Fields are treated as immutable: arithmetic returns new
    instances and callers must not mutate the underlying arrays.
    """

    __slots__ = ("grid", "_values", "_spectrum")

    def __init__(self, grid: Grid, values=None, spectrum=None):
        if values is None and spectrum is None:
            raise ValueError("Field needs values or spectrum")
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != grid.shape:
                raise ValueError(
                    f"values shape {values.shape} does not match grid {grid.shape}"
                )
        if spectrum is not None:
            spectrum = np.asarray(spectrum, dtype=complex)
            if spectrum.shape != grid.shape:
                raise ValueError(
                    f"spectrum shape {spectrum.shape} does not match grid {grid.shape}"
                )
        self.grid = grid
        self._values = values
        self._spectrum = spectrum

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, values=np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, values=np.full(grid.shape, float(c)))

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = np.fft.ifftn(self._spectrum, norm="forward").real
        return self._values

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = np.fft.fftn(self._values, norm="forward")
        return self._spectrum

    def dealiased(self) -> "Field":
        return Field(self.grid, spectrum=self.spectrum * self.grid.dealias_mask)

    def __add__(self, other: "Field") -> "Field":
        self._check_grid(other)
        return Field(self.grid, spectrum=self.spectrum + other.spectrum)

    def __sub__(self, other: "Field") -> "Field":
        self._check_grid(other)
        return Field(self.grid, spectrum=self.spectrum - other.spectrum)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, spectrum=self.spectrum * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self * -1.0

    def _check_grid(self, other: "Field"):
        if other.grid is not self.grid and other.grid.shape != self.grid.shape:
            raise ValueError("grid mismatch between fields")


def coordinates(grid: Grid) -> tuple:
    """Sample coordinates x_j = j/n per axis, broadcast to the grid shape."""
    x1d = np.arange(grid.n_points) / grid.n_points
    return tuple(np.meshgrid(*([x1d] * grid.dim), indexing="ij"))


def mean(u: Field) -> float:
    """Spatial average <u>; equals the kappa=0 Fourier coefficient (|Q|=1)."""
    if u._values is not None and not np.isfinite(u._values).all():
        raise InvalidFieldError("field has non-finite samples")
    if u._spectrum is not None and not np.isfinite(u._spectrum).all():
        raise InvalidFieldError("field has non-finite spectrum")
    return float(u.spectrum[u.grid.zero_index].real)


def zero_mean(u: Field) -> Field:
    """u - <u>, implemented by zeroing the kappa=0 coefficient."""
    spec = u.spectrum.copy()
    spec[u.grid.zero_index] = 0.0
    return Field(u.grid, spectrum=spec)


def inv_laplacian_pow(u: Field, s: float) -> Field:
    """Apply the power (-lap)^s to the zero-mean part of u.

    Mode kappa != 0 is multiplied by |2*pi*kappa|^(2s); the kappa=0 mode is
    set to zero, so the result always has zero mean.  s = -1 solves
    ``-lap psi = u - <u>`` for the unique zero-mean psi.
    """
    grid = u.grid
    safe = grid.k2.copy()
    safe[grid.zero_index] = 1.0
    factor = safe ** float(s)
    factor[grid.zero_index] = 0.0
    return Field(grid, spectrum=u.spectrum * factor)


def hm_norm(u: Field, m: int) -> float:
    """Sobolev norm on the periodic scale m in {-1, 0, ..., 5}.

    m >= 0: sqrt of the multi-index sum of squared derivative L2 norms.
    m = -1: sqrt(||grad psi_u||^2 + <u>^2) with -lap psi_u = u - <u>.
    """
    if m not in SOBOLEV_LEVELS:
        raise ValueError(f"unsupported Sobolev level {m}")
    spec = u.spectrum
    power = np.abs(spec) ** 2
    if m >= 0:
        return float(np.sqrt(np.sum(u.grid.sobolev_multiplier(m) * power)))
    mean_part = spec[u.grid.zero_index].real ** 2
    return float(np.sqrt(np.sum(power * u.grid.inv_k2()) + mean_part))


def x_norm(state, level: int) -> float:
    """Product-space norm (||u||_{level+2}^2 + beta * ||v||_{level-1}^2)^(1/2).

    ``state`` must expose ``phi``, ``phi_t`` and ``beta``.  For beta = 0 the
    second component is dropped (PFC phase-space convention).
    """
    if level not in (0, 1, 2, 3):
        raise ValueError(f"x_norm level must be in 0..3, got {level}")
    u_part = hm_norm(state.phi, level + 2)
    beta = state.beta
    if beta == 0.0:
        return u_part
    v_part = hm_norm(state.phi_t, level - 1)
    return float(np.sqrt(u_part**2 + beta * v_part**2))

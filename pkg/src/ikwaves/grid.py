"""Periodic 1-D spectral grid, fields on it, and the basic calculus.

Everything downstream (operators, solvers, energies) is built from the four
primitives here: spectral differentiation, trapezoid quadrature (exact on
periodic data), and the induced L2 inner product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, NonFiniteFieldError

__all__ = ["Grid", "Field", "make_grid", "deriv", "integrate", "inner", "norm"]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, L) with M nodes, x_j = j L / M."""

    length: float
    size: int

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise ValueError(f"domain length must be positive, got {self.length}")
        if self.size < 4 or self.size % 2 != 0:
            raise ValueError(f"grid size must be even and >= 4, got {self.size}")

    @property
    def spacing(self) -> float:
        return self.length / self.size

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.size) * self.spacing

    @property
    def wavenumbers(self) -> np.ndarray:
        """Wavenumbers of the real FFT modes, 2*pi*m/L for m = 0..M/2."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.size, d=self.spacing)

    def field(self, values) -> "Field":
        """Wrap samples (array or callable of x) as a Field on this grid."""
        if callable(values):
            values = values(self.nodes)
        arr = np.broadcast_to(np.asarray(values, dtype=float), (self.size,))
        return Field(self, np.array(arr))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.size))


def make_grid(length: float, size: int) -> Grid:
    """Build a periodic grid; rejects odd or too-small sizes and L <= 0."""
    return Grid(length, size)


@dataclass(frozen=True)
class Field:
    """Real-valued function sampled on a periodic Grid.

    Supports pointwise arithmetic with other fields on the same grid and
    with scalars; construction checks finiteness so NaN/Inf cannot
    propagate silently through operator chains.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"field has {v.shape} values, grid expects ({self.grid.size},)")
        if not np.all(np.isfinite(v)):
            raise NonFiniteFieldError("field contains NaN or Inf")
        object.__setattr__(self, "values", v)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return np.asarray(other, dtype=float)

    def __add__(self, other) -> "Field":
        return Field(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Field":
        return Field(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other) -> "Field":
        return Field(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other) -> "Field":
        return Field(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Field":
        return Field(self.grid, self.values / self._coerce(other))

    def __pow__(self, exponent: int) -> "Field":
        return Field(self.grid, self.values ** exponent)

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _check_same_grid(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")


def deriv(f: Field) -> Field:
    """Spectral derivative: mode k maps to i*k, Nyquist derivative zeroed.

    Exact (to round-off) for every resolved mode; zeroing the Nyquist mode
    keeps the result real and the operator skew-adjoint.
    """
    fh = np.fft.rfft(f.values)
    k = 2.0 * np.pi * np.fft.rfftfreq(f.grid.size, d=f.grid.spacing)
    fh *= 1j * k
    fh[-1] = 0.0  # Nyquist
    return Field(f.grid, np.fft.irfft(fh, n=f.grid.size))


def integrate(f: Field) -> float:
    """Trapezoid rule over the periodic cell, (L/M) * sum of samples."""
    return float(f.grid.spacing * np.sum(f.values))


def inner(f: Field, g: Field) -> float:
    """L2 pairing integrate(f*g); raises on grid mismatch."""
    _check_same_grid(f, g)
    return float(f.grid.spacing * np.dot(f.values, g.values))


def norm(f: Field) -> float:
    """Discrete L2 norm sqrt(inner(f, f))."""
    return float(np.sqrt(max(inner(f, f), 0.0)))

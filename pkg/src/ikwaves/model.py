"""Depth-integrated operators of the Isobe-Kakinuma water-wave model.

The velocity potential is expanded in powers of the height above the bottom,
Phi(x, z) = sum_i (z + 1 - b)^{p_i} phi_i(x), and the vertical integrals of
the kinetic energy produce a matrix of second-order operators in x acting on
the coefficient fields phi_i.  This module assembles those operators, the
surface-trace weights, the compatibility constraints, and the linearization
of the constraints with respect to the surface elevation.

Everything is dimensionless: unit mean depth, shallowness parameter delta,
and the convention that any term whose integer prefactor vanishes is dropped
(0/0 = 0), so no division by zero can occur.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DepthFloorError
from .grid import Field, Grid, deriv

__all__ = [
    "exponents",
    "VerticalExpansion",
    "Geometry",
    "PotentialCoeffs",
    "apply_block",
    "apply_operator",
    "apply_operator_array",
    "apply_constraints_array",
    "surface_weights",
    "surface_vertical_velocity",
    "apply_constraints",
    "surface_velocity",
    "constraint_depth_derivative",
]

CASES = ("H1", "H2")


def exponents(case: str, order: int) -> tuple[int, ...]:
    """Exponent list of the vertical expansion: H1 uses even powers 0,2,..,2N
    (flat bottom only), H2 uses all powers 0,1,..,N."""
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}, got {case!r}")
    if order < 0:
        raise ValueError(f"expansion order must be >= 0, got {order}")
    step = 2 if case == "H1" else 1
    return tuple(step * i for i in range(order + 1))


@dataclass(frozen=True)
class VerticalExpansion:
    """Choice of vertical basis: case H1 or H2 and truncation order."""

    case: str
    order: int

    def __post_init__(self) -> None:
        exponents(self.case, self.order)  # validates

    @property
    def exps(self) -> tuple[int, ...]:
        return exponents(self.case, self.order)

    @property
    def ncoeffs(self) -> int:
        return self.order + 1


@dataclass(frozen=True)
class Geometry:
    """Fluid-column geometry: surface elevation, bathymetry, shallowness.

    The depth H = 1 + eta - b must stay above ``floor`` everywhere; violating
    that raises DepthFloorError at construction, never silently clips.
    Derived coefficient fields (depth powers, bottom slope, the stiff
    vertical-kinetic weight) are cached since every operator block reuses
    them.
    """

    grid: Grid
    eta: Field
    b: Field
    delta: float
    g: float = 1.0
    floor: float = 0.1

    def __post_init__(self) -> None:
        if self.eta.grid != self.grid or self.b.grid != self.grid:
            raise ValueError("eta and b must live on the geometry grid")
        if not (0.0 < self.delta <= 1.0):
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.g <= 0:
            raise ValueError(f"g must be positive, got {self.g}")
        depth = 1.0 + self.eta.values - self.b.values
        dmin = float(depth.min())
        if dmin < self.floor:
            raise DepthFloorError(
                f"min depth {dmin:.6g} is below the floor {self.floor:.6g}"
            )
        object.__setattr__(self, "_depth", Field(self.grid, depth))
        db = deriv(self.b)
        object.__setattr__(self, "_db", db)
        object.__setattr__(
            self, "_kw", Field(self.grid, self.delta ** -2 + db.values ** 2)
        )
        object.__setattr__(self, "_hpow", {})
        object.__setattr__(self, "_op_cache", {})

    @property
    def depth(self) -> Field:
        """Water column height H = 1 + eta - b."""
        return self._depth

    @property
    def db(self) -> Field:
        """Bottom slope."""
        return self._db

    @property
    def kinetic_weight(self) -> Field:
        """delta^-2 + (bottom slope)^2, the weight of the vertical kinetic term."""
        return self._kw

    def hpow(self, q: int) -> Field:
        """Cached pointwise power H^q (q >= 0)."""
        cache = self._hpow
        if q not in cache:
            cache[q] = Field(self.grid, self._depth.values ** q)
        return cache[q]

    @property
    def flat_bottom(self) -> bool:
        return float(np.max(np.abs(self.b.values))) == 0.0

    def with_eta(self, eta: Field) -> "Geometry":
        """Same bathymetry and parameters, new surface elevation."""
        return Geometry(self.grid, eta, self.b, self.delta, self.g, self.floor)


@dataclass(frozen=True)
class PotentialCoeffs:
    """Coefficient fields (phi_0, ..., phi_N) of the vertical expansion."""

    coeffs: tuple[Field, ...]

    def __post_init__(self) -> None:
        if not self.coeffs:
            raise ValueError("need at least one coefficient field")
        g0 = self.coeffs[0].grid
        if any(c.grid != g0 for c in self.coeffs):
            raise ValueError("coefficient fields must share one grid")
        object.__setattr__(self, "coeffs", tuple(self.coeffs))

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, i: int) -> Field:
        return self.coeffs[i]

    def __iter__(self):
        return iter(self.coeffs)

    @property
    def grid(self) -> Grid:
        return self.coeffs[0].grid

    def as_array(self) -> np.ndarray:
        return np.stack([c.values for c in self.coeffs])

    @classmethod
    def from_array(cls, grid: Grid, arr: np.ndarray) -> "PotentialCoeffs":
        return cls(tuple(Field(grid, row) for row in arr))

    @classmethod
    def zeros(cls, grid: Grid, n: int) -> "PotentialCoeffs":
        return cls(tuple(grid.zeros() for _ in range(n)))


def _check(geom: Geometry, exp: VerticalExpansion) -> None:
    if exp.case == "H1" and not geom.flat_bottom:
        raise ValueError("case H1 requires a flat bottom (b = 0)")


def _dx_rows(arr: np.ndarray, grid: Grid) -> np.ndarray:
    """Batched spectral x-derivative of stacked rows."""
    ah = np.fft.rfft(arr, axis=-1)
    ah *= 1j * grid.wavenumbers
    ah[..., -1] = 0.0
    return np.fft.irfft(ah, n=grid.size, axis=-1)


def _coefficient_tensors(geom: Geometry, exp: VerticalExpansion):
    """Per-block coefficient arrays of the operator matrix, cached on the
    geometry: row i of the apply is
    -d/dx(sum_j A_ij phi_j' + B_ij phi_j) + sum_j C_ij phi_j' + D_ij phi_j.
    """
    key = exp.exps
    cache = geom._op_cache
    if key in cache:
        return cache[key]
    n = exp.ncoeffs
    m = geom.grid.size
    a = np.empty((n, n, m))
    bco = np.zeros((n, n, m))
    c = np.zeros((n, n, m))
    d = np.zeros((n, n, m))
    db = geom.db.values
    kw = geom.kinetic_weight.values
    for i, pi in enumerate(key):
        for j, pj in enumerate(key):
            s = pi + pj
            a[i, j] = geom.hpow(s + 1).values / (s + 1)
            if pj > 0:
                bco[i, j] = -(pj / s) * geom.hpow(s).values * db
            if pi > 0:
                c[i, j] = -(pi / s) * geom.hpow(s).values * db
            if pi > 0 and pj > 0:
                d[i, j] = (pi * pj / (s - 1)) * geom.hpow(s - 1).values * kw
    weights = np.stack([geom.hpow(p).values for p in key])
    out = (a, bco, c, d, weights)
    cache[key] = out
    return out


def apply_operator_array(geom: Geometry, exp: VerticalExpansion, arr: np.ndarray) -> np.ndarray:
    """Operator-matrix apply on a stacked (N+1, M) coefficient array.

    Same result as apply_operator, with the FFTs batched and the coefficient
    tensors cached; this is the hot path of the Krylov solves.
    """
    _check(geom, exp)
    a, bco, c, d, _ = _coefficient_tensors(geom, exp)
    darr = _dx_rows(arr, geom.grid)
    flux = np.einsum("ijm,jm->im", a, darr) + np.einsum("ijm,jm->im", bco, arr)
    out = -_dx_rows(flux, geom.grid)
    out += np.einsum("ijm,jm->im", c, darr) + np.einsum("ijm,jm->im", d, arr)
    return out


def apply_constraints_array(geom: Geometry, exp: VerticalExpansion, arr: np.ndarray) -> np.ndarray:
    """Compatibility-constraint apply on a stacked array: rows 1..N of the
    operator apply minus the surface weights times row 0."""
    rows = apply_operator_array(geom, exp, arr)
    weights = _coefficient_tensors(geom, exp)[4]
    return rows[1:] - weights[1:] * rows[0]


def apply_block(geom: Geometry, exp: VerticalExpansion, i: int, j: int, psi: Field) -> Field:
    """Apply block (i, j) of the depth-integrated kinetic operator to psi.

    The block is the second-order operator

        -d/dx( H^(s+1)/(s+1) psi' - pj/s H^s psi b' )
        - pi/s H^s b' psi' + pi pj/(s-1) H^(s-1) (delta^-2 + b'^2) psi

    with s = p_i + p_j; every fraction whose integer numerator vanishes is
    dropped, so s = 0 or s = 1 never produce a division by zero.
    """
    _check(geom, exp)
    p = exp.exps
    n = exp.ncoeffs
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"block index ({i}, {j}) out of range for order {exp.order}")
    pi, pj = p[i], p[j]
    s = pi + pj
    dpsi = deriv(psi)
    flux = geom.hpow(s + 1) * dpsi * (1.0 / (s + 1))
    if pj > 0:
        flux = flux - geom.hpow(s) * psi * geom.db * (pj / s)
    out = -deriv(flux)
    if pi > 0:
        out = out - geom.hpow(s) * geom.db * dpsi * (pi / s)
    if pi > 0 and pj > 0:
        out = out + geom.hpow(s - 1) * geom.kinetic_weight * psi * (pi * pj / (s - 1))
    return out


def apply_operator(geom: Geometry, exp: VerticalExpansion, pv: PotentialCoeffs) -> list[Field]:
    """Full operator-matrix apply: component i is sum_j block(i, j) phi_j."""
    n = exp.ncoeffs
    if len(pv) != n:
        raise ValueError(f"expected {n} coefficient fields, got {len(pv)}")
    rows = apply_operator_array(geom, exp, pv.as_array())
    return [Field(geom.grid, row) for row in rows]


def surface_weights(geom: Geometry, exp: VerticalExpansion) -> list[Field]:
    """Weights (H^{p_0}, ..., H^{p_N}) whose dot with the coefficients gives
    the surface trace of the potential."""
    return [geom.hpow(p) for p in exp.exps]


def surface_vertical_velocity(geom: Geometry, exp: VerticalExpansion, pv: PotentialCoeffs) -> Field:
    """Vertical derivative of the expanded potential at the surface,
    sum_{j>=1} p_j H^{p_j - 1} phi_j (before the delta^-2 weighting)."""
    acc = geom.grid.zeros()
    for pj, phi_j in zip(exp.exps, pv):
        if pj > 0:
            acc = acc + geom.hpow(pj - 1) * phi_j * float(pj)
    return acc


def surface_velocity(
    geom: Geometry, exp: VerticalExpansion, pv: PotentialCoeffs
) -> tuple[Field, Field]:
    """Surface traces (u, w) of the expanded velocity.

    u is the horizontal trace sum_j (H^{p_j} phi_j' - p_j H^{p_j-1} phi_j b');
    w is the vertical trace sum_j p_j H^{p_j-1} phi_j.
    """
    _check(geom, exp)
    u = geom.grid.zeros()
    for pj, phi_j in zip(exp.exps, pv):
        u = u + geom.hpow(pj) * deriv(phi_j)
        if pj > 0:
            u = u - geom.hpow(pj - 1) * phi_j * geom.db * float(pj)
    w = surface_vertical_velocity(geom, exp, pv)
    return u, w


def apply_constraints(geom: Geometry, exp: VerticalExpansion, pv: PotentialCoeffs) -> list[Field]:
    """Compatibility constraints: component i-1 is row i of the operator
    apply minus H^{p_i} times row 0, for i = 1..N (empty when N = 0).

    A coefficient vector reconstructed from canonical data satisfies these
    to solver tolerance.
    """
    if len(pv) != exp.ncoeffs:
        raise ValueError(f"expected {exp.ncoeffs} coefficient fields, got {len(pv)}")
    rows = apply_constraints_array(geom, exp, pv.as_array())
    return [Field(geom.grid, row) for row in rows]


def _block_depth_derivative(
    geom: Geometry, exp: VerticalExpansion, i: int, j: int, etadot: Field, psi: Field
) -> Field:
    """Derivative of block (i, j) with respect to the depth, applied to psi,
    in the direction etadot (each depth power differentiated once)."""
    p = exp.exps
    pi, pj = p[i], p[j]
    s = pi + pj
    dpsi = deriv(psi)
    flux = geom.hpow(s) * dpsi
    if pj > 0:
        flux = flux - geom.hpow(s - 1) * psi * geom.db * float(pj)
    out = -deriv(etadot * flux)
    if pi > 0:
        out = out - etadot * geom.hpow(s - 1) * geom.db * dpsi * float(pi)
    if pi > 0 and pj > 0:
        out = out + etadot * geom.hpow(s - 2) * geom.kinetic_weight * psi * float(pi * pj)
    return out


def constraint_depth_derivative(
    geom: Geometry, exp: VerticalExpansion, etadot: Field, pv: PotentialCoeffs
) -> list[Field]:
    """Linearization of the compatibility constraints in the surface
    elevation, applied to the given coefficients in the direction etadot.

    Component i-1 is
        sum_j ( D_block(i,j) - H^{p_i} D_block(0,j)
                - p_i H^{p_i-1} etadot block(0,j) ) phi_j.
    """
    _check(geom, exp)
    n = exp.ncoeffs
    if len(pv) != n:
        raise ValueError(f"expected {n} coefficient fields, got {len(pv)}")
    p = exp.exps
    row0 = geom.grid.zeros()  # sum_j block(0, j) phi_j
    drow0 = geom.grid.zeros()  # sum_j D_block(0, j)[etadot] phi_j
    for j in range(n):
        row0 = row0 + apply_block(geom, exp, 0, j, pv[j])
        drow0 = drow0 + _block_depth_derivative(geom, exp, 0, j, etadot, pv[j])
    out = []
    for i in range(1, n):
        acc = geom.grid.zeros()
        for j in range(n):
            acc = acc + _block_depth_derivative(geom, exp, i, j, etadot, pv[j])
        acc = acc - geom.hpow(p[i]) * drow0
        acc = acc - etadot * geom.hpow(p[i] - 1) * row0 * float(p[i])
        out.append(acc)
    return out

"""Reference full water-wave Hamiltonian via a terrain-following Laplace solve.

The fluid column is mapped onto a fixed strip by sigma = (z + 1 - b)/H - 1,
Fourier collocation in x and Chebyshev collocation in sigma.  The solve
yields the interior potential with Dirichlet data at the surface and the
impermeable-bottom condition below; the kinetic energy is then a volume
integral with Clenshaw-Curtis weights.  A consistency sweep compares this
Hamiltonian with the model Hamiltonian over a range of shallowness values
and fits the convergence order of their difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import hamiltonian
from .errors import ConvergenceError, DepthFloorError
from .grid import Field, Grid, inner, integrate
from .model import Geometry, VerticalExpansion
from .solver import SolveReport

__all__ = [
    "SigmaGrid",
    "LaplaceSolution",
    "dtn_flat",
    "solve_laplace",
    "surface_normal_flux",
    "hamiltonian_ww",
    "SweepConfig",
    "SweepRow",
    "SweepResult",
    "consistency_sweep",
]


def _cheb_matrix(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Gauss-Lobatto nodes on [1, -1] and the collocation
    differentiation matrix (d/dy)."""
    if n == 0:
        return np.array([1.0]), np.zeros((1, 1))
    y = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[n] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dy = y[:, None] - y[None, :]
    d = np.outer(c, 1.0 / c) / (dy + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return y, d


def _clencurt_weights(n: int) -> np.ndarray:
    """Clenshaw-Curtis quadrature weights on [-1, 1] for n+1 CGL nodes."""
    if n == 0:
        return np.array([2.0])
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    ii = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n ** 2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2.0 * k * theta[ii]) / (4.0 * k ** 2 - 1)
        v -= np.cos(n * theta[ii]) / (n ** 2 - 1)
    else:
        w[0] = w[n] = 1.0 / n ** 2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * theta[ii]) / (4.0 * k ** 2 - 1)
    w[ii] = 2.0 * v / n
    return w


@dataclass(frozen=True)
class SigmaGrid:
    """Terrain-following grid: Fourier nodes in x, CGL nodes in sigma.

    Row 0 is the surface (sigma = 0), row mz the bottom (sigma = -1); the
    physical height is z = -1 + b(x) + (sigma + 1) H(x).
    """

    grid: Grid
    mz: int

    def __post_init__(self) -> None:
        if self.mz < 8:
            raise ValueError(f"need at least 8 vertical intervals, got {self.mz}")
        y, d = _cheb_matrix(self.mz)
        object.__setattr__(self, "sigma", (y - 1.0) / 2.0)
        object.__setattr__(self, "dsig", 2.0 * d)
        object.__setattr__(self, "dsig2", 4.0 * (d @ d))
        object.__setattr__(self, "weights", _clencurt_weights(self.mz) / 2.0)


def _dx(arr: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral x-derivative along the last axis, Nyquist zeroed."""
    ah = np.fft.rfft(arr, axis=-1)
    k = grid.wavenumbers
    ah *= 1j * k
    ah[..., -1] = 0.0
    return np.fft.irfft(ah, n=grid.size, axis=-1)


def dtn_flat(phi: Field, delta: float) -> Field:
    """Flat-geometry Dirichlet-to-Neumann map: mode k scales by
    k tanh(delta k)/delta, mean mode to zero."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    k = phi.grid.wavenumbers
    mult = k * np.tanh(delta * k) / delta
    ph = np.fft.rfft(phi.values) * mult
    return Field(phi.grid, np.fft.irfft(ph, n=phi.grid.size))


class _SigmaOperator:
    """Matrix-free transformed Laplace operator plus flat preconditioner."""

    def __init__(self, sg: SigmaGrid, eta: Field, b: Field, delta: float, floor: float):
        grid = sg.grid
        h = 1.0 + eta.values - b.values
        if h.min() < floor:
            raise DepthFloorError(
                f"min depth {h.min():.6g} is below the floor {floor:.6g}"
            )
        hx = _dx(h, grid)
        bx = _dx(b.values, grid)
        hxx = _dx(hx, grid)
        bxx = _dx(bx, grid)
        sp1 = (sg.sigma + 1.0)[:, None]  # (mz+1, 1)
        self.c1 = -(bx + sp1 * hx) / h
        dc1_dx = -(bxx + sp1 * hxx) / h + (bx + sp1 * hx) * hx / h ** 2
        self.c2 = dc1_dx + self.c1 * (-hx / h)
        self.h = h
        self.bx = bx
        self.delta = delta
        self.sg = sg
        self.d2 = delta ** 2
        self.vert = 1.0 / h ** 2  # coefficient of the unscaled vertical term

        # flat-state inverse per Fourier mode, unknown rows 1..mz
        mz = sg.mz
        k = grid.wavenumbers
        base = np.tile(sg.dsig2[None, :, :], (k.size, 1, 1))
        idx = np.arange(1, mz)
        base[:, idx, idx] += -(self.d2) * k[:, None] ** 2
        base[:, mz, :] = sg.dsig[mz, :][None, :]
        self._inv = np.linalg.inv(base[:, 1:, 1:])

    def rows(self, psi: np.ndarray) -> np.ndarray:
        """Collocation rows 1..mz applied to a full (mz+1, M) potential:
        interior rows are the delta^2-scaled transformed Laplacian, the last
        row the scaled bottom condition."""
        sg = self.sg
        psix = _dx(psi, sg.grid)
        psixx = _dx(psix, sg.grid)
        psis = sg.dsig @ psi
        psiss = sg.dsig2 @ psi
        psixs = _dx(psis, sg.grid)
        pde = (
            self.d2 * (psixx + 2.0 * self.c1 * psixs + self.c1 ** 2 * psiss + self.c2 * psis)
            + self.vert * psiss
        )
        bc = (1.0 + self.d2 * self.bx ** 2) * psis[-1] - self.d2 * self.h * self.bx * psix[-1]
        out = pde[1:]
        out[-1] = bc
        return out

    def precondition(self, res: np.ndarray) -> np.ndarray:
        """Per-mode flat-state solve of a (mz, M) residual block."""
        rh = np.fft.rfft(res, axis=1)
        sol = np.einsum("mij,jm->im", self._inv, rh)
        return np.fft.irfft(sol, n=self.sg.grid.size, axis=1)


@dataclass(frozen=True)
class LaplaceSolution:
    """Interior potential on a SigmaGrid together with the map data needed
    to evaluate physical derivatives."""

    sigma_grid: SigmaGrid
    psi: np.ndarray = field(repr=False)
    eta: Field
    b: Field
    delta: float
    report: SolveReport

    def gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical-space derivatives (d/dx, d/dz) of the potential on the
        mapped nodes."""
        sg = self.sigma_grid
        h = 1.0 + self.eta.values - self.b.values
        bx = _dx(self.b.values, sg.grid)
        hx = _dx(h, sg.grid)
        sp1 = (sg.sigma + 1.0)[:, None]
        c1 = -(bx + sp1 * hx) / h
        psis = sg.dsig @ self.psi
        phys_x = _dx(self.psi, sg.grid) + c1 * psis
        phys_z = psis / h
        return phys_x, phys_z


def solve_laplace(
    eta: Field,
    b: Field,
    phi: Field,
    delta: float,
    mz: int = 32,
    tol: float = 1e-11,
    max_iter: int = 400,
    floor: float = 0.1,
) -> LaplaceSolution:
    """Solve the scaled Laplace equation in the fluid column.

    Dirichlet data phi at the surface, impermeable bottom below; matrix-free
    GMRES preconditioned by the exact flat-state solve per Fourier mode.
    Raises ConvergenceError if the relative residual cannot be brought to
    tol.
    """
    from scipy.sparse.linalg import LinearOperator, gmres

    grid = phi.grid
    if eta.grid != grid or b.grid != grid:
        raise ValueError("eta, b, phi must share a grid")
    sg = SigmaGrid(grid, mz)
    op = _SigmaOperator(sg, eta, b, delta, floor)

    ext = np.zeros((mz + 1, grid.size))
    ext[0] = phi.values
    rhs = -op.rows(ext)
    rhs_norm = float(np.linalg.norm(rhs))
    target = tol * (rhs_norm + 1e-30)

    shape = (mz * grid.size, mz * grid.size)

    def matvec(x):
        full = np.vstack([np.zeros((1, grid.size)), x.reshape(mz, grid.size)])
        return op.rows(full).ravel()

    def pre(x):
        return op.precondition(x.reshape(mz, grid.size)).ravel()

    a_op = LinearOperator(shape, matvec=matvec)
    m_op = LinearOperator(shape, matvec=pre)

    x = np.zeros(mz * grid.size)
    b_vec = rhs.ravel()
    iterations = 0
    residual = float(np.linalg.norm(b_vec - matvec(x)))
    restart = min(shape[0], 80)
    while residual > target and iterations < max_iter:
        budget = max_iter - iterations
        counter = [0]
        x, _ = gmres(
            a_op,
            b_vec,
            x0=x,
            M=m_op,
            rtol=0.0,
            atol=0.25 * target,
            restart=min(restart, budget),
            maxiter=max(1, math.ceil(budget / min(restart, budget))),
            callback=lambda _: counter.__setitem__(0, counter[0] + 1),
            callback_type="pr_norm",
        )
        iterations += max(counter[0], 1)
        residual = float(np.linalg.norm(b_vec - matvec(x)))

    rel = residual / (rhs_norm + 1e-30)
    converged = residual <= target
    if not converged:
        raise ConvergenceError(
            f"interior Laplace solve stalled at relative residual {rel:.3e} "
            f"after {iterations} iterations (tol {tol:.1e})"
        )
    psi = np.vstack([phi.values[None, :], x.reshape(mz, grid.size)])
    return LaplaceSolution(sg, psi, eta, b, delta, SolveReport(iterations, rel, converged))


def surface_normal_flux(sol: LaplaceSolution) -> Field:
    """Scaled conormal derivative at the surface,
    delta^-2 dPhi/dz - eta_x dPhi/dx, i.e. the Dirichlet-to-Neumann value
    of the surface data."""
    phys_x, phys_z = sol.gradients()
    etax = _dx(sol.eta.values, sol.sigma_grid.grid)
    flux = sol.delta ** -2 * phys_z[0] - etax * phys_x[0]
    return Field(sol.sigma_grid.grid, flux)


def hamiltonian_ww(
    eta: Field,
    b: Field,
    phi: Field,
    delta: float,
    g: float = 1.0,
    mz: int = 32,
    tol: float = 1e-11,
    max_iter: int = 400,
    floor: float = 0.1,
) -> float:
    """Full water-wave Hamiltonian: volume kinetic integral of the interior
    solve plus (g/2) integral of eta^2."""
    sol = solve_laplace(eta, b, phi, delta, mz=mz, tol=tol, max_iter=max_iter, floor=floor)
    phys_x, phys_z = sol.gradients()
    h = 1.0 + eta.values - b.values
    dens = phys_x ** 2 + delta ** -2 * phys_z ** 2
    column = sol.sigma_grid.weights @ dens  # integral over sigma, per x
    kin = 0.5 * float(phi.grid.spacing * np.sum(column * h))
    pot = 0.5 * g * integrate(eta * eta)
    return kin + pot


@dataclass(frozen=True)
class SweepConfig:
    """Inputs of the shallowness consistency sweep.

    The reference solve doubles its vertical resolution until its own
    refinement change is below ref_safety times the measured Hamiltonian
    difference; rows that never get there are reported but excluded from
    the fit, as is the largest shallowness value (pre-asymptotic).
    """

    grid: Grid
    exp: VerticalExpansion
    eta: Field
    b: Field
    phi: Field
    deltas: tuple[float, ...]
    g: float = 1.0
    floor: float = 0.1
    mz: int = 24
    mz_max: int = 192
    ik_tol: float = 1e-12
    ref_tol: float = 1e-11
    ref_safety: float = 0.01
    fit_min: float | None = None
    fit_max: float | None = None
    drop_largest: bool = True
    max_iter: int = 800


@dataclass(frozen=True)
class SweepRow:
    delta: float
    h_ww: float
    h_ik: float
    abs_diff: float
    ref_error_bound: float
    included: bool


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    slope: float
    intercept: float
    slope_stderr: float
    n_fit: int


def sweep_row(cfg: SweepConfig, delta: float) -> SweepRow:
    """Evaluate both Hamiltonians at one shallowness value, escalating the
    reference resolution until certified or capped."""
    geom = Geometry(cfg.grid, cfg.eta, cfg.b, delta, cfg.g, cfg.floor)
    h_ik = hamiltonian(geom, cfg.exp, cfg.phi, tol=cfg.ik_tol, max_iter=cfg.max_iter)

    def ref(m: int) -> float:
        return hamiltonian_ww(
            cfg.eta, cfg.b, cfg.phi, delta,
            g=cfg.g, mz=m, tol=cfg.ref_tol, max_iter=cfg.max_iter, floor=cfg.floor,
        )

    mz = cfg.mz
    coarse = ref(mz)
    fine = ref(2 * mz)
    bound = abs(fine - coarse)
    diff = abs(h_ik - fine)
    while bound > cfg.ref_safety * diff and 2 * mz < cfg.mz_max:
        mz *= 2
        coarse = fine
        fine = ref(2 * mz)
        bound = abs(fine - coarse)
        diff = abs(h_ik - fine)
    certified = bound <= cfg.ref_safety * diff
    return SweepRow(delta, fine, h_ik, diff, bound, certified)


def _fit(rows: list[SweepRow]) -> tuple[float, float, float, int]:
    pts = [(math.log(r.delta), math.log(r.abs_diff)) for r in rows if r.included and r.abs_diff > 0]
    n = len(pts)
    if n < 2:
        return float("nan"), float("nan"), float("nan"), n
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    if n > 2:
        resid = y - (slope * x + intercept)
        s2 = float(resid @ resid) / (n - 2)
        stderr = math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))
    else:
        stderr = float("nan")
    return float(slope), float(intercept), stderr, n


def consistency_sweep(cfg: SweepConfig, rows: list[SweepRow] | None = None) -> SweepResult:
    """Run the sweep (or fit precomputed rows) and fit the order of the
    Hamiltonian difference in the shallowness parameter."""
    if rows is None:
        rows = [sweep_row(cfg, d) for d in sorted(cfg.deltas, reverse=True)]
    largest = max(r.delta for r in rows)
    flagged = []
    for r in rows:
        inc = r.included
        if cfg.drop_largest and r.delta == largest:
            inc = False
        if cfg.fit_min is not None and r.delta < cfg.fit_min:
            inc = False
        if cfg.fit_max is not None and r.delta > cfg.fit_max:
            inc = False
        flagged.append(SweepRow(r.delta, r.h_ww, r.h_ik, r.abs_diff, r.ref_error_bound, inc))
    slope, intercept, stderr, n = _fit(flagged)
    return SweepResult(tuple(flagged), slope, intercept, stderr, n)

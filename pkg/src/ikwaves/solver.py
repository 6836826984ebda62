"""Constrained solves for the vertical-expansion coefficients.

Given canonical data, the coefficient fields are fixed by one pointwise
algebraic equation (the surface trace) and N elliptic compatibility
constraints.  Since the zeroth exponent vanishes, the trace equation is
solved for phi_0 exactly, and the remaining N coefficients satisfy a reduced
elliptic system handled matrix-free by preconditioned GMRES.

The preconditioner inverts the constant-coefficient (unit depth, flat
bottom) reduced operator per Fourier mode; it captures the delta^-2
stiffness of the vertical kinetic term exactly, so iteration counts stay
flat as the water becomes shallow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .grid import Field, Grid, norm
from .model import (
    Geometry,
    PotentialCoeffs,
    VerticalExpansion,
    apply_constraints,
    apply_constraints_array,
    constraint_depth_derivative,
    surface_vertical_velocity,
)

__all__ = [
    "SolveReport",
    "solve_coefficients",
    "reconstruct",
    "reconstruct_derivative",
    "system_residuals",
]


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one constrained solve.

    final_residual is relative to the tolerance scale of the constraint
    equations; converged is True only if it is at or below the requested
    tolerance, so a True report is an independently checkable certificate.
    """

    iterations: int
    final_residual: float
    converged: bool


def _stack_norm(grid: Grid, arr: np.ndarray) -> float:
    """Discrete L2 norm of a stacked (n, M) block of fields."""
    return float(np.sqrt(grid.spacing * np.sum(arr * arr)))


class FlatModePreconditioner:
    """Inverse of the reduced operator at unit depth and flat bottom,
    applied independently to every Fourier mode."""

    def __init__(self, grid: Grid, exp: VerticalExpansion, delta: float):
        p = np.array(exp.exps, dtype=float)
        n = exp.order
        k = grid.wavenumbers  # (Mr,)
        psum = p[:, None] + p[None, :]
        pprod = p[:, None] * p[None, :]
        grad_gram = 1.0 / (psum + 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            vert_gram = np.where(pprod > 0, pprod / (psum - 1.0), 0.0)
        # per-mode kinetic symbol, shape (Mr, N+1, N+1)
        sym = k[:, None, None] ** 2 * grad_gram + delta ** -2 * vert_gram
        # eliminate slot 0 against the trace equation (unit weights)
        red = (
            sym[:, 1:, 1:]
            - sym[:, :1, 1:]
            - sym[:, 1:, :1]
            + sym[:, :1, :1]
        )
        self._inv = np.linalg.inv(red) if n > 0 else np.zeros((k.size, 0, 0))
        self._size = grid.size

    def apply(self, arr: np.ndarray) -> np.ndarray:
        """Apply to a stacked (N, M) right-hand side."""
        ah = np.fft.rfft(arr, axis=1)
        out = np.einsum("mij,jm->im", self._inv, ah)
        return np.fft.irfft(out, n=self._size, axis=1)


def _embed(geom: Geometry, exp: VerticalExpansion, varr: np.ndarray) -> PotentialCoeffs:
    """Extend reduced unknowns (N, M) to a full coefficient vector whose
    surface trace vanishes."""
    p = exp.exps
    zero = -sum(geom.hpow(p[j]).values * varr[j - 1] for j in range(1, exp.ncoeffs))
    rows = [zero] + [varr[i] for i in range(exp.order)]
    return PotentialCoeffs.from_array(geom.grid, np.stack(rows))


def solve_coefficients(
    geom: Geometry,
    exp: VerticalExpansion,
    trace_rhs: Field,
    constraint_rhs: list[Field] | None = None,
    tol: float = 1e-10,
    max_iter: int = 500,
    warm_start: PotentialCoeffs | None = None,
) -> tuple[PotentialCoeffs, SolveReport]:
    """Solve the inhomogeneous trace/constraint system for the coefficients.

    The trace equation (surface weights dotted with the coefficients equals
    trace_rhs) is enforced exactly by eliminating the zeroth coefficient;
    the N compatibility constraints, with right-hand side constraint_rhs
    (zero if None), are solved by preconditioned GMRES to an absolute
    residual of tol * (|constraint_rhs| + 1) in the discrete L2 norm.

    Non-convergence is reported through the SolveReport, never raised.
    """
    grid = geom.grid
    n = exp.order
    if trace_rhs.grid != grid:
        raise ValueError("trace right-hand side must live on the geometry grid")
    if constraint_rhs is not None and len(constraint_rhs) != n:
        raise ValueError(f"expected {n} constraint fields, got {len(constraint_rhs)}")

    if n == 0:
        return PotentialCoeffs((trace_rhs,)), SolveReport(0, 0.0, True)

    f_arr = (
        np.zeros((n, grid.size))
        if constraint_rhs is None
        else np.stack([f.values for f in constraint_rhs])
    )
    f_norm = _stack_norm(grid, f_arr)
    target = tol * (f_norm + 1.0)

    # right-hand side of the reduced system
    inhom = np.vstack([trace_rhs.values[None, :], np.zeros((n, grid.size))])
    g_arr = f_arr - apply_constraints_array(geom, exp, inhom)

    size = n * grid.size
    trace_w = np.stack([geom.hpow(p).values for p in exp.exps[1:]])

    def matvec(x: np.ndarray) -> np.ndarray:
        v = x.reshape(n, grid.size)
        full = np.vstack([-(trace_w * v).sum(axis=0)[None, :], v])
        return apply_constraints_array(geom, exp, full).ravel()

    pre = FlatModePreconditioner(grid, exp, geom.delta)

    def apply_pre(x: np.ndarray) -> np.ndarray:
        return pre.apply(x.reshape(n, grid.size)).ravel()

    op = LinearOperator((size, size), matvec=matvec)
    pre_op = LinearOperator((size, size), matvec=apply_pre)

    x = np.zeros(size) if warm_start is None else warm_start.as_array()[1:].ravel()
    g_vec = g_arr.ravel()
    sqrt_h = math.sqrt(grid.spacing)
    iterations = 0
    residual = _stack_norm(grid, (g_vec - matvec(x)).reshape(n, grid.size))
    restart = min(size, 120)

    while residual > target and iterations < max_iter:
        budget = max_iter - iterations
        counter = [0]

        def count(_):
            counter[0] += 1

        x, _ = gmres(
            op,
            g_vec,
            x0=x,
            M=pre_op,
            rtol=0.0,
            atol=0.25 * target / sqrt_h,
            restart=min(restart, budget),
            maxiter=max(1, math.ceil(budget / min(restart, budget))),
            callback=count,
            callback_type="pr_norm",
        )
        iterations += max(counter[0], 1)
        residual = _stack_norm(grid, (g_vec - matvec(x)).reshape(n, grid.size))

    pv = _embed(geom, exp, x.reshape(n, grid.size))
    full = np.array(pv.as_array())
    full[0] += trace_rhs.values
    result = PotentialCoeffs.from_array(grid, full)
    rel = residual / (f_norm + 1.0)
    return result, SolveReport(iterations, rel, rel <= tol)


def reconstruct(
    geom: Geometry,
    exp: VerticalExpansion,
    phi: Field,
    tol: float = 1e-10,
    max_iter: int = 500,
    warm_start: PotentialCoeffs | None = None,
) -> tuple[PotentialCoeffs, SolveReport]:
    """Reconstruct the coefficient fields from the canonical surface trace.

    This is the linear reconstruction operator of the canonical formulation:
    the returned coefficients have surface trace phi and satisfy the
    compatibility constraints to tolerance, and they minimize the kinetic
    energy among all coefficient vectors with that trace.
    """
    return solve_coefficients(
        geom, exp, phi, None, tol=tol, max_iter=max_iter, warm_start=warm_start
    )


def reconstruct_derivative(
    geom: Geometry,
    exp: VerticalExpansion,
    pv: PotentialCoeffs,
    etadot: Field,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> tuple[PotentialCoeffs, SolveReport]:
    """Directional derivative of the reconstruction with respect to the
    surface elevation, in the direction etadot.

    pv must be the reconstruction for the same geometry; the derivative
    solves the same system with trace right-hand side
    -(vertical surface velocity) * etadot and constraint right-hand side
    given by minus the constraint linearization.
    """
    f0 = -(surface_vertical_velocity(geom, exp, pv) * etadot)
    fvec = [-f for f in constraint_depth_derivative(geom, exp, etadot, pv)]
    return solve_coefficients(geom, exp, f0, fvec, tol=tol, max_iter=max_iter)


def system_residuals(
    geom: Geometry,
    exp: VerticalExpansion,
    pv: PotentialCoeffs,
    trace_rhs: Field,
    constraint_rhs: list[Field] | None = None,
) -> tuple[float, float]:
    """Independent re-check of a solve: discrete L2 norms of the trace
    equation residual and of the constraint residual."""
    trace = geom.grid.zeros()
    for p, c in zip(exp.exps, pv):
        trace = trace + geom.hpow(p) * c
    res_trace = norm(trace - trace_rhs)
    rows = apply_constraints(geom, exp, pv)
    if constraint_rhs is not None:
        rows = [r - f for r, f in zip(rows, constraint_rhs)]
    if rows:
        arr = np.stack([r.values for r in rows])
        res_con = _stack_norm(geom.grid, arr)
    else:
        res_con = 0.0
    return res_trace, res_con

"""Built-in invariant suite: fast, deterministic checks of the numerical
identities the library is built on, runnable from the CLI.

Each check reports a measured residual and its threshold; the thresholds
match the ones enforced by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import deriv, inner, integrate, make_grid, norm
from .model import (
    Geometry,
    PotentialCoeffs,
    VerticalExpansion,
    apply_block,
    apply_constraints,
    apply_operator,
    surface_weights,
)
from .reference import dtn_flat, hamiltonian_ww
from .solver import reconstruct, solve_coefficients
from .energy import hamiltonian, total_energy

__all__ = ["CheckResult", "run_selftest"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.measured <= self.threshold


def run_selftest(size: int = 64, seed: int = 2024) -> list[CheckResult]:
    """Run the invariant suite on a small grid; returns one result per check."""
    rng = np.random.default_rng(seed)
    grid = make_grid(2 * np.pi, size)
    x = grid.nodes
    results: list[CheckResult] = []

    f = grid.field(np.sin(2 * x) + 0.5 * np.cos(3 * x))
    exact = grid.field(2 * np.cos(2 * x) - 1.5 * np.sin(3 * x))
    results.append(CheckResult("spectral-derivative", (deriv(f) - exact).max_abs(), 1e-12))

    u = grid.field(rng.standard_normal(size))
    v = grid.field(rng.standard_normal(size))
    results.append(
        CheckResult("derivative-skew-adjoint", abs(inner(deriv(u), v) + inner(u, deriv(v))), 1e-10)
    )

    exp = VerticalExpansion("H2", 2)
    eta = grid.field(0.1 * np.cos(x) + 0.05 * np.sin(2 * x))
    b = grid.field(0.1 * np.cos(x + 1.0))
    geom = Geometry(grid, eta, b, 0.35)
    smooth_u = grid.field(np.cos(2 * x) + 0.3 * np.sin(x))
    smooth_v = grid.field(np.sin(3 * x) + 0.2 * np.cos(x))
    worst = 0.0
    for i in range(exp.ncoeffs):
        for j in range(exp.ncoeffs):
            lhs = inner(apply_block(geom, exp, i, j, smooth_u), smooth_v)
            rhs = inner(smooth_u, apply_block(geom, exp, j, i, smooth_v))
            scale = max(abs(lhs), abs(rhs), 1.0)
            worst = max(worst, abs(lhs - rhs) / scale)
    results.append(CheckResult("operator-adjointness", worst, 1e-10))

    pv = PotentialCoeffs(tuple(grid.field(a) for a in 0.3 * rng.standard_normal((3, size))))
    e_direct = total_energy(geom, exp, pv)
    rows = apply_operator(geom, exp, pv)
    e_pairing = 0.5 * sum(inner(r, c) for r, c in zip(rows, pv))
    e_pairing += 0.5 * geom.g * integrate(eta * eta)
    results.append(
        CheckResult(
            "kinetic-energy-identity", abs(e_direct - e_pairing) / max(abs(e_direct), 1.0), 1e-10
        )
    )

    star = PotentialCoeffs(
        (
            grid.field(np.sin(x)),
            grid.field(0.3 * np.cos(2 * x)),
            grid.field(0.1 * np.sin(3 * x)),
        )
    )
    trace = grid.zeros()
    for w, c in zip(surface_weights(geom, exp), star):
        trace = trace + w * c
    con = apply_constraints(geom, exp, star)
    solved, _ = solve_coefficients(geom, exp, trace, con, tol=1e-11)
    err = max((solved[i] - star[i]).max_abs() for i in range(3))
    results.append(CheckResult("manufactured-solution", err, 1e-8))

    phi = grid.field(0.4 * np.cos(x - 1.3) + 0.2 * np.sin(2 * x))
    base, _ = reconstruct(geom, exp, phi, tol=1e-11)
    shifted, _ = reconstruct(geom, exp, phi + 2.0, tol=1e-11)
    gauge = max(
        (shifted[0] - base[0] - 2.0).max_abs(),
        max((shifted[i] - base[i]).max_abs() for i in range(1, 3)),
    )
    results.append(CheckResult("reconstruction-gauge", gauge, 1e-9))

    chi = grid.field(0.3 * np.sin(3 * x))
    combo, _ = reconstruct(geom, exp, phi * 2.0 + chi * -0.5, tol=1e-11)
    part, _ = reconstruct(geom, exp, chi, tol=1e-11)
    lin = max(
        (combo[i] - (base[i] * 2.0 + part[i] * -0.5)).max_abs() for i in range(3)
    )
    results.append(CheckResult("reconstruction-linearity", lin, 1e-9))

    rows = apply_operator(geom, exp, base)
    weights = surface_weights(geom, exp)
    flux_dev = max(norm(rows[i] - weights[i] * rows[0]) for i in range(1, 3))
    results.append(CheckResult("trace-flux-identity", flux_dev, 1e-8))

    gauge_h = abs(
        hamiltonian(geom, exp, phi + 3.0, tol=1e-11) - hamiltonian(geom, exp, phi, tol=1e-11)
    )
    results.append(CheckResult("hamiltonian-gauge", gauge_h, 1e-9))

    zero = grid.zeros()
    band = np.zeros(size)
    for k in range(1, 6):
        band += rng.standard_normal() * np.cos(k * x) + rng.standard_normal() * np.sin(k * x)
    phi_band = grid.field(0.2 * band)
    h_vol = hamiltonian_ww(zero, zero, phi_band, 0.3, mz=32, tol=1e-12)
    h_mult = 0.5 * inner(phi_band, dtn_flat(phi_band, 0.3))
    results.append(
        CheckResult(
            "dtn-volume-agreement", abs(h_vol - h_mult) / max(abs(h_vol), 1.0), 1e-9
        )
    )

    return results

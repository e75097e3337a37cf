"""Prototype Dirichlet problem for the p-Laplacian and the w/v normalization near y."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .energy import ROUNDOFF, PEnergy, SolverOptions, Stencil, minimize
from .geometry import (
    EXTERIOR,
    FIXED_ZERO,
    FREE,
    BoundaryPoint,
    DomainSpec,
    GeometryError,
    Grid,
    GridFunction,
    boundary_nodes,
    complement_mask,
)

# mask role for nodes held at the boundary datum
FIXED_DATUM = 4


@dataclass
class DirichletProblem:
    domain: DomainSpec
    g: Callable[[np.ndarray], np.ndarray]
    p: float
    grid: Grid
    y: BoundaryPoint | None = None
    opts: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.y is None:
            self.y = BoundaryPoint(tuple(float(c) for c in self.grid.center))

    def datum(self) -> np.ndarray:
        vals = np.asarray(self.g(self.grid.coords() - np.asarray(self.y.y)), dtype=float)
        vals = np.broadcast_to(vals, self.grid.counts).copy()
        if not np.all(np.isfinite(vals)):
            raise GeometryError("boundary datum not finite on the grid box")
        return vals


@dataclass
class SolveResult:
    u: GridFunction
    energy: float
    iterations: int
    residual: float
    range: tuple[float, float]
    energies: list = field(default_factory=list, repr=False)


def solve_p_laplace(prob: DirichletProblem, u0: np.ndarray | None = None) -> SolveResult:
    """Minimize the discrete p-energy with u = g on E^c nodes and on the box boundary."""
    grid = prob.grid
    ec = complement_mask(prob.domain, prob.y, grid)
    fixed = ec | grid.boundary_mask()
    g = prob.datum()
    mask = np.where(ec, EXTERIOR, np.where(fixed, FIXED_DATUM, FREE)).astype(np.int8)
    st = Stencil(grid.counts, grid.h)
    free = ~fixed
    psi = g.copy() if u0 is None else np.where(fixed, g, np.asarray(u0, dtype=float))
    if not free.any():
        E = PEnergy(st, prob.p, 0.0).value(psi, regularized=False)
        return SolveResult(GridFunction(grid, psi, mask), E, 0, 0.0, (psi.min(), psi.max()))
    eps0 = prob.opts.eps_schedule(grid.h)[0]
    grad0 = PEnergy(st, prob.p, eps0).value_and_grad(psi)[1]
    ref = np.linalg.norm(grad0[free])
    # a free-node gradient at roundoff relative to the boundary flux means the
    # initial guess is already discrete p-harmonic (e.g. affine data)
    if ref <= 1e3 * ROUNDOFF * np.linalg.norm(grad0):
        ref = 0.0
    iters = 0
    energies = []
    if ref > 0 and prob.p != 2.0:
        psi, info0 = minimize(st, 2.0, psi, free, SolverOptions(tol=1e-6, max_iters=5,
                                                                continuation_steps=0))
        iters += info0.iterations
    if ref > 0:
        psi, info = minimize(st, prob.p, psi, free, prob.opts, ref=ref)
        iters += info.iterations
        residual = info.residual
        energies = info.energies
    else:
        residual = 0.0
    E = PEnergy(st, prob.p, 0.0).value(psi, regularized=False)
    return SolveResult(GridFunction(grid, psi, mask), E, iters, residual,
                       (float(psi.min()), float(psi.max())), energies)


def _ball(grid: Grid, y: BoundaryPoint, rho: float) -> np.ndarray:
    return grid.radius(y.y) <= rho * (1 + 1e-12)


def measure_boundary_oscillation(u: GridFunction, domain: DomainSpec, y: BoundaryPoint,
                                 radii: Sequence[float]) -> list[float]:
    """max - min of u over the nodes of E within distance rho of y, for each rho."""
    e_nodes = ~complement_mask(domain, y, u.grid)
    out = []
    for rho in radii:
        sel = e_nodes & _ball(u.grid, y, rho)
        out.append(float(np.ptp(u.values[sel])) if sel.any() else 0.0)
    return out


def datum_oscillation(g_values: np.ndarray, domain: DomainSpec, y: BoundaryPoint, grid: Grid,
                      rho: float) -> float:
    """Oscillation of the datum over the rasterized ∂E inside B_rho(y)."""
    sel = boundary_nodes(complement_mask(domain, y, grid)) & _ball(grid, y, rho)
    return float(np.ptp(g_values[sel])) if sel.any() else 0.0


@dataclass
class NormalizedPair:
    w: GridFunction | None
    v: GridFunction | None
    quarter_osc: float
    short_circuit: float | None = None
    sign: int = 1
    u: GridFunction | None = None  # the solution actually normalized (sign applied)
    rho: float = 0.0

    def __post_init__(self):
        if (self.short_circuit is None) == (self.w is None):
            raise ValueError("exactly one of short_circuit and (w, v) must be set")


def normalize_near_boundary(u: GridFunction, domain: DomainSpec, y: BoundaryPoint, rho: float,
                            g: Callable[[np.ndarray], np.ndarray] | np.ndarray) -> NormalizedPair:
    """Rescale u near y into w in [0, 1] and v = 1 - w over B_2rho(y).

    Falls back to the short-circuit value 2 osc(g) when neither dichotomy
    inequality holds or u is constant on E ∩ B_2rho. If only the infimum
    inequality holds, u and g are negated first (valid for the |Du|^p
    prototype only).
    """
    grid = u.grid
    ec = complement_mask(domain, y, grid)
    ball2 = _ball(grid, y, 2 * rho)
    region = ~ec & ball2
    if not region.any():
        raise GeometryError("no E nodes in B_2rho(y)")
    gv = g if isinstance(g, np.ndarray) else np.broadcast_to(
        np.asarray(g(grid.coords() - np.asarray(y.y)), dtype=float), grid.counts)
    bnd = boundary_nodes(ec) & ball2
    if not bnd.any():
        raise GeometryError("no boundary nodes of E in B_2rho(y)")
    vals = u.values
    sup_u, inf_u = vals[region].max(), vals[region].min()
    osc = sup_u - inf_u
    sup_g, inf_g = gv[bnd].max(), gv[bnd].min()
    osc_g = float(sup_g - inf_g)
    if osc <= 0:
        return NormalizedPair(None, None, 0.0, short_circuit=2 * osc_g, rho=rho)
    q = osc / 4
    if sup_u - q > sup_g:
        sign = 1
    elif inf_u + q < inf_g:
        sign = -1
        vals = -vals
        sup_u = -inf_u
    else:
        return NormalizedPair(None, None, q, short_circuit=2 * osc_g, rho=rho)
    w = np.clip((vals - (sup_u - q)) / q, 0.0, None)
    w = np.where(ec, 0.0, w)
    # outside B_2rho the formula is not normalized; keep it inside [0, 1]
    w = np.where(ball2, w, np.minimum(w, 1.0))
    mask = np.where(ec, EXTERIOR, FREE).astype(np.int8)
    w_gf = GridFunction(grid, w, mask)
    v_gf = GridFunction(grid, 1.0 - w, mask)
    u_gf = GridFunction(grid, vals, u.mask)
    return NormalizedPair(w_gf, v_gf, q, None, sign, u_gf, rho)


__all__ = [
    "DirichletProblem", "FIXED_DATUM", "FIXED_ZERO", "NormalizedPair", "SolveResult",
    "datum_oscillation", "measure_boundary_oscillation", "normalize_near_boundary",
    "solve_p_laplace",
]

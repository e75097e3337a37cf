"""Empirical constants of the energy, Harnack and capacity inequalities.

Each check evaluates both sides of an inequality on concrete grid functions
and reports their quotient. Integrals use the same corner quadrature as the
discrete energy (see :mod:`wienergauge.energy`), so the checks are consistent
with the minimized functionals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .capacity import OUTER_RADIUS, estimate_capacity, transfer_outer_radius
from .energy import SolverOptions, Stencil
from .geometry import (
    BoundaryPoint,
    CutoffSpec,
    DomainSpec,
    GridFunction,
    boundary_nodes,
    complement_mask,
    rasterize_obstacle,
    standard_cutoff,
)

NEG_TOL = 1e-12


class EstimateError(ValueError):
    pass


@dataclass
class IneqReport:
    name: str
    lhs: float
    rhs: float
    ratio: float
    witness: str
    h: float
    flags: tuple = ()
    constant: float = float("nan")  # empirical constant implied by ratio
    tags: tuple = ("Q=1 instance",)

    HEADER = "name,lhs,rhs,ratio,witness,h,flags"

    def csv_row(self) -> str:
        return (f"{self.name},{self.lhs:.17g},{self.rhs:.17g},{self.ratio:.17g},"
                f"{self.witness},{self.h:.17g},{'|'.join(self.flags)}")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.ratio) and "degenerate" not in self.flags


def _quotient(lhs: float, rhs: float) -> tuple[float, tuple]:
    if rhs == 0:
        if lhs == 0:
            return 0.0, ("degenerate",)
        return math.inf, ("infinite",)
    return lhs / rhs, ()


def _corner_sum(u: np.ndarray, h: float, integrand: Callable, where: np.ndarray | None = None,
                extra: Sequence[np.ndarray] = ()) -> float:
    """sum_cells h^N 2^-N sum_corners integrand(|grad u|, *extra_at_corner).

    ``where`` restricts to corners whose node is selected. ``extra`` arrays
    are node fields sampled at the corner node; a second gradient can be
    obtained by passing ``("grad", field)`` tuples.
    """
    st = Stencil(u.shape, h)
    de = st.edge_diffs(u)
    total = 0.0
    extra_de = [st.edge_diffs(e[1]) if isinstance(e, tuple) else None for e in extra]
    for o in st.corners:
        node = tuple(slice(oj, oj + n - 1) for oj, n in zip(o, u.shape))
        g = np.sqrt(sum(de[k][st.edge_slice(o, k)] ** 2 for k in range(st.N)))
        args = []
        for e, d in zip(extra, extra_de):
            if d is None:
                args.append(e[node])
            else:
                args.append(np.sqrt(sum(d[k][st.edge_slice(o, k)] ** 2 for k in range(st.N))))
        vals = integrand(g, *args)
        if where is not None:
            vals = np.where(where[node], vals, 0.0)
        total += float(np.sum(vals))
    return total * st.cell_weight


def _point(c) -> str:
    # space separated so the witness stays a single CSV field
    return "(" + " ".join(f"{x:.12g}" for x in c) + ")"


def _ball(grid, y: BoundaryPoint, r: float) -> np.ndarray:
    return grid.radius(y.y) <= r * (1 + 1e-12)


def caccioppoli_ratio(u: GridFunction, domain: DomainSpec, y: BoundaryPoint, rho: float,
                      cutoffs: Sequence[CutoffSpec], h_shift: float = 0.0,
                      p: float = 2.0) -> IneqReport:
    """max over cutoffs of  sum |D(u+h)|^p phi^p  /  sum (u+h)^p |D phi|^p  on E."""
    if not cutoffs:
        raise EstimateError("no cutoff functions supplied")
    if h_shift < 0:
        raise EstimateError("h_shift must be non-negative")
    grid = u.grid
    ec = complement_mask(domain, y, grid)
    e_nodes = ~ec
    inball = _ball(grid, y, rho)
    vals = u.values
    if np.any(vals[e_nodes & inball] < -NEG_TOL):
        raise EstimateError("u is negative on E ∩ B_rho")
    bnd = boundary_nodes(ec) & inball
    if bnd.any() and np.max(np.abs(vals[bnd])) > 1e-9:
        raise EstimateError("u does not vanish on the rasterized boundary in B_rho")
    best = None
    for spec in cutoffs:
        if np.linalg.norm(np.asarray(spec.center) - np.asarray(y.y)) + spec.outer > rho * (1 + 1e-12):
            raise EstimateError(f"cutoff {spec} not supported in B_rho")
        phi = standard_cutoff(spec, grid).values
        lhs = _corner_sum(vals, grid.h, lambda g, ph: g ** p * ph ** p, e_nodes, (phi,))
        rhs = _corner_sum(vals, grid.h, lambda g, uu, dphi: (uu + h_shift) ** p * dphi ** p,
                          e_nodes, (vals, ("grad", phi)))
        ratio, flags = _quotient(lhs, rhs)
        cand = (ratio, lhs, rhs, flags, spec)
        if best is None or ratio > best[0]:
            best = cand
    ratio, lhs, rhs, flags, spec = best
    name = "eq23" if h_shift > 0 else "eq21"
    witness = f"cutoff(z={_point(spec.center)};r={spec.r:.6g};h_shift={h_shift:g})"
    return IneqReport(name, lhs, rhs, ratio, witness, grid.h, flags, constant=ratio)


def standard_cutoff_family(y: BoundaryPoint, rho: float, offcenter: Sequence[float] | None = None
                           ) -> list[CutoffSpec]:
    """Cutoffs with outer radii rho/2 and rho/4 about y, plus one off-centre."""
    N = y.N
    fam = [CutoffSpec(y.y, rho / 4), CutoffSpec(y.y, rho / 8)]
    if offcenter is None:
        offcenter = [0.0] * (N - 1) + [rho / 2]
    z = tuple(a + b for a, b in zip(y.y, offcenter))
    fam.append(CutoffSpec(z, rho / 8))
    return fam


def weak_harnack_ratio(v: GridFunction, y: BoundaryPoint, rho: float, eps: float) -> IneqReport:
    if not 0 < eps <= 1:
        raise EstimateError("eps must lie in (0, 1]")
    grid = v.grid
    if np.any(v.values[_ball(grid, y, 2 * rho)] < -NEG_TOL):
        raise EstimateError("v is negative on B_2rho")
    sel = _ball(grid, y, rho)
    vals = np.clip(v.values[sel], 0.0, None)
    lhs = float(np.mean(vals ** eps) ** (1 / eps))
    rhs = float(vals.min())
    ratio, flags = _quotient(lhs, rhs)
    return IneqReport("eq25", lhs, rhs, ratio, f"ball(rho={rho:g};eps={eps:g})", grid.h, flags,
                      constant=ratio)


def eq33_check(u: GridFunction, v: GridFunction, domain: DomainSpec, y: BoundaryPoint,
               rho: float, eps: float) -> IneqReport:
    """avg_{B_2rho} v^eps  against  ((sup_2rho u - sup_rho u) / (osc_2rho u / 4))^eps."""
    grid = u.grid
    e_nodes = ~complement_mask(domain, y, grid)
    b1 = e_nodes & _ball(grid, y, rho)
    b2 = e_nodes & _ball(grid, y, 2 * rho)
    lhs = float(np.mean(np.clip(v.values[_ball(grid, y, 2 * rho)], 0, None) ** eps))
    osc = float(np.ptp(u.values[b2])) if b2.any() else 0.0
    if osc == 0:
        return IneqReport("eq33", lhs, 0.0, 0.0, f"rho={rho:g}", grid.h, ("degenerate",), 0.0)
    drop = float(u.values[b2].max() - u.values[b1].max())
    rhs = (drop / (osc / 4)) ** eps
    ratio, flags = _quotient(lhs, rhs)
    const = ratio ** (1 / eps) if math.isfinite(ratio) else math.inf
    return IneqReport("eq33", lhs, rhs, ratio, f"rho={rho:g};eps={eps:g}", grid.h, flags, const)


def eq34_check(v: GridFunction, zeta: CutoffSpec, p: float, q: float,
               p_0: float = 1.0) -> IneqReport:
    """sum v^-q |Dv|^p zeta^p  against  sum v^(p-q) |D zeta|^p."""
    if not (p_0 <= q < p) or q <= 1:
        raise EstimateError(f"q={q} outside [p_0, p) = [{p_0}, {p})")
    grid = v.grid
    z = standard_cutoff(zeta, grid).values
    vals = v.values
    if np.any(vals[z > 0] <= 0):
        raise EstimateError("v must be positive on the support of zeta; shift it first")
    if np.any(vals < -NEG_TOL):
        raise EstimateError("v is negative")
    safe = np.where(z > 0, vals, 1.0)
    lhs = _corner_sum(vals, grid.h, lambda g, vv, zz: np.where(zz > 0, vv ** -q, 0.0) * g ** p * zz ** p,
                      None, (safe, z))
    rhs = _corner_sum(vals, grid.h, lambda g, vv, dz: np.clip(vv, 0, None) ** (p - q) * dz ** p,
                      None, (vals, ("grad", z)))
    ratio, flags = _quotient(lhs, rhs)
    witness = f"zeta(z={_point(zeta.center)};r={zeta.r:.6g};q={q:.6g})"
    return IneqReport("eq34", lhs, rhs, ratio, witness, grid.h, flags, constant=ratio)


def capacity_lower_bound_check(v: GridFunction, domain: DomainSpec, y: BoundaryPoint, rho: float,
                               p: float, eps: float, opts: SolverOptions | None = None) -> IneqReport:
    """c_p(E^c ∩ closed B_rho)  against  rho^-p sum_{B_2rho} v^eps."""
    grid = v.grid
    K = rasterize_obstacle(domain, y, rho, grid)
    rhs = rho ** -p * float(np.sum(np.clip(v.values[_ball(grid, y, 2 * rho)], 0, None) ** eps)) \
        * grid.h ** grid.N
    if not K.any():
        return IneqReport("cap_lb", 0.0, rhs, 0.0, f"rho={rho:g}", grid.h, (), 0.0)
    cap = estimate_capacity(K, p, grid, opts).value
    cap = transfer_outer_radius(cap, p, grid.N, grid.half_width, OUTER_RADIUS)
    ratio, flags = _quotient(cap, rhs)
    return IneqReport("cap_lb", cap, rhs, ratio, f"rho={rho:g};eps={eps:g}", grid.h, flags, ratio)


def level_family_ratio(v: GridFunction, domain: DomainSpec, y: BoundaryPoint, rho: float,
                       k: float, p: float = 2.0) -> IneqReport:
    """Energy ratio of the truncation (v - k)_- on the whole ball (E^c included)."""
    trunc = GridFunction(v.grid, np.clip(k - v.values, 0.0, None))
    everything = DomainSpec(domain.N, lambda X: np.zeros(X.shape[:-1], dtype=bool), "whole")
    rep = caccioppoli_ratio(trunc, everything, y, rho, standard_cutoff_family(y, rho), 0.0, p)
    rep.name = "eq32"
    rep.witness += f";k={k:g}"
    return rep


@dataclass
class SuiteResult:
    reports: list
    eps: float
    q: float
    gamma_hat: float = field(init=False)

    def __post_init__(self):
        consts = [r.constant for r in self.reports if r.finite]
        self.gamma_hat = max(consts) if consts else math.nan

    def to_csv(self) -> str:
        return "\n".join([IneqReport.HEADER] + [r.csv_row() for r in self.reports]) + "\n"

    def by_name(self, name: str) -> list:
        return [r for r in self.reports if r.name == name]

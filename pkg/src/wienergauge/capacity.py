"""Variational p-capacity of rasterized compact sets.

Capacities are condenser capacities: the potential is 1 on the obstacle and
0 outside the ball inscribed in the computational box. ``relative_capacity``
targets the outer ball B_2(y); when the grid uses a smaller outer ball the
result is carried over to B_2 with the series law for radial condensers
(see :func:`condenser_resistance`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .energy import ConvergenceError, MinimizeInfo, PEnergy, SolverOptions, Stencil, minimize
from .geometry import (
    BoundaryPoint,
    DomainSpec,
    Grid,
    GeometryError,
    make_grid,
    rasterize_obstacle,
)

OUTER_RADIUS = 2.0


class CapacityError(ValueError):
    pass


@dataclass
class CapacityResult:
    value: float
    per_level: list = field(default_factory=list)  # [(h, value), ...] coarse to fine
    extrapolated: float = float("nan")
    order_estimate: float = float("nan")
    iterations: int = 0
    residual: float = 0.0
    potential: np.ndarray | None = field(default=None, repr=False)
    energies: list = field(default_factory=list, repr=False)

    def record(self) -> str:
        return (f"{float(self.value)!r},{float(self.extrapolated)!r},"
                f"{float(self.order_estimate)!r},{len(self.per_level)},{int(self.iterations)},"
                f"{float(self.residual)!r}")

    RECORD_HEADER = "value,extrapolated,order,levels,iterations,residual"


def sphere_area(N: int) -> float:
    """Area of the unit (N-1)-sphere."""
    return 2 * math.pi ** (N / 2) / math.gamma(N / 2)


def _check_exponent(p: float, N: int):
    if not (1 < p <= N):
        raise CapacityError(f"exponent p={p} outside (1, {N}]")


def radial_condenser_capacity(p: float, N: int, a: float, b: float) -> float:
    """Capacity of the spherical condenser (closed B_a, B_b) by 1-D quadrature.

    The radial minimizer has flux |u'|^(p-1) r^(N-1) constant, so the capacity
    equals area * J^(1-p) with J = int_a^b r^(-(N-1)/(p-1)) dr.
    """
    _check_exponent(p, N)
    if not 0 < a < b:
        raise CapacityError(f"need 0 < a < b, got a={a}, b={b}")
    beta = (N - 1) / (p - 1)
    # integrate in log r so that small a stays well conditioned
    J, _ = integrate.quad(lambda s: math.exp((1 - beta) * s), math.log(a), math.log(b),
                          epsabs=0, epsrel=1e-13, limit=200)
    return sphere_area(N) * J ** (1 - p)


def radial_profile(p: float, N: int, a: float, b: float) -> Callable[[np.ndarray], np.ndarray]:
    """Capacitary potential of (B_a, B_b) as a function of radius, via quadrature."""
    _check_exponent(p, N)
    beta = (N - 1) / (p - 1)

    def tail(r):
        return integrate.quad(lambda s: math.exp((1 - beta) * s), math.log(r), math.log(b),
                              epsabs=0, epsrel=1e-12)[0]

    J = tail(a)

    def u(r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape)
        flat = r.ravel()
        res = out.ravel()
        for i, ri in enumerate(flat):
            res[i] = 1.0 if ri <= a else (0.0 if ri >= b else tail(ri) / J)
        return out

    return u


def condenser_resistance(p: float, N: int, a: float, b: float) -> float:
    """Closed form of cap(B_a, B_b)^(-1/(p-1)), additive over nested shells."""
    _check_exponent(p, N)
    area = sphere_area(N)
    alpha = (N - p) / (p - 1)
    x = math.log(b / a)
    # int_a^b r^(-alpha-1) dr, written with expm1 so p -> N joins the log case
    shell = x if alpha == 0 else a ** -alpha * -math.expm1(-alpha * x) / alpha
    return area ** (-1 / (p - 1)) * shell


def transfer_outer_radius(cap: float, p: float, N: int, R: float, R_target: float) -> float:
    """Map a capacity relative to B_R onto one relative to B_R_target (R <= R_target)."""
    if cap <= 0 or R == R_target:
        return cap
    res = cap ** (-1 / (p - 1)) + condenser_resistance(p, N, R, R_target)
    return res ** (-(p - 1))


def _outer_zero_mask(grid: Grid) -> np.ndarray:
    R = grid.half_width
    return (grid.radius() >= R * (1 - 1e-12)) | grid.boundary_mask()


def estimate_capacity(K: np.ndarray, p: float, grid: Grid,
                      opts: SolverOptions | None = None) -> CapacityResult:
    """Discrete condenser capacity of node set K relative to the inscribed ball."""
    opts = opts or SolverOptions()
    if not p > 1:
        raise CapacityError(f"exponent must exceed 1, got {p}")
    K = np.asarray(K, dtype=bool)
    if K.shape != grid.counts:
        raise CapacityError("node set does not match grid")
    zero = _outer_zero_mask(grid)
    if np.any(K & zero):
        raise CapacityError("obstacle touches the outer sphere")
    if not K.any():
        return CapacityResult(value=0.0, per_level=[], extrapolated=0.0)
    free = ~(K | zero)
    st = Stencil(grid.counts, grid.h)
    psi = K.astype(float)
    eps0 = opts.eps_schedule(grid.h)[0]
    ref = np.linalg.norm(PEnergy(st, p, eps0).value_and_grad(psi)[1][free])
    iters = 0
    if p != 2.0:
        # quadratic warm start: one Newton step solves it exactly
        psi, info0 = minimize(st, 2.0, psi, free, SolverOptions(tol=1e-6, max_iters=5,
                                                                continuation_steps=0))
        iters += info0.iterations
    psi, info = minimize(st, p, psi, free, opts, ref=ref)
    value = PEnergy(st, p, 0.0).value(psi, regularized=False)
    return CapacityResult(value=value, per_level=[(grid.h, value)], extrapolated=value,
                          iterations=iters + info.iterations, residual=info.residual,
                          potential=psi, energies=info.energies)


def richardson(levels: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Extrapolate ``value(h) = C + A h^q`` from ``(h, value)`` pairs.

    Three or more levels: q is fitted from the three finest levels, clamped to
    [0.5, 3]; if consecutive differences change sign the fit is meaningless and
    the finest value is returned with order nan. Two levels assume q = 1.
    """
    lv = sorted(levels, key=lambda t: -t[0])
    if len(lv) == 1:
        return lv[0][1], float("nan")
    if len(lv) == 2:
        (h1, v1), (h2, v2) = lv
        q = 1.0
    else:
        (h1, v1), (h2, v2), (h3, v3) = lv[-3:]
        d1, d2 = v2 - v1, v3 - v2
        if d1 == 0 or d2 == 0 or np.sign(d1) != np.sign(d2):
            return v3, float("nan")

        def f(q):
            return (h2 ** q - h3 ** q) / (h1 ** q - h2 ** q) - d2 / d1

        lo, hi = 0.5, 3.0
        if f(lo) * f(hi) > 0:
            q = lo if abs(f(lo)) < abs(f(hi)) else hi
        else:
            q = optimize.brentq(f, lo, hi, xtol=1e-12)
        h1, v1, h2, v2 = h2, v2, h3, v3
    A = (v1 - v2) / (h1 ** q - h2 ** q)
    return v2 - A * h2 ** q, q


def refine_capacity(obstacle: Callable[[Grid], np.ndarray], p: float, grids: Sequence[Grid],
                    opts: SolverOptions | None = None, extrapolate: bool = True) -> CapacityResult:
    """Capacity on a sequence of grids with Richardson extrapolation."""
    if not grids:
        raise CapacityError("no grids given")
    results = [estimate_capacity(obstacle(g), p, g, opts) for g in grids]
    levels = [(g.h, r.value) for g, r in zip(grids, results)]
    finest = min(range(len(grids)), key=lambda i: grids[i].h)
    best = results[finest]
    if extrapolate and len(levels) > 1:
        ext, q = richardson(levels)
    else:
        ext, q = best.value, float("nan")
    return CapacityResult(value=best.value, per_level=sorted(levels, key=lambda t: -t[0]),
                          extrapolated=max(ext, 0.0), order_estimate=q,
                          iterations=sum(r.iterations for r in results),
                          residual=max(r.residual for r in results), potential=best.potential)


def ball_capacity_study(p: float, N: int, a: float, b: float, hs: Sequence[float],
                        opts: SolverOptions | None = None) -> CapacityResult:
    """Capacity of the discrete condenser (closed B_a, B_b) over several spacings."""
    grids = [make_grid(N, 0.0, b, h, budget=None) for h in hs]
    return refine_capacity(lambda g: g.radius() <= a, p, grids, opts)


def relative_capacity(domain: DomainSpec, y: BoundaryPoint, rho: float, p: float, grid: Grid,
                      opts: SolverOptions | None = None) -> float:
    """delta_y(rho): capacity of E^c ∩ closed B_rho(y) relative to B_2(y), over rho^(N-p).

    The grid must be centred at y; its inscribed ball is the outer plate. A
    grid smaller than B_2 is transferred to B_2 by the radial series law.
    """
    res = relative_capacity_result(domain, y, rho, p, grid, opts)
    return res.value


def relative_capacity_result(domain, y, rho, p, grid, opts=None) -> CapacityResult:
    N = domain.N
    _check_exponent(p, N)
    if not 0 < rho < 1:
        raise CapacityError(f"rho={rho} outside (0, 1)")
    if not np.allclose(grid.center, y.y, atol=1e-12):
        raise CapacityError("grid must be centred at the boundary point")
    R = grid.half_width
    if R > OUTER_RADIUS + 1e-9 or rho >= R:
        raise CapacityError(f"outer radius {R} incompatible with rho={rho}")
    K = rasterize_obstacle(domain, y, rho, grid)
    res = estimate_capacity(K, p, grid, opts)
    scale = rho ** (N - p)
    conv = lambda c: transfer_outer_radius(c, p, N, R, OUTER_RADIUS) / scale
    res.value = conv(res.value)
    res.extrapolated = conv(res.extrapolated)
    res.per_level = [(h, conv(v)) for h, v in res.per_level]
    return res


@dataclass(frozen=True)
class GridPolicy:
    """How delta_profile picks a grid for each radius.

    ``nodes_across`` nodes span the diameter of B_rho (h = 2 rho / nodes_across);
    the outer plate is B_R with R = min(2, outer_factor * rho), transferred to
    B_2 afterwards. ``levels`` > 1 adds coarser spacings (factor 2) and
    extrapolates.
    """

    nodes_across: int = 16
    outer_factor: float = 8.0
    levels: int = 1
    budget: int = 2_200_000

    def __post_init__(self):
        if self.nodes_across < 8:
            raise ValueError("nodes_across must be >= 8")
        if self.outer_factor < 2:
            raise ValueError("outer_factor must be >= 2")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")

    @classmethod
    def for_dimension(cls, N: int, **kw) -> "GridPolicy":
        kw.setdefault("nodes_across", 16 if N == 2 else 8)
        return cls(**kw)

    def grids(self, N: int, y: BoundaryPoint, rho: float) -> list[Grid]:
        R = min(OUTER_RADIUS, self.outer_factor * rho)
        h = 2 * rho / self.nodes_across
        # snap h so the box half-width is an integer number of cells
        m = max(2, int(round(R / h)))
        h = R / m
        return [make_grid(N, y.y, R, h * 2 ** j, budget=self.budget)
                for j in reversed(range(self.levels))]


@dataclass
class DeltaProfile:
    entries: list  # [(t, delta)], strictly decreasing t
    p: float
    domain_label: str = ""
    grid_meta: list = field(default_factory=list)
    noise_floor: float = 0.0

    def __post_init__(self):
        ts = [t for t, _ in self.entries]
        if any(not (0 < t < 1) for t in ts):
            raise ValueError("profile radii must lie in (0, 1)")
        if any(t2 >= t1 for t1, t2 in zip(ts, ts[1:])):
            raise ValueError("profile radii must be strictly decreasing")
        if any(d < 0 for _, d in self.entries):
            raise ValueError("relative capacities must be non-negative")

    @property
    def t(self) -> np.ndarray:
        return np.array([t for t, _ in self.entries])

    @property
    def delta(self) -> np.ndarray:
        return np.array([d for _, d in self.entries])

    def to_csv(self) -> str:
        lines = ["t,delta"] + [f"{t:.17g},{d:.17g}" for t, d in self.entries]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, p: float, domain_label: str = "") -> "DeltaProfile":
        rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if rows[0].strip() != "t,delta":
            raise ValueError("expected header t,delta")
        entries = [tuple(float(x) for x in r.split(",")) for r in rows[1:]]
        return cls(entries, p, domain_label)


def delta_profile(domain: DomainSpec, y: BoundaryPoint, p: float, radii: Sequence[float],
                  policy: GridPolicy | None = None,
                  opts: SolverOptions | None = None) -> DeltaProfile:
    radii = [float(r) for r in radii]
    if any(r2 >= r1 for r1, r2 in zip(radii, radii[1:])):
        raise CapacityError("radii must be strictly decreasing")
    policy = policy or GridPolicy.for_dimension(domain.N)
    entries, meta = [], []
    floor = 0.0
    for rho in radii:
        grids = policy.grids(domain.N, y, rho)
        K_any = rasterize_obstacle(domain, y, rho, grids[-1]).any()
        if not K_any:
            entries.append((rho, 0.0))
            meta.append({"rho": rho, "h": grids[-1].h, "R": grids[-1].half_width, "nodes": 0})
            continue
        results = [relative_capacity_result(domain, y, rho, p, g, opts) for g in grids]
        levels = [(g.h, r.value) for g, r in zip(grids, results)]
        if len(levels) > 1:
            val, q = richardson(levels)
            val = max(val, 0.0)
        else:
            val, q = levels[0][1], float("nan")
        fine = results[-1]
        floor = max(floor, fine.residual * fine.value)
        entries.append((rho, val))
        meta.append({"rho": rho, "h": grids[-1].h, "R": grids[-1].half_width,
                     "nodes": int(rasterize_obstacle(domain, y, rho, grids[-1]).sum()),
                     "levels": levels, "order": q, "iterations": fine.iterations})
    return DeltaProfile(entries, p, domain.token(), meta, noise_floor=floor)


__all__ = [
    "CapacityError", "CapacityResult", "ConvergenceError", "DeltaProfile", "GridPolicy",
    "MinimizeInfo", "GeometryError", "ball_capacity_study", "condenser_resistance",
    "delta_profile", "estimate_capacity", "radial_condenser_capacity", "radial_profile",
    "refine_capacity", "relative_capacity", "relative_capacity_result", "richardson",
    "sphere_area", "transfer_outer_radius",
]

"""Domains, boundary points, Cartesian grids, obstacle rasterization and cutoffs.

Every computation is carried out with the boundary point translated to the
origin. A domain is described only through a predicate for its complement:
``complement(X)`` receives an ``(..., N)`` array of coordinates and returns a
boolean array, ``True`` meaning the point belongs to ``E^c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Callable

import numpy as np

DEFAULT_NODE_BUDGET = 2_200_000

# per-node roles of a GridFunction mask
FREE, FIXED_ONE, FIXED_ZERO, EXTERIOR = 0, 1, 2, 3


class GeometryError(ValueError):
    pass


class BudgetExceeded(GeometryError):
    def __init__(self, required: int, budget: int):
        super().__init__(f"grid needs {required} nodes, budget is {budget}")
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class Grid:
    N: int
    origin: tuple[float, ...]
    h: float
    counts: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return math.prod(self.counts)

    @property
    def center(self) -> np.ndarray:
        return np.array([o + (n // 2) * self.h for o, n in zip(self.origin, self.counts)])

    @property
    def half_width(self) -> float:
        return (self.counts[0] // 2) * self.h

    def axes(self) -> list[np.ndarray]:
        return [o + np.arange(n) * self.h for o, n in zip(self.origin, self.counts)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``counts + (N,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def radius(self, center=None) -> np.ndarray:
        c = self.center if center is None else np.asarray(center, dtype=float)
        return np.linalg.norm(self.coords() - c, axis=-1)

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.counts, dtype=bool)
        for k in range(self.N):
            idx = [slice(None)] * self.N
            idx[k] = 0
            m[tuple(idx)] = True
            idx[k] = -1
            m[tuple(idx)] = True
        return m

    def refined(self) -> "Grid":
        return make_grid(self.N, self.center, self.half_width, self.h / 2,
                         budget=None)


def make_grid(N: int, center, half_width: float, h: float,
              budget: int | None = DEFAULT_NODE_BUDGET) -> Grid:
    """Uniform grid over the closed box ``center ± half_width``.

    The per-axis node count is odd so that ``center`` is a node. ``half_width``
    is rounded to the nearest multiple of ``h``.
    """
    if N not in (2, 3):
        raise GeometryError(f"dimension must be 2 or 3, got {N}")
    if not h > 0:
        raise GeometryError("spacing h must be positive")
    if half_width < 2 * h:
        raise GeometryError(f"half_width {half_width} < 2h = {2 * h}")
    c = np.broadcast_to(np.asarray(center, dtype=float), (N,))
    m = int(round(half_width / h))
    n = 2 * m + 1
    required = n ** N
    if budget is not None and required > budget:
        raise BudgetExceeded(required, budget)
    origin = tuple(float(ci - m * h) for ci in c)
    return Grid(N=N, origin=origin, h=float(h), counts=(n,) * N)


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.counts:
            raise GeometryError("values do not match grid shape")
        if self.mask is None:
            self.mask = np.full(self.grid.counts, FREE, dtype=np.int8)
        live = self.mask != EXTERIOR
        if not np.all(np.isfinite(self.values[live])):
            raise GeometryError("non-finite value at a non-exterior node")

    # binary layout: int64 N, int64 counts[N], float64 origin[N], float64 h, then
    # float64 values in row-major order; everything little-endian
    def to_bytes(self) -> bytes:
        g = self.grid
        head = np.array([g.N, *g.counts], dtype="<i8").tobytes()
        head += np.array([*g.origin, g.h], dtype="<f8").tobytes()
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFunction":
        N = int(np.frombuffer(data, "<i8", 1)[0])
        if N not in (2, 3):
            raise GeometryError(f"bad dimension {N} in header")
        counts = tuple(int(c) for c in np.frombuffer(data, "<i8", N, 8))
        off = 8 * (1 + N)
        fl = np.frombuffer(data, "<f8", N + 1, off)
        off += 8 * (N + 1)
        n = int(np.prod(counts))
        if len(data) != off + 8 * n:
            raise GeometryError("truncated or oversized grid function payload")
        vals = np.frombuffer(data, "<f8", n, off).reshape(counts).astype(float)
        grid = Grid(N, tuple(float(o) for o in fl[:N]), float(fl[N]), counts)
        return cls(grid, vals)

    def to_csv(self, max_nodes: int = 200_000) -> str:
        if self.grid.size > max_nodes:
            raise GeometryError(f"grid has {self.grid.size} nodes; CSV export capped at {max_nodes}")
        X = self.grid.coords().reshape(-1, self.grid.N)
        cols = ",".join(f"x{i + 1}" for i in range(self.grid.N))
        rows = [f"{cols},value"]
        for x, v in zip(X, self.values.reshape(-1)):
            rows.append(",".join(f"{c:.17g}" for c in x) + f",{v:.17g}")
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class DomainSpec:
    N: int
    complement: Callable[[np.ndarray], np.ndarray]
    name: str
    params: dict = field(default_factory=dict)

    def in_complement(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(np.asarray(self.complement(X), dtype=bool), X.shape[:-1])

    def token(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ":".join(repr(float(v)) for v in self.params.values())


@dataclass(frozen=True)
class BoundaryPoint:
    y: tuple[float, ...]

    @property
    def N(self) -> int:
        return len(self.y)

    def check(self, domain: DomainSpec, h: float) -> bool:
        """True if the complement predicate changes value within distance ``2h`` of y."""
        if self.N != domain.N:
            return False
        y = np.asarray(self.y, dtype=float)
        offs = np.stack(np.meshgrid(*[np.array([-2, -1, 0, 1, 2]) * h] * self.N,
                                    indexing="ij"), axis=-1).reshape(-1, self.N)
        vals = domain.in_complement(y + offs)
        return bool(vals.any() and not vals.all())


@dataclass(frozen=True)
class CutoffSpec:
    center: tuple[float, ...]
    r: float

    @property
    def outer(self) -> float:
        return 2 * self.r


def origin_point(N: int) -> BoundaryPoint:
    return BoundaryPoint(tuple(0.0 for _ in range(N)))


def _check_inside(grid: Grid, center, radius: float, what: str):
    c = np.asarray(center, dtype=float)
    lo = np.asarray(grid.origin)
    hi = lo + (np.asarray(grid.counts) - 1) * grid.h
    if np.any(c - radius < lo - 1e-12) or np.any(c + radius > hi + 1e-12):
        raise GeometryError(f"{what} of radius {radius} about {tuple(c)} leaves the grid box")


def rasterize_obstacle(domain: DomainSpec, y: BoundaryPoint, rho: float, grid: Grid) -> np.ndarray:
    """Boolean node mask of ``E^c ∩ closed ball(y, rho)``."""
    if grid.size == 0:
        raise GeometryError("empty grid")
    _check_inside(grid, y.y, rho, "ball")
    X = grid.coords()
    y_arr = np.asarray(y.y, dtype=float)
    inball = np.linalg.norm(X - y_arr, axis=-1) <= rho
    # the predicate is always posed relative to the boundary point
    return inball & domain.in_complement(X - y_arr)


def complement_mask(domain: DomainSpec, y: BoundaryPoint, grid: Grid) -> np.ndarray:
    X = grid.coords() - np.asarray(y.y, dtype=float)
    return domain.in_complement(X)


def boundary_nodes(ec: np.ndarray) -> np.ndarray:
    """E^c nodes with at least one axis neighbour in E: the rasterized ∂E."""
    out = np.zeros_like(ec)
    N = ec.ndim
    for k in range(N):
        lo = [slice(None)] * N
        hi = [slice(None)] * N
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        out[lo] |= ec[lo] & ~ec[hi]
        out[hi] |= ec[hi] & ~ec[lo]
    return out


def standard_cutoff(spec: CutoffSpec, grid: Grid) -> GridFunction:
    """1 on B_r(z), linear radial ramp down to 0 at 2r."""
    if 2 * spec.r < 2 * grid.h:
        raise GeometryError(f"cutoff radius {spec.r} unresolvable at h = {grid.h}")
    _check_inside(grid, spec.center, spec.outer, "cutoff support")
    d = grid.radius(spec.center)
    vals = np.clip((spec.outer - d) / spec.r, 0.0, 1.0)
    return GridFunction(grid, vals)


# ---------------------------------------------------------------- gallery

def _full_ball(N):
    return DomainSpec(N, lambda X: np.ones(X.shape[:-1], dtype=bool), "full_ball")


def _empty(N):
    return DomainSpec(N, lambda X: np.zeros(X.shape[:-1], dtype=bool), "empty")


def _cone(N, theta):
    if not 0 < theta <= math.pi:
        raise GeometryError("cone aperture must lie in (0, pi]")
    c = math.cos(theta)

    def pred(X):
        # axis along -e_N; cone(pi/2) is the half-space {x_N <= 0}
        r = np.linalg.norm(X, axis=-1)
        return -X[..., -1] >= r * c - 1e-12 * r

    return DomainSpec(N, pred, "cone", {"theta": theta})


def _half_space(N):
    d = _cone(N, math.pi / 2)
    return DomainSpec(N, d.complement, "half_space")


def _slit(N):
    def pred(X):
        return (np.abs(X[..., -1]) <= 1e-12) & (X[..., 0] <= 1e-12)

    return DomainSpec(N, pred, "slit")


def _point(N):
    def pred(X):
        return np.all(np.abs(X) <= 1e-12, axis=-1)

    return DomainSpec(N, pred, "point")


def _spine(N, c):
    if N != 3:
        raise GeometryError("spine is defined in N = 3 only")
    if not c > 0:
        raise GeometryError("spine constant must be positive")

    def pred(X):
        x1 = X[..., 0]
        r = np.hypot(X[..., 1], X[..., 2])
        with np.errstate(divide="ignore", over="ignore"):
            prof = np.where(x1 > 0, np.exp(-c / np.where(x1 > 0, x1, 1.0)), -1.0)
        return (x1 > 0) & (r <= prof)

    return DomainSpec(3, pred, "spine", {"c": c})


def _square_minus_segment(N):
    if N != 2:
        raise GeometryError("square_minus_segment is defined in N = 2 only")

    def pred(X):
        outside = np.max(np.abs(X), axis=-1) >= 1.0
        seg = (np.abs(X[..., 1]) <= 1e-12) & (X[..., 0] >= -1e-12) & (X[..., 0] <= 0.5 + 1e-12)
        return outside | seg

    return DomainSpec(2, pred, "square_minus_segment")


# name -> (builder, number of parameters, default parameters, default dimension)
_GALLERY = {
    "full_ball": (_full_ball, 0, (), 3),
    "empty": (_empty, 0, (), 2),
    "half_space": (_half_space, 0, (), 2),
    "cone": (_cone, 1, (math.pi / 4,), 3),
    "slit": (_slit, 0, (), 2),
    "point": (_point, 0, (), 2),
    "spine": (_spine, 1, (1.0,), 3),
    "square_minus_segment": (_square_minus_segment, 0, (), 2),
}

GALLERY_NAMES = tuple(_GALLERY)


def parse_token(token: str) -> tuple[str, tuple[float, ...]]:
    """Split ``name`` or ``name:param[:param]`` with exact decimal parsing."""
    name, *raw = token.strip().split(":")
    params = []
    for r in raw:
        try:
            d = Decimal(r)
        except InvalidOperation:
            raise GeometryError(f"malformed parameter {r!r} in {token!r}") from None
        if not d.is_finite():
            raise GeometryError(f"non-finite parameter in {token!r}")
        params.append(float(d))
    return name, tuple(params)


def gallery(token: str, N: int | None = None) -> DomainSpec:
    name, params = parse_token(token)
    if name not in _GALLERY:
        raise GeometryError(f"unknown domain {name!r}; valid names: {', '.join(GALLERY_NAMES)}")
    build, nparams, defaults, default_N = _GALLERY[name]
    if len(params) > nparams:
        raise GeometryError(f"{name} takes {nparams} parameter(s)")
    params = params + defaults[len(params):]
    return build(default_N if N is None else N, *params)

"""End-to-end runs: inequality suite on a solved problem, the oscillation
modulus, and the model-domain gallery."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .calibration import Calibration, ModulusSequence, calibrate, oscillation_recursion
from .capacity import DeltaProfile, GridPolicy, delta_profile
from .energy import SolverOptions
from .estimates import (
    IneqReport,
    SuiteResult,
    caccioppoli_ratio,
    capacity_lower_bound_check,
    eq33_check,
    eq34_check,
    level_family_ratio,
    standard_cutoff_family,
    weak_harnack_ratio,
)
from .geometry import CutoffSpec, DomainSpec, GridFunction, gallery, make_grid, origin_point
from .solver import (
    DirichletProblem,
    NormalizedPair,
    SolveResult,
    datum_oscillation,
    measure_boundary_oscillation,
    normalize_near_boundary,
    solve_p_laplace,
)
from .wiener import WienerReport, wiener_integral, wiener_report

BOX_HALF_WIDTH = 2.0


def ramp_datum(r0: float) -> Callable[[np.ndarray], np.ndarray]:
    """g(x) = max(0, |x| - r0): vanishes on B_r0, grows linearly outside."""
    def g(X):
        return np.maximum(0.0, np.linalg.norm(X, axis=-1) - r0)
    return g


def worker_count() -> int:
    """Workers allowed by WIENERGAUGE_THREADS (default 1)."""
    raw = os.environ.get("WIENERGAUGE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"WIENERGAUGE_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(n, os.cpu_count() or 1))


@dataclass
class SuiteConfig:
    rho_caccioppoli: float = 0.25
    rho_normalize: float = 0.125
    h_shifts: tuple = (0.01, 0.1, 1.0)
    levels_k: tuple = (0.25, 0.5, 0.75)
    eps_harnack: float = 0.5
    v_shift: float = 0.1


@dataclass
class SuiteRun:
    suite: SuiteResult
    caccioppoli: IneqReport
    shifted: list
    calibration: Calibration
    eps: float
    solve: SolveResult
    pair: NormalizedPair
    level_family: list = field(default_factory=list)

    @property
    def h(self) -> float:
        return self.solve.u.grid.h

    def shift_spread(self) -> float:
        """Largest shifted ratio relative to the unshifted one."""
        base = self.caccioppoli.ratio
        return max(r.ratio for r in self.shifted) / base if base > 0 else math.nan


def run_suite(domain: DomainSpec, p: float, h: float, g: Callable | None = None,
              cfg: SuiteConfig | None = None, opts: SolverOptions | None = None) -> SuiteRun:
    cfg = cfg or SuiteConfig()
    opts = opts or SolverOptions()
    y = origin_point(domain.N)
    g = g or ramp_datum(cfg.rho_caccioppoli)
    grid = make_grid(domain.N, y.y, BOX_HALF_WIDTH, h)
    sol = solve_p_laplace(DirichletProblem(domain, g, p, grid, y, opts))
    u = sol.u
    rc = cfg.rho_caccioppoli
    fam = standard_cutoff_family(y, rc)
    cac = caccioppoli_ratio(u, domain, y, rc, fam, 0.0, p)
    shifted = [caccioppoli_ratio(u, domain, y, rc, fam, s, p) for s in cfg.h_shifts]
    cal = calibrate(cac.ratio, p, eps_harnack=cfg.eps_harnack)
    eps = cal.eps_eff
    reports = [cac, *shifted]
    rho = cfg.rho_normalize
    pair = normalize_near_boundary(u, domain, y, rho, g)
    levels = []
    if pair.short_circuit is None:
        reports.append(weak_harnack_ratio(pair.v, y, rho, eps))
        reports.append(eq33_check(pair.u, pair.v, domain, y, rho, eps))
        shifted_v = GridFunction(grid, pair.v.values + cfg.v_shift, pair.v.mask)
        reports.append(eq34_check(shifted_v, CutoffSpec(y.y, rho), p, p - cal.eps_cap, cal.p_0))
        reports.append(capacity_lower_bound_check(pair.v, domain, y, rho, p, eps, opts))
        # cutoffs reaching out to 2 rho, where w > 0 can occur
        levels = [level_family_ratio(pair.v, domain, y, 4 * rho, k, p) for k in cfg.levels_k]
        reports.extend(levels)
    return SuiteRun(SuiteResult(reports, eps, p - cal.eps_cap), cac, shifted, cal, eps, sol,
                    pair, levels)


@dataclass
class ModulusCheck:
    """Measured oscillation of a solution against the closed-form bound."""
    radii: list
    osc: list
    bound: list
    I: list
    osc_g: list
    osc_B1: float
    gamma: float
    eps: float
    profile: DeltaProfile

    HEADER = "rho,osc,bound,I,osc_g"

    def holds(self) -> list[bool]:
        return [o <= b for o, b in zip(self.osc, self.bound)]

    def to_csv(self) -> str:
        rows = [self.HEADER]
        for r in zip(self.radii, self.osc, self.bound, self.I, self.osc_g):
            rows.append(",".join(f"{x:.17g}" for x in r))
        return "\n".join(rows) + "\n"


def modulus_check(domain: DomainSpec, p: float, u: GridFunction, g: Callable,
                  radii: Sequence[float], gamma: float, eps: float,
                  profile_radii: Sequence[float] | None = None,
                  policy: GridPolicy | None = None,
                  opts: SolverOptions | None = None) -> ModulusCheck:
    """Compare osc_{E ∩ B_rho} u with gamma max(osc_g(rho), osc_{E ∩ B_1} u exp(-I(rho))).

    ``gamma`` is used as given (no lower bound is imposed). The capacity
    profile is sampled on ``profile_radii`` (default: the dyadic radii from
    1/2 down to min(radii)).
    """
    y = origin_point(domain.N)
    radii = [float(r) for r in radii]
    if profile_radii is None:
        n = int(round(-math.log2(min(radii))))
        profile_radii = [2.0 ** -k for k in range(1, n + 1)]
    profile = delta_profile(domain, y, p, profile_radii, policy, opts)
    osc = measure_boundary_oscillation(u, domain, y, radii)
    osc_B1 = measure_boundary_oscillation(u, domain, y, [1.0])[0]
    gv = np.asarray(g(u.grid.coords() - np.asarray(y.y)), dtype=float)
    osc_g = [datum_oscillation(gv, domain, y, u.grid, r) for r in radii]
    I = [wiener_integral(profile, eps, r) for r in radii]
    bound = [gamma * max(og, osc_B1 * math.exp(-Ii)) for og, Ii in zip(osc_g, I)]
    return ModulusCheck(radii, osc, bound, I, osc_g, osc_B1, gamma, eps, profile)


def modulus_sequence(domain: DomainSpec, p: float, levels: int, gamma: float, eps: float,
                     osc_0: float = 1.0, osc_g: float = 0.0, rho_0: float = 0.5,
                     policy: GridPolicy | None = None,
                     opts: SolverOptions | None = None) -> tuple[ModulusSequence, DeltaProfile]:
    """Relative capacities at rho_0 2^-n, n < levels, fed through the dyadic recursion."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    y = origin_point(domain.N)
    radii = [rho_0 * 2.0 ** -n for n in range(levels)]
    profile = delta_profile(domain, y, p, radii, policy, opts)
    seq = oscillation_recursion(list(profile.delta), gamma, eps, osc_0, osc_g, rho_0)
    return seq, profile


@dataclass(frozen=True)
class GalleryEntry:
    token: str
    N: int
    p: float
    eps: float
    levels: int = 5  # radii 2^-1 ... 2^-levels


# fixed manifest: every 2-D entry plus the 3-D ball and cone
GALLERY_MANIFEST = (
    GalleryEntry("half_space", 2, 2.0, 0.5),
    GalleryEntry("slit", 2, 2.0, 0.5),
    GalleryEntry("slit", 2, 1.5, 0.5),
    GalleryEntry("point", 2, 2.0, 0.5),
    GalleryEntry("empty", 2, 2.0, 0.5),
    GalleryEntry("full_ball", 3, 2.0, 0.5),
    GalleryEntry("cone:0.7853981634", 3, 2.0, 0.5),
)

GALLERY_HEADER = "domain,p,eps,rho_min,I,ziemer,growth_class"


@dataclass
class GalleryRow:
    entry: GalleryEntry
    report: WienerReport
    profile: DeltaProfile

    def csv_row(self) -> str:
        r = self.report
        return (f"{self.entry.token},{self.entry.p:.17g},{self.entry.eps:.17g},{r.rho:.17g},"
                f"{r.I:.17g},{r.ziemer:.17g},{r.growth_class}")


def run_gallery_entry(entry: GalleryEntry, opts: SolverOptions | None = None) -> GalleryRow:
    dom = gallery(entry.token, entry.N)
    radii = [2.0 ** -k for k in range(1, entry.levels + 1)]
    prof = delta_profile(dom, origin_point(entry.N), entry.p, radii, None, opts)
    return GalleryRow(entry, wiener_report(prof, entry.eps, radii), prof)


def run_gallery(manifest: Sequence[GalleryEntry] = GALLERY_MANIFEST,
                opts: SolverOptions | None = None, workers: int | None = None) -> list[GalleryRow]:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(manifest) <= 1:
        return [run_gallery_entry(e, opts) for e in manifest]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run_gallery_entry, manifest, [opts] * len(manifest)))

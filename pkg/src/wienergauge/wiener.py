"""Wiener-type integrals of a sampled relative-capacity profile.

Both integrals are taken in the variable s = ln t with the trapezoid rule
on the profile's own nodes, so any integrand that is constant in t is
integrated exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .capacity import DeltaProfile

GROWTH_CLASSES = ("bounded", "log", "loglog", "indeterminate")
# residual below which a divergent fit overrides the flat-tail test
TIGHT_FIT = 0.05


class ProfileError(ValueError):
    pass


def _integrate(profile: DeltaProfile, integrand: Callable[[np.ndarray], np.ndarray],
               rho: float, upper: float = 1.0, extrapolate: bool = False) -> float:
    if not 0 < rho <= 1 or not 0 < upper <= 1:
        raise ProfileError("integration limits must lie in (0, 1]")
    if rho >= upper:
        return 0.0
    t = profile.t
    if t.size < 2:
        raise ProfileError("profile needs at least two entries")
    if rho < t[-1] * (1 - 1e-12) and not extrapolate:
        raise ProfileError(f"rho={rho} lies below the profile range (min t = {t[-1]})")
    f = integrand(profile.delta)
    s = np.log(t)[::-1]  # ascending
    f = f[::-1]
    # constant continuation of the outermost sample up to t = 1
    if s[-1] < 0.0:
        s = np.append(s, 0.0)
        f = np.append(f, f[-1])
    if extrapolate and s[0] > math.log(rho):
        s = np.insert(s, 0, math.log(rho))
        f = np.insert(f, 0, f[0])
    a, b = math.log(rho), math.log(upper)
    fa = float(np.interp(a, s, f))
    fb = float(np.interp(b, s, f))
    inner = (s > a) & (s < b)
    ss = np.concatenate(([a], s[inner], [b]))
    ff = np.concatenate(([fa], f[inner], [fb]))
    return float(np.sum(0.5 * (ff[1:] + ff[:-1]) * np.diff(ss)))


def _floored(profile: DeltaProfile, delta: np.ndarray) -> np.ndarray:
    return np.where(delta <= profile.noise_floor, 0.0, delta)


def wiener_integral(profile: DeltaProfile, eps: float, rho: float, *, upper: float = 1.0,
                    extrapolate: bool = False) -> float:
    """int_rho^upper delta(t)^(1/eps) dt/t."""
    if not 0 < eps <= 1:
        raise ProfileError(f"eps={eps} outside (0, 1]")

    def f(d):
        if eps < 1:
            d = _floored(profile, d)
        return d ** (1 / eps)

    return _integrate(profile, f, rho, upper, extrapolate)


def ziemer_integral(profile: DeltaProfile, p: float, rho: float, *, upper: float = 1.0,
                    extrapolate: bool = False) -> float:
    """int_rho^upper exp(-delta(t)^(-1/(p-1))) dt/t, integrand 0 where delta = 0."""
    if not p > 1:
        raise ProfileError("p must exceed 1")

    def f(d):
        d = _floored(profile, d)
        out = np.zeros_like(d)
        pos = d > 0
        out[pos] = np.exp(-d[pos] ** (-1 / (p - 1)))
        return out

    return _integrate(profile, f, rho, upper, extrapolate)


def _relative_residual(y: np.ndarray, fit: np.ndarray) -> float:
    spread = np.sqrt(np.mean((y - y.mean()) ** 2))
    if spread == 0:
        return 0.0
    return float(np.sqrt(np.mean((y - fit) ** 2)) / spread)


def fit_growth(rhos: Sequence[float], values: Sequence[float]) -> tuple[str, float]:
    """Classify samples of I(rho) as bounded, log, loglog or indeterminate.

    I is fitted by a + b*ln(1/rho) and by a + b*ln(ln(1/rho)) with b > 0. A
    fit with relative residual below TIGHT_FIT wins outright. Otherwise the
    samples count as ``bounded`` when I changes by less than 5% over the last
    decade of rho, and failing that the better fit wins if its residual is
    below 0.2.
    """
    rho = np.asarray(rhos, dtype=float)
    I = np.asarray(values, dtype=float)
    if rho.size < 4:
        raise ProfileError("need at least 4 radii")
    if np.any(np.diff(rho) >= 0):
        raise ProfileError("radii must be strictly decreasing")
    if rho[0] / rho[-1] < 4 * (1 - 1e-12):
        raise ProfileError("radii must span at least two dyadic steps")
    if rho[0] >= 1:
        raise ProfileError("radii must lie below 1")
    if I.max() <= 0:
        return "bounded", 0.0
    L = np.log(1 / rho)
    best = ("indeterminate", math.inf)
    for name, x in (("log", L), ("loglog", np.log(L))):
        A = np.stack([np.ones_like(x), x], axis=1)
        coef, *_ = np.linalg.lstsq(A, I, rcond=None)
        if coef[1] <= 0:
            continue
        res = _relative_residual(I, A @ coef)
        if res < best[1]:
            best = (name, res)
    if best[1] < TIGHT_FIT:
        return best[0], float(best[1])
    decade = rho <= 10 * rho[-1]
    i0 = int(np.argmax(decade))
    if i0 == rho.size - 1:
        i0 -= 1
    variation = (I[-1] - I[i0]) / max(abs(I[-1]), 1e-300)
    if abs(variation) < 0.05:
        return "bounded", float(abs(variation))
    if best[1] >= 0.2:
        return "indeterminate", float(best[1])
    return best[0], float(best[1])


def classify_growth(profile: DeltaProfile, eps: float, rho_list: Sequence[float],
                    integral: str = "wiener") -> tuple[str, float]:
    if integral == "wiener":
        vals = [wiener_integral(profile, eps, r) for r in rho_list]
    elif integral == "ziemer":
        vals = [ziemer_integral(profile, profile.p, r) for r in rho_list]
    else:
        raise ValueError(f"unknown integral {integral!r}")
    return fit_growth(rho_list, vals)


@dataclass
class WienerReport:
    epsilon: float
    rho: float
    I: float
    ziemer: float
    growth_class: str
    fit_residual: float

    HEADER = "epsilon,rho,I,ziemer,growth_class,fit_residual"

    def csv_row(self) -> str:
        return (f"{self.epsilon:.17g},{self.rho:.17g},{self.I:.17g},{self.ziemer:.17g},"
                f"{self.growth_class},{self.fit_residual:.17g}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def wiener_report(profile: DeltaProfile, eps: float, rho_list: Sequence[float]) -> WienerReport:
    rho = float(rho_list[-1])
    cls, res = classify_growth(profile, eps, rho_list)
    return WienerReport(eps, rho, wiener_integral(profile, eps, rho),
                        ziemer_integral(profile, profile.p, rho), cls, res)

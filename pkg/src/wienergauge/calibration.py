"""Constants of the boundary-continuity estimate and the dyadic oscillation recursion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

EPS_HARNACK_DEFAULT = 0.5
SIGMA_RESIDUAL = 1e-10


class CalibrationError(ValueError):
    pass


def sigma_condition(sigma: float, gamma_0: float, p: float) -> float:
    """Left side g(sigma) of the absorption condition with q = (1 - sigma^2) p.

    g(sigma) = gamma_0 * sigma^(p-1) * (1 + sigma - sigma^2) / (1 - sigma)
    """
    return gamma_0 * sigma ** (p - 1) * (1 + sigma - sigma * sigma) / (1 - sigma)


def calibrate_sigma(gamma_0: float, p: float) -> tuple[float, float, float]:
    """Solve g(sigma) = 1/2 by bisection; return (sigma, p_0, eps_cap).

    Raises CalibrationError when the root leaves p_0 = (1 - sigma^2) p <= 1.
    """
    if not gamma_0 > 0:
        raise CalibrationError("gamma_0 must be positive")
    if not p > 1:
        raise CalibrationError("p must exceed 1")
    lo, hi = 0.0, 1.0
    sigma = 0.5
    for _ in range(2000):
        sigma = 0.5 * (lo + hi)
        r = sigma_condition(sigma, gamma_0, p) - 0.5
        if abs(r) <= SIGMA_RESIDUAL * 1e-2 or hi - lo <= 2 * np.spacing(hi):
            break
        if r > 0:
            hi = sigma
        else:
            lo = sigma
    if abs(sigma_condition(sigma, gamma_0, p) - 0.5) > SIGMA_RESIDUAL:
        raise CalibrationError(f"bisection stalled at sigma={sigma}")
    p_0 = (1 - sigma * sigma) * p
    eps_cap = sigma * sigma * p
    if not p_0 > 1:
        raise CalibrationError(
            f"sigma={sigma:.6g} gives p_0={p_0:.6g} <= 1 (gamma_0={gamma_0}, p={p})")
    return sigma, p_0, eps_cap


def effective_epsilon(eps_harnack: float, eps_cap: float) -> float:
    for name, v in (("eps_harnack", eps_harnack), ("eps_cap", eps_cap)):
        if not 0 < v < 1:
            raise CalibrationError(f"{name}={v} outside (0, 1)")
    return min(eps_harnack, eps_cap)


@dataclass
class Calibration:
    p: float
    gamma_0: float
    sigma: float
    p_0: float
    eps_cap: float
    eps_harnack: float = EPS_HARNACK_DEFAULT
    eps_eff: float = 0.0
    C_harnack: float = 2.0
    gamma: float = 2.0
    gamma_1: float = float("nan")
    Q: float = 1.0
    ratio_C1_C0: float = 1.0

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise CalibrationError("sigma outside (0, 1)")
        if not 1 < self.p_0 < self.p:
            raise CalibrationError("p_0 outside (1, p)")
        if not self.gamma > 1:
            raise CalibrationError("gamma must exceed 1")
        if self.Q < 1 or self.ratio_C1_C0 < 1:
            raise CalibrationError("Q and C1/C0 must be >= 1")

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in fields(self))


def calibrate(gamma_0: float, p: float, *, eps_harnack: float = EPS_HARNACK_DEFAULT,
              C_harnack: float = 2.0, gamma: float | None = None, gamma_1: float = float("nan"),
              Q: float = 1.0, ratio_C1_C0: float = 1.0) -> Calibration:
    sigma, p_0, eps_cap = calibrate_sigma(gamma_0, p)
    eps_eff = min(eps_harnack, eps_cap) if eps_cap < 1 else eps_harnack
    if gamma is None:
        gamma = max(2.0, C_harnack)
    return Calibration(p=p, gamma_0=gamma_0, sigma=sigma, p_0=p_0, eps_cap=eps_cap,
                       eps_harnack=eps_harnack, eps_eff=eps_eff, C_harnack=C_harnack,
                       gamma=gamma, gamma_1=gamma_1, Q=Q, ratio_C1_C0=ratio_C1_C0)


def bound_1_8(osc_g: float, osc_u_B1: float, gamma: float, I: float) -> float:
    """gamma * max(osc_g, osc_u_B1 * exp(-I))."""
    if min(osc_g, osc_u_B1, I) < 0:
        raise CalibrationError("inputs must be non-negative")
    if not gamma > 1:
        raise CalibrationError("gamma must exceed 1")
    return gamma * max(osc_g, osc_u_B1 * math.exp(-I))


def decay_factor(delta: float, gamma: float, eps: float) -> float:
    return 1.0 - min(max(delta ** (1 / eps) / (4 * gamma), 0.0), 1.0)


@dataclass
class ModulusSequence:
    rho_0: float
    entries: list  # (n, rho_n, delta_n, factor_n, osc_n)
    osc_g: float
    eq18_bound: list
    osc_literal: list = field(default_factory=list)

    HEADER = "n,rho,delta,factor,osc_bound,eq18_bound"

    def to_csv(self) -> str:
        rows = [self.HEADER]
        for (n, r, d, f, o), b in zip(self.entries, self.eq18_bound):
            rows.append(f"{n},{r:.17g},{d:.17g},{f:.17g},{o:.17g},{b:.17g}")
        return "\n".join(rows) + "\n"

    @property
    def osc(self) -> np.ndarray:
        return np.array([e[4] for e in self.entries])


def oscillation_recursion(deltas: Sequence[float], gamma: float, eps: float, osc_0: float,
                          osc_g: float, rho_0: float = 1.0) -> ModulusSequence:
    """Oscillation bounds over the balls of radius rho_n = 2^-n rho_0.

    ``deltas[n]`` is the relative capacity at rho_n. Passing from rho_(n-1)
    to rho_n multiplies the bound by 1 - delta_n^(1/eps)/(4 gamma) (clamped to
    [0, 1]); the bound never drops below 2 osc_g, where the dichotomy stops
    the iteration. ``osc_literal`` repeats the recursion with delta_n in place
    of delta_n^(1/eps).
    """
    if not gamma > 1:
        raise CalibrationError("gamma must exceed 1")
    if not 0 < eps < 1:
        raise CalibrationError("eps must lie in (0, 1)")
    if osc_0 < 0 or osc_g < 0 or any(d < 0 for d in deltas):
        raise CalibrationError("oscillations and deltas must be non-negative")
    entries, bounds, literal = [], [], []
    osc = lit = osc_0
    I = 0.0
    floor = 2 * osc_g
    for n, d in enumerate(deltas):
        f = decay_factor(d, gamma, eps)
        if n > 0:
            osc = max(floor, f * osc)
            lit = max(floor, decay_factor(d, gamma, 1.0) * lit)
            I += math.log(2) * d ** (1 / eps)
        entries.append((n, rho_0 * 2.0 ** -n, float(d), f, osc))
        literal.append(lit)
        bounds.append(gamma * max(osc_g, osc_0 * math.exp(-I)))
    return ModulusSequence(rho_0, entries, osc_g, bounds, literal)

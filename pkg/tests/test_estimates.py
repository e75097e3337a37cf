import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wienergauge.capacity import radial_profile
from wienergauge.geometry import (
    CutoffSpec,
    DomainSpec,
    GridFunction,
    gallery,
    make_grid,
    origin_point,
)
from wienergauge.estimates import (
    EstimateError,
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

Y = origin_point(2)
A = 0.25  # radius of the excluded disc touching y


def disc_domain():
    """E^c is the closed disc of radius A centred at (-A, 0), so y = 0 lies on its boundary."""
    return DomainSpec(2, lambda X: np.linalg.norm(X + np.array([A, 0.0]), axis=-1) <= A, "disc")


def condenser_potential(grid, p=2.0, outer=2.0):
    """1 - capacitary potential of (disc, B_outer about the disc centre): 0 on the disc."""
    r = np.linalg.norm(grid.coords() + np.array([A, 0.0]), axis=-1)
    prof = radial_profile(p, 2, A, outer)
    return GridFunction(grid, 1.0 - prof(np.clip(r, A, outer)))


def test_zero_function_is_degenerate():
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    u = GridFunction(g, np.zeros(g.counts))
    rep = caccioppoli_ratio(u, gallery("slit"), Y, 0.5, standard_cutoff_family(Y, 0.5))
    assert (rep.lhs, rep.rhs, rep.ratio) == (0.0, 0.0, 0.0)
    assert "degenerate" in rep.flags and not rep.finite


def test_caccioppoli_input_checks():
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    u = GridFunction(g, -np.ones(g.counts))
    with pytest.raises(EstimateError):
        caccioppoli_ratio(u, gallery("slit"), Y, 0.5, standard_cutoff_family(Y, 0.5))
    with pytest.raises(EstimateError):
        caccioppoli_ratio(GridFunction(g, np.zeros(g.counts)), gallery("slit"), Y, 0.5, [])
    with pytest.raises(EstimateError):
        caccioppoli_ratio(GridFunction(g, np.zeros(g.counts)), gallery("slit"), Y, 0.25,
                          [CutoffSpec((0.0, 0.0), 0.25)])


def test_cutoff_family_supported_in_ball():
    for spec in standard_cutoff_family(Y, 0.5):
        assert np.linalg.norm(spec.center) + spec.outer <= 0.5 + 1e-12


def test_condenser_caccioppoli_refinement_stable():
    dom = disc_domain()
    rho = 0.5
    fam = standard_cutoff_family(Y, rho)
    ratios = []
    for h in (1 / 32, 1 / 64):
        u = condenser_potential(make_grid(2, 0.0, 1.0, h))
        rep = caccioppoli_ratio(u, dom, Y, rho, fam)
        assert rep.finite and rep.name == "eq21"
        ratios.append(rep.ratio)
    assert max(ratios) / min(ratios) < 2


def test_condenser_caccioppoli_shift_sweep():
    dom = disc_domain()
    rho = 0.5
    fam = standard_cutoff_family(Y, rho)
    u = condenser_potential(make_grid(2, 0.0, 1.0, 1 / 64))
    base = caccioppoli_ratio(u, dom, Y, rho, fam).ratio
    shifted = [caccioppoli_ratio(u, dom, Y, rho, fam, h_shift=s) for s in (0.01, 0.1, 1.0)]
    assert all(r.name == "eq23" and r.finite for r in shifted)
    # the shifted family stays under the unshifted constant (up to 10%)
    assert max(r.ratio for r in shifted) <= 1.1 * base


@given(c=st.floats(1e-3, 10))
def test_harnack_constant_is_one(c):
    g = make_grid(2, 0.0, 1.0, 1 / 8)
    rep = weak_harnack_ratio(GridFunction(g, np.full(g.counts, c)), Y, 0.25, 0.5)
    assert rep.ratio == pytest.approx(1.0, rel=1e-12)


def test_harnack_zero_node_is_infinite():
    g = make_grid(2, 0.0, 1.0, 1 / 8)
    vals = np.ones(g.counts)
    vals[g.counts[0] // 2, g.counts[1] // 2] = 0.0
    rep = weak_harnack_ratio(GridFunction(g, vals), Y, 0.25, 0.5)
    assert rep.ratio == math.inf and "infinite" in rep.flags


@given(seed=st.integers(0, 10 ** 5), eps=st.floats(0.1, 1.0))
def test_harnack_ratio_at_least_one(seed, eps):
    g = make_grid(2, 0.0, 1.0, 1 / 8)
    v = np.random.default_rng(seed).uniform(0.1, 2.0, g.counts)
    assert weak_harnack_ratio(GridFunction(g, v), Y, 0.5, eps).ratio >= 1 - 1e-12


def test_eq33_distance_function_closed_form():
    """u = |x| on the whole box: drop rho over quarter-oscillation rho/2 gives rhs = 2^eps."""
    rho, eps = 0.25, 0.5
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    r = g.radius()
    u = GridFunction(g, r)
    q = 2 * rho / 4
    w = np.clip((r - (2 * rho - q)) / q, 0, None)
    v = GridFunction(g, 1 - w)
    rep = eq33_check(u, v, gallery("empty"), Y, rho, eps)
    sel = r <= 2 * rho * (1 + 1e-12)
    lhs = np.mean(np.clip(1 - w[sel], 0, None) ** eps)
    assert rep.rhs == pytest.approx(2 ** eps, rel=1e-12)
    assert rep.lhs == pytest.approx(lhs, rel=1e-12)
    assert rep.constant == pytest.approx((lhs / 2 ** eps) ** (1 / eps), rel=1e-12)


def test_eq33_constant_u_is_degenerate():
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    one = GridFunction(g, np.ones(g.counts))
    rep = eq33_check(one, one, gallery("slit"), Y, 0.25, 0.5)
    assert "degenerate" in rep.flags and rep.ratio == 0.0


def test_eq34_constant_is_zero():
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    rep = eq34_check(GridFunction(g, np.full(g.counts, 0.4)), CutoffSpec((0.0, 0.0), 0.25), 2.0, 1.8)
    assert rep.lhs == 0.0 and rep.ratio == 0.0 and rep.rhs > 0


@pytest.mark.parametrize("q", [0.9, 1.0, 2.0, 2.5])
def test_eq34_rejects_q(q):
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    with pytest.raises(EstimateError):
        eq34_check(GridFunction(g, np.ones(g.counts)), CutoffSpec((0.0, 0.0), 0.25), 2.0, q,
                   p_0=1.0)


def test_eq34_rejects_below_p0():
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    with pytest.raises(EstimateError):
        eq34_check(GridFunction(g, np.ones(g.counts)), CutoffSpec((0.0, 0.0), 0.25), 2.0, 1.5,
                   p_0=1.7)


def test_eq34_needs_positive_v():
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    with pytest.raises(EstimateError, match="shift"):
        eq34_check(GridFunction(g, np.zeros(g.counts)), CutoffSpec((0.0, 0.0), 0.25), 2.0, 1.8)


def test_eq34_q_sweep_stays_finite():
    g = make_grid(2, 0.0, 1.0, 1 / 32)
    v = condenser_potential(g)
    v = GridFunction(g, v.values + 0.1)
    zeta = CutoffSpec((0.0, 0.0), 0.25)
    ratios = [eq34_check(v, zeta, 2.0, 2.0 - d).ratio for d in (0.5, 0.172, 1e-2, 1e-3)]
    assert all(math.isfinite(r) and r > 0 for r in ratios)


def test_eq34_refinement_stable():
    zeta = CutoffSpec((0.0, 0.0), 0.25)
    ratios = []
    for h in (1 / 32, 1 / 64):
        g = make_grid(2, 0.0, 1.0, h)
        v = GridFunction(g, condenser_potential(g).values + 0.1)
        ratios.append(eq34_check(v, zeta, 2.0, 2.0 - 0.172).ratio)
    assert max(ratios) / min(ratios) < 2


def test_cap_lb_empty_complement():
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    rep = capacity_lower_bound_check(GridFunction(g, np.ones(g.counts)), gallery("empty"), Y,
                                     0.25, 2.0, 0.5)
    assert rep.lhs == 0.0 and rep.ratio == 0.0


def test_cap_lb_disc_finite():
    g = make_grid(2, 0.0, 2.0, 1 / 16)
    v = GridFunction(g, 1 - condenser_potential(g).values)
    rep = capacity_lower_bound_check(v, disc_domain(), Y, 0.25, 2.0, 0.5)
    assert rep.finite and rep.ratio > 0


def test_level_family_common_bound():
    g = make_grid(2, 0.0, 1.0, 1 / 32)
    v = GridFunction(g, 1 - condenser_potential(g).values)
    reps = [level_family_ratio(v, disc_domain(), Y, 0.5, k) for k in (0.25, 0.5, 0.75)]
    assert all(r.name == "eq32" for r in reps)
    assert all(math.isfinite(r.ratio) for r in reps)


def test_report_csv():
    rep = IneqReport("eq25", 1.0, 0.5, 2.0, "ball(rho=0.25;eps=0.5)", 0.0625, ("x",))
    assert IneqReport.HEADER == "name,lhs,rhs,ratio,witness,h,flags"
    assert rep.csv_row() == "eq25,1,0.5,2,ball(rho=0.25;eps=0.5),0.0625,x"
    assert rep.tags == ("Q=1 instance",)


def test_suite_gamma_hat_skips_degenerate():
    reps = [IneqReport("eq21", 1, 1, 3.0, "", 0.1, (), 3.0),
            IneqReport("eq33", 0, 0, 0.0, "", 0.1, ("degenerate",), 0.0),
            IneqReport("eq25", 1, 0, math.inf, "", 0.1, ("infinite",), math.inf),
            IneqReport("eq34", 1, 1, 5.0, "", 0.1, (), 5.0)]
    suite = SuiteResult(reps, 0.5, 1.8)
    assert suite.gamma_hat == 5.0
    assert suite.to_csv().count("\n") == 5
    assert [r.name for r in suite.by_name("eq33")] == ["eq33"]

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import radial_capacity_quadrature
from wienergauge.capacity import (
    CapacityError,
    CapacityResult,
    DeltaProfile,
    GridPolicy,
    ball_capacity_study,
    condenser_resistance,
    delta_profile,
    estimate_capacity,
    radial_condenser_capacity,
    radial_profile,
    relative_capacity,
    richardson,
    transfer_outer_radius,
)
from wienergauge.energy import SolverOptions
from wienergauge.geometry import gallery, make_grid, origin_point


def test_radial_closed_forms():
    assert radial_condenser_capacity(2, 3, 0.25, 1) == pytest.approx(4 * math.pi / 3, rel=1e-10)
    assert radial_condenser_capacity(2, 2, 0.25, 1) == pytest.approx(2 * math.pi / math.log(4),
                                                                    rel=1e-10)


@given(p=st.floats(1.1, 3.0), N=st.sampled_from([2, 3]), a=st.floats(0.01, 0.5),
       ratio=st.floats(1.5, 20))
def test_radial_against_quadrature_oracle(p, N, a, ratio):
    p = min(p, N)
    b = a * ratio
    assert radial_condenser_capacity(p, N, a, b) == pytest.approx(
        radial_capacity_quadrature(p, N, a, b), rel=1e-8)


def test_radial_point_capacity_vanishes():
    vals = [radial_condenser_capacity(1.5, 2, a, 1) for a in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-2


@pytest.mark.parametrize("args", [(2, 3, 1.0, 0.5), (3.5, 3, 0.1, 1), (1.0, 2, 0.1, 1)])
def test_radial_rejects(args):
    with pytest.raises(CapacityError):
        radial_condenser_capacity(*args)


def test_radial_profile_endpoints():
    u = radial_profile(1.5, 2, 0.25, 1.0)
    assert u(np.array([0.25]))[0] == pytest.approx(1.0)
    assert u(np.array([1.0]))[0] == pytest.approx(0.0, abs=1e-12)


@given(p=st.floats(1.2, 2.0), a=st.floats(0.01, 0.2), b=st.floats(0.3, 1.0))
def test_series_transfer_exact_for_balls(p, a, b):
    N = 2
    cap = radial_condenser_capacity(p, N, a, b)
    moved = transfer_outer_radius(cap, p, N, b, 2.0)
    assert moved == pytest.approx(radial_condenser_capacity(p, N, a, 2.0), rel=1e-9)
    assert condenser_resistance(p, N, a, b) > 0


def test_empty_obstacle_has_zero_capacity():
    g = make_grid(2, 0.0, 1.0, 1 / 8)
    res = estimate_capacity(np.zeros(g.counts, bool), 2.0, g)
    assert res.value == 0.0


def test_p2_ball_capacity_coarse():
    res = ball_capacity_study(2.0, 2, 0.25, 1.0, [1 / 32, 1 / 64])
    target = 2 * math.pi / math.log(4)
    assert abs(res.extrapolated - target) / target < 0.03
    assert res.per_level[0][0] > res.per_level[1][0]


@given(seed=st.integers(0, 10 ** 6), p=st.sampled_from([1.5, 2.0]))
def test_constraint_monotonicity(seed, p):
    g = make_grid(2, 0.0, 1.0, 1 / 8)
    rng = np.random.default_rng(seed)
    inside = g.radius() <= 0.6
    K2 = inside & (rng.random(g.counts) < 0.3)
    K1 = K2 & (rng.random(g.counts) < 0.5)
    opts = SolverOptions(tol=1e-9)
    c1 = estimate_capacity(K1, p, g, opts).value
    c2 = estimate_capacity(K2, p, g, opts).value
    assert c1 <= c2 * (1 + 1e-8)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_maximum_principle(p):
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    K = (np.abs(g.coords()[..., 0]) <= 0.2) & (np.abs(g.coords()[..., 1]) <= 0.05)
    opts = SolverOptions()
    res = estimate_capacity(K, p, g, opts)
    assert res.potential.min() >= -opts.tol
    assert res.potential.max() <= 1 + opts.tol
    assert res.residual <= opts.tol


def test_determinism():
    g = make_grid(2, 0.0, 1.0, 1 / 16)
    K = g.radius() <= 0.3
    a = estimate_capacity(K, 1.7, g)
    b = estimate_capacity(K, 1.7, g)
    assert a.record() == b.record()
    assert np.array_equal(a.potential, b.potential)


def test_obstacle_touching_outer_sphere_rejected():
    g = make_grid(2, 0.0, 1.0, 1 / 8)
    with pytest.raises(CapacityError):
        estimate_capacity(g.radius() <= 1.0, 2.0, g)


def test_record_format():
    r = CapacityResult(1.5, [(0.1, 1.4), (0.05, 1.5)], 1.6, 1.0, 7, 1e-9)
    assert CapacityResult.RECORD_HEADER == "value,extrapolated,order,levels,iterations,residual"
    assert r.record() == "1.5,1.6,1.0,2,7,1e-09"


@given(C=st.floats(-5, 5), A=st.floats(0.1, 5), q=st.floats(0.6, 2.9))
def test_richardson_recovers_power_law(C, A, q):
    hs = [0.1, 0.05, 0.025]
    val, qq = richardson([(h, C + A * h ** q) for h in hs])
    assert val == pytest.approx(C, abs=1e-8)
    assert qq == pytest.approx(q, rel=1e-6)


def test_richardson_sign_change_returns_finest():
    val, q = richardson([(0.1, 1.0), (0.05, 1.2), (0.025, 1.1)])
    assert val == 1.1 and math.isnan(q)


def test_relative_capacity_full_ball_3d():
    """cap(B_1/4, B_2) / (1/4) against the closed form."""
    d = gallery("full_ball", 3)
    y = origin_point(3)
    target = 4 * math.pi / (4 - 0.5) / 0.25
    vals = []
    for h in (1 / 16, 1 / 32):
        g = make_grid(3, 0.0, 0.5, h)  # outer ball R = 1/2, carried to B_2
        vals.append(relative_capacity(d, y, 0.25, 2.0, g))
    ext, _ = richardson([(1 / 16, vals[0]), (1 / 32, vals[1])])
    assert abs(ext - target) / target < 0.05


def test_relative_capacity_empty():
    g = make_grid(2, 0.0, 1.0, 1 / 8)
    assert relative_capacity(gallery("empty"), origin_point(2), 0.5, 2.0, g) == 0.0


def test_relative_capacity_rejects_rho():
    g = make_grid(2, 0.0, 1.0, 1 / 8)
    with pytest.raises(CapacityError):
        relative_capacity(gallery("slit"), origin_point(2), 1.2, 2.0, g)


def test_delta_profile_full_ball_roughly_constant():
    prof = delta_profile(gallery("full_ball", 3), origin_point(3), 2.0, [1 / 4, 1 / 8, 1 / 16])
    d = prof.delta
    assert np.all(d > 0)
    assert (d.max() - d.min()) / d.mean() < 0.15


def test_delta_profile_empty_is_zero():
    prof = delta_profile(gallery("empty"), origin_point(2), 2.0, [0.5, 0.25, 0.125])
    assert np.all(prof.delta == 0)


def test_point_capacity_vanishes_under_refinement():
    """A single node's relative capacity at fixed t decays as h -> 0 (p < N)."""
    d = gallery("point")
    y = origin_point(2)
    vals = [relative_capacity(d, y, 0.25, 1.5, make_grid(2, 0.0, 1.0, h))
            for h in (1 / 16, 1 / 32, 1 / 64)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 0.5 * vals[0]


def test_profile_csv_roundtrip():
    prof = DeltaProfile([(0.5, 1.0 / 3), (0.25, 0.2)], 2.0, "x")
    text = prof.to_csv()
    assert text.splitlines()[0] == "t,delta"
    assert text.splitlines()[1] == "0.5,0.33333333333333331"
    back = DeltaProfile.from_csv(text, 2.0)
    assert back.entries == prof.entries


@pytest.mark.parametrize("entries", [[(0.5, 1), (0.5, 1)], [(1.5, 1), (0.5, 1)],
                                     [(0.5, -1), (0.25, 1)]])
def test_profile_validation(entries):
    with pytest.raises(ValueError):
        DeltaProfile(entries, 2.0)


def test_grid_policy_resolution():
    pol = GridPolicy.for_dimension(2)
    (g,) = pol.grids(2, origin_point(2), 0.125)
    assert 2 * 0.125 / g.h >= 8
    assert g.half_width <= 2.0

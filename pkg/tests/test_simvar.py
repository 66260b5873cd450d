import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ALPHA_STAR, LAMBDA_STAR
from artifact.numerics import build_radial_grid, lp_norm
from artifact.profile import integrate_profile, physical_self_similar
from artifact.simvar import (Trajectory, approximate_ancient_solution, evolve_perturbation, from_similarity,
                             growth_rate, nonlinear_remainder, to_similarity)
from artifact.spectrum import assemble_linearized, top_eigenpairs


@pytest.fixture(scope="module")
def linearized(profile_331):
    op = assemble_linearized(profile_331, 1.0)
    rep = top_eigenpairs(op, 1)
    return op, rep.eigenfields[0], float(rep.eigenvalues[0])


@pytest.fixture(scope="module")
def star():
    ps = integrate_profile(ALPHA_STAR, 3.0, 3)
    op = assemble_linearized(ps, 1.0)
    rep = top_eigenpairs(op, 1)
    return ps, rep.eigenfields[0], float(rep.eigenvalues[0])


def test_similarity_round_trip():
    g = build_radial_grid(3, 20.0, 2000)
    f = g.sample(lambda r: np.exp(-r ** 2) * (1 + np.cos(3 * r)))
    for t in (0.25, 1.0, 3.0):
        back = from_similarity(to_similarity(f, t, 3.0), t, 3.0)
        inner = g.nodes < 20 * min(1.0, math.sqrt(t))
        assert np.max(np.abs(back.values - f.values)[inner]) < 1e-6
    one = to_similarity(f, 1.0, 3.0)
    assert np.max(np.abs(one.values - f.values)) < 1e-12
    with pytest.raises(ValueError):
        to_similarity(f, 0.0, 3.0)
    with pytest.raises(ValueError):
        from_similarity(f, -1.0, 3.0)


def test_self_similar_solution_is_static(profile_331):
    g = build_radial_grid(3, 10.0, 2000)
    vs = [to_similarity(physical_self_similar(profile_331, t, build_radial_grid(3, 40.0, 8000)), t, 3.0, g)
          for t in (0.1, 1.0)]
    assert np.max(np.abs(vs[0].values - vs[1].values)) < 1e-4
    assert np.max(np.abs(vs[1].values - profile_331(g.nodes))) < 1e-4


def test_trajectory_invariants():
    g = build_radial_grid(3, 1.0, 16)
    f = g.field(np.zeros(g.n))
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), [f, f])
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0]), [f])
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0]), [f, f], {"x": [1.0]})


def test_zero_perturbation_stays_zero(profile_331, linearized):
    op = linearized[0]
    w0 = op.grid.field(np.zeros(op.grid.n))
    tr = evolve_perturbation(w0, profile_331, 0.0, 20.0, dt=1e-2, op=op)
    assert max(np.max(np.abs(f.values)) for f in tr.fields) <= 1e-8


def test_unstable_mode_grows_at_eigenvalue(profile_331, linearized):
    op, ulin, lam = linearized
    tr = evolve_perturbation(ulin * 1e-6, profile_331, 0.0, 10.0, dt=1e-3, op=op)
    rates = [growth_rate(tr, k).rate for k in ("L_gamma_over_p", "L_gamma")]
    for r in rates:
        assert r == pytest.approx(lam, rel=0.02)
    assert abs(rates[0] - rates[1]) <= 0.02 * abs(rates[0])


def test_time_step_halving(profile_331, linearized):
    op, ulin, _ = linearized
    finals = []
    for dt in (2e-3, 1e-3):
        tr = evolve_perturbation(ulin * 1e-3, profile_331, 0.0, 2.0, dt=dt, op=op)
        finals.append(tr.norms("L_gamma")[-1])
    assert abs(finals[1] - finals[0]) / finals[1] < 1e-4


def test_nonlinear_deviation_is_quadratic(profile_331, linearized):
    op, ulin, _ = linearized
    amps = np.array([1e-4, 1e-5, 1e-6])
    devs = []
    for a in amps:
        kw = dict(dt=1e-2, op=op, n_records=11)
        full = evolve_perturbation(ulin * a, profile_331, 0.0, 2.0, **kw)
        lin = evolve_perturbation(ulin * a, profile_331, 0.0, 2.0, nonlinear=False, **kw)
        devs.append(lp_norm(full.fields[-1] - lin.fields[-1], 2))
    slope = np.polyfit(np.log(amps), np.log(devs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.2)


def test_blowup_is_flagged_not_raised(profile_331, linearized):
    op, ulin, _ = linearized
    tr = evolve_perturbation(ulin * 5.0, profile_331, 0.0, 50.0, dt=1e-2, op=op, blowup=1e3)
    assert tr.flags["blowup"]
    assert tr.times[-1] < 50.0
    assert all(f.is_finite() for f in tr.fields)


def test_evolve_rejects_bad_spans(profile_331, linearized):
    op, ulin, _ = linearized
    with pytest.raises(ValueError):
        evolve_perturbation(ulin, profile_331, 1.0, 0.0, op=op)
    with pytest.raises(ValueError):
        evolve_perturbation(ulin, profile_331, 0.0, 1.0, dt=0.0, op=op)


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_nonlinear_remainder_vanishes_to_second_order(u, w):
    U = np.array([u])
    small = nonlinear_remainder(U, np.array([1e-4 * w]), 3.0)[0]
    # exact value 3 u W^2 + W^3, plus cancellation roundoff of a few ulp of |u|^3
    roundoff = 16 * np.finfo(float).eps * abs(u) ** 3
    assert abs(small) <= 3 * abs(u) * 1e-8 * w * w + 1e-12 * abs(w) ** 3 + roundoff + 1e-18
    assert nonlinear_remainder(U, np.zeros(1), 3.0)[0] == 0.0


def test_growth_rate_on_synthetic_series():
    g = build_radial_grid(3, 1.0, 16)
    f = g.field(np.ones(g.n))
    t = np.linspace(0, 5, 50)
    tr = Trajectory(t, [f] * t.size, {"a": np.exp(0.3 * t), "b": np.full(t.size, 2.0), "z": np.zeros(t.size)})
    fit = growth_rate(tr, "a")
    assert fit.rate == pytest.approx(0.3, abs=1e-6)
    assert not fit.flagged
    assert growth_rate(tr, "b").rate == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        growth_rate(tr, "z")
    short = Trajectory(t[:5], [f] * 5, {"a": np.exp(t[:5])})
    with pytest.raises(ValueError):
        growth_rate(short, "a")


def test_ancient_surrogate_bounds(star):
    ps, ulin, lam = star
    assert lam == pytest.approx(LAMBDA_STAR, rel=1e-3)
    rep = approximate_ancient_solution(ps, ulin, lam, 0.05)
    assert rep.upper_ok and rep.lower_ok and rep.rate_ok
    assert np.all(rep.trajectory.norms("L_eta_gamma") < 0.05)
    assert rep.rate.rate == pytest.approx(lam, rel=0.1)
    n = rep.trajectory.norms("L_gamma_over_p")
    span = rep.trajectory.times[-1] - rep.trajectory.times[0]
    assert n[0] / n[-1] == pytest.approx(math.exp(-lam * span), rel=0.1)


def test_ancient_shift_follows_amplitude(star):
    ps, ulin, lam = star
    a = approximate_ancient_solution(ps, ulin, lam, 0.05)
    b = approximate_ancient_solution(ps, ulin, lam, 0.05, delta_scale=0.1)
    assert b.shift - a.shift == pytest.approx(math.log(10) / lam, rel=0.05)


def test_misdeclared_rate_is_flagged(star):
    ps, ulin, lam = star
    rep = approximate_ancient_solution(ps, ulin, 2 * lam, 0.05)
    assert not rep.ok
    assert rep.trajectory.flags.get("lower_bound_failed")


def test_ancient_rejects_stable_rate(star):
    ps, ulin, _ = star
    with pytest.raises(ValueError):
        approximate_ancient_solution(ps, ulin, -0.1, 0.05)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from artifact.profile import integrate_profile
from artifact.simvar import evolve_perturbation, growth_rate
from artifact.spectrum import (SearchExhausted, assemble_linearized, core_scale, find_small_unstable_alpha,
                               lambda_max, spectral_grid, top_eigenpairs, unstable_eigenvalue_sweep)


@pytest.fixture(scope="module")
def op_331(profile_331):
    return assemble_linearized(profile_331, 1.0)


def test_matrix_is_symmetric(op_331):
    m = op_331.dense()
    assert np.max(np.abs(m - m.T)) < 1e-12
    assert np.all(op_331.potential >= 0)


def test_free_operator_has_zero_potential():
    op = assemble_linearized(None, 1.0, p=3.0, d=3)
    assert np.all(op.potential == 0)


def test_free_operator_top_eigenvalue():
    op = assemble_linearized(None, 1.0, p=3.0, d=3)
    rep = top_eigenpairs(op, 3)
    assert rep.eigenvalues[0] == pytest.approx(oracles.FROZEN["lambda_free_3_3"], abs=1e-3)
    # the ladder 1/(p-1) - d/2 - k of the Gaussian-weighted free operator
    assert np.allclose(rep.eigenvalues, [-1.0, -2.0, -3.0], atol=1e-3)
    r = op.grid.nodes
    f = rep.eigenfields[0].values
    inner = r < 8
    assert np.max(np.abs(f - np.exp(-r ** 2 / 4))[inner]) < 1e-3


def test_constant_field_gives_the_zeroth_order_term(op_331):
    g = op_331.grid
    out = op_331.apply(g.field(np.ones(g.n))).values
    expect = 0.5 + op_331.potential
    inner = g.nodes < 0.8 * g.rho_max
    assert np.max(np.abs(out - expect)[inner]) < 1e-3


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_top_eigenvalue_against_finite_difference_oracle(alpha):
    frozen = oracles.FROZEN[f"lambda_3_3_alpha{alpha:g}"]
    assert lambda_max(alpha, 3.0, 3, 1.0) == pytest.approx(frozen, abs=1e-4)


def test_eigenpair_residuals_and_ordering(op_331):
    rep = top_eigenpairs(op_331, 5)
    assert np.all(np.diff(rep.eigenvalues) < 0)
    assert np.all(rep.converged)
    assert np.all(rep.residuals < 1e-6)
    for f in rep.eigenfields:
        assert np.max(np.abs(f.values)) == pytest.approx(1.0)
    one = top_eigenpairs(op_331, 1)
    assert abs(one.eigenvalues[0] - rep.eigenvalues[0]) < 1e-10
    assert rep.threshold == pytest.approx(0.5 - 1.5)
    with pytest.raises(ValueError):
        top_eigenpairs(op_331, 0)


def test_weighted_self_adjointness(op_331):
    g = op_331.grid
    rng = np.random.default_rng(7)
    for _ in range(20):
        u = g.field(np.exp(-g.nodes ** 2 / 8) * rng.standard_normal(g.n))
        v = g.field(np.exp(-g.nodes ** 2 / 8) * rng.standard_normal(g.n))
        a = op_331.weighted_inner(op_331.apply(u), v)
        b = op_331.weighted_inner(u, op_331.apply(v))
        assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)


def test_eta_range_is_enforced(profile_331):
    with pytest.raises(ValueError):
        assemble_linearized(profile_331, 3.0)
    with pytest.raises(ValueError):
        assemble_linearized(profile_331, 0.5)


def test_eigenvalue_stable_under_refinement_and_truncation():
    base = lambda_max(1.0, 3.0, 3, 1.0)
    assert abs(lambda_max(1.0, 3.0, 3, 1.0, n=4000) - base) < 1e-3
    for rho_max in (25.0, 35.0):
        assert abs(lambda_max(1.0, 3.0, 3, 1.0, rho_max=rho_max) - base) < 1e-4


def test_count_above_threshold_stable_under_refinement(profile_331):
    counts = []
    for n in (1000, 2000, 4000):
        op = assemble_linearized(profile_331, 1.0, spectral_grid(3, n=n, core=core_scale(1.0, 3.0)))
        counts.append(top_eigenpairs(op, 10).above_threshold)
    assert counts[0] == counts[1] == counts[2]
    assert 0 < counts[0] < 10


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
def test_linear_growth_rate_matches_top_eigenvalue(alpha):
    ps = integrate_profile(alpha, 3.0, 3)
    op = assemble_linearized(ps, 1.0)
    lam = top_eigenpairs(op, 1).eigenvalues[0]
    rng = np.random.default_rng(1)
    g = op.grid
    w0 = g.field(np.exp(-g.nodes ** 2 / 8) * (1 + 0.3 * rng.standard_normal(g.n)))
    tr = evolve_perturbation(w0, ps, 0.0, 10.0, dt=1e-3, nonlinear=False, op=op)
    for key in ("L_gamma_over_p", "L_gamma"):
        assert growth_rate(tr, key).rate == pytest.approx(lam, rel=0.02)


def test_small_alpha_tends_to_free_spectrum():
    assert lambda_max(1e-3, 3.0, 3, 1.0) == pytest.approx(-1.0, abs=1e-3)


def test_sweep_below_joseph_lundgren_finds_instability():
    out = unstable_eigenvalue_sweep(3.0, 3, [0.5, 1, 2, 4, 8], 1.0)
    assert out["jl_subcritical"]
    assert len(out["unstable"]) >= 1
    assert out["min_positive"] == min(r.lam for r in out["unstable"])


def test_sweep_rejects_subfujita_power():
    with pytest.raises(ValueError, match="gate violated"):
        unstable_eigenvalue_sweep(1.5, 3, [1.0], 1.0)


def test_small_eigenvalue_search():
    hit = find_small_unstable_alpha(3.0, 3, 0.05, 1.0)
    assert 0 < hit.lam < 0.05
    lo, hi = hit.bracket_lams
    assert (lo - hit.target) * (hi - hit.target) < 0
    assert abs(lambda_max(hit.alpha, 3.0, 3, 1.0, n=4000) - hit.lam) < 0.2 * hit.lam


def test_unbounded_window_returns_any_unstable_alpha():
    hit = find_small_unstable_alpha(3.0, 3, math.inf, 1.0)
    assert hit.lam > 0


def test_search_exhaustion_is_reported():
    with pytest.raises(SearchExhausted) as info:
        find_small_unstable_alpha(3.0, 3, 0.05, 1.0, alphas=[0.3, 0.4])
    assert "table" in info.value.data


def test_search_rejects_bad_requests():
    with pytest.raises(ValueError):
        find_small_unstable_alpha(3.0, 3, -1.0, 1.0)
    with pytest.raises(ValueError, match="gate violated"):
        find_small_unstable_alpha(8.0, 11, 0.05, 1.0)
    with pytest.raises(ValueError, match="gate violated"):
        find_small_unstable_alpha(3.0, 3, 0.05, 1.0, r=3.0)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.3, 3.0))
def test_potential_is_nonnegative_and_bounded(alpha):
    ps = integrate_profile(alpha, 3.0, 3, rho_max=20.0, n=2000)
    op = assemble_linearized(ps, 1.0)
    assert np.all(op.potential >= 0)
    assert np.max(op.potential) <= 3 * alpha ** 2 * (1 + 1e-9)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from artifact.randomize import (FixedPointFailure, LatticeField, amplitude_scaling, band_limited_field,
                                build_block_partition, draw_coefficients, expected_l2_squared,
                                fixed_point_exponent, gaussian_bump, heat_blockwise, kappa_exponents,
                                lq_moment_check, mild_fixed_point, modulation_norm, multiplier_second_moment,
                                project_block, random_data_gate, randomize, smoothing_tail_estimate,
                                success_probability, tail_exponent)


@pytest.fixture(scope="module")
def bp2():
    return build_block_partition(2, 4)


@pytest.fixture(scope="module")
def field2():
    return band_limited_field(2, 8.0, 32, 3.0, 1)


def bump_with_l2(d, L, n, amp):
    f = gaussian_bump(d, L, n, 1.0)
    return f * (amp / f.l2_spectral())


# ---------------------------------------------------------------------------
# block partition

@settings(max_examples=20)
@given(st.integers(1, 3), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_partition_of_unity_symmetry_and_support(d, K, seed):
    bp = build_block_partition(d, K)
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-(K - 1), K - 1, (50, d))
    total = sum(bp.evaluate(k, xi) for k in bp.blocks())
    assert np.max(np.abs(total - 1)) < 1e-12
    for k in itertools.islice(bp.blocks(), 20):
        a = bp.evaluate(k, xi)
        b = bp.evaluate(tuple(-v for v in k), -xi)
        assert np.max(np.abs(a - b)) < 1e-12
        far = np.max(np.abs(xi - np.array(k)), axis=1) >= 1
        assert np.all(a[far] == 0)
        assert np.all((a >= 0) & (a <= 1))


def test_partition_against_scalar_oracle():
    bp = build_block_partition(1, 6)
    xs = np.random.default_rng(0).uniform(-5, 5, 200)
    for k in (-2, 0, 1, 3):
        ours = bp.evaluate((k,), xs[:, None])
        ref = np.array([oracles.psi1(k, x) for x in xs])
        assert np.max(np.abs(ours - ref)) < 1e-13


def test_partition_of_unity_at_many_nodes():
    bp = build_block_partition(3, 8)
    xi = np.random.default_rng(1).uniform(-7, 7, (1000, 3))
    total = sum(bp.evaluate(k, xi) for k in bp.blocks())
    assert np.max(np.abs(total - 1)) < 1e-12


def test_central_block_at_origin():
    for d in (1, 2, 3):
        bp = build_block_partition(d, 2)
        assert bp.evaluate((0,) * d, np.zeros((1, d)))[0] == 1.0
        assert bp.evaluate((1,) + (0,) * (d - 1), np.zeros((1, d)))[0] == 0.0


def test_partition_rejects_bad_input(bp2):
    with pytest.raises(ValueError):
        build_block_partition(3, 0)
    with pytest.raises(ValueError, match="outside the table"):
        bp2.multiplier((5, 0), 8.0, 32)
    with pytest.raises(ValueError):
        bp2.multiplier((0, 0, 0), 8.0, 32)


# ---------------------------------------------------------------------------
# projections and randomization

def test_projection_of_a_single_frequency(bp2):
    L, n = 8.0, 32
    spec = np.zeros((n, n), dtype=complex)
    spec[3, 5] = 1.0
    f = LatticeField(2, L, n, spec)
    xi = np.array([[3 * math.pi / L, 5 * math.pi / L]])
    for k in [(0, 0), (1, 2), (0, 1), (1, 1)]:
        out = project_block(f, bp2, k).spectrum
        assert out[3, 5] == pytest.approx(bp2.evaluate(k, xi)[0], abs=1e-14)
        assert np.count_nonzero(out) <= 1


def test_projections_are_complete_and_contractive(bp2):
    for seed in range(20):
        f = band_limited_field(2, 8.0, 32, 2.9, seed)
        parts = [project_block(f, bp2, k) for k in bp2.blocks()]
        total = sum(parts[1:], parts[0])
        assert np.max(np.abs(total.values - f.values)) < 1e-10
        l2 = f.lp_norm(2)
        assert all(P.lp_norm(2) <= l2 * (1 + 1e-12) for P in parts)


def test_parseval(field2):
    assert field2.lp_norm(2) == pytest.approx(field2.l2_spectral(), rel=1e-10)


def test_randomization_is_real_and_paired(bp2, field2):
    for seed in range(10):
        dat = randomize(field2, bp2, seed)
        h = dat.coefficients
        assert np.array_equal(h[::-1, ::-1], np.conj(h))
        assert h[bp2.K, bp2.K].imag == 0
        assert dat.result.imag_residue() < 1e-12


def test_unit_coefficients_return_the_datum(bp2, field2):
    dat = randomize(field2, bp2, coefficients=1.0)
    assert np.max(np.abs(dat.result.values - field2.values)) < 1e-10
    zero = LatticeField.zeros(2, 8.0, 32)
    assert np.all(randomize(zero, bp2, 3).result.spectrum == 0)


def test_randomize_rejects_unresolved_data(bp2):
    wide = band_limited_field(2, 8.0, 64, 6.0, 0)
    with pytest.raises(ValueError, match="block cutoff"):
        randomize(wide, bp2, 0)
    with pytest.raises(ValueError, match="conj"):
        randomize(band_limited_field(2, 8.0, 32, 2.0, 0), bp2, coefficients=1j)


def test_randomization_commutes_with_heat_flow(bp2, field2):
    dat = randomize(field2, bp2, 42)
    for t in (0.01, 0.3):
        a = dat.result.heat(t).values
        b = heat_blockwise(dat, t).values
        assert np.max(np.abs(a - b)) < 1e-10


def test_multiplier_second_moment_against_bruteforce():
    bp = build_block_partition(2, 4)
    L, n = 8.0, 32
    m2 = multiplier_second_moment(bp, L, n)
    xi = (math.pi / L) * np.fft.fftfreq(n, 1.0 / n)
    rng = np.random.default_rng(3)
    for i, j in rng.integers(0, n, (30, 2)):
        if n // 2 in (i, j):
            continue
        assert m2[i, j] == pytest.approx(oracles.multiplier_second_moment((xi[i], xi[j]), 4), rel=1e-12)


def test_empirical_energy_matches_closed_form(bp2, field2):
    h = draw_coefficients(bp2, 7, 10000)
    m = bp2.combine(h, 8.0, 32)
    emp = np.mean(np.sum(np.abs(m * field2.spectrum) ** 2, axis=(1, 2))) * field2.volume
    assert emp == pytest.approx(expected_l2_squared(field2, bp2), rel=0.03)


# ---------------------------------------------------------------------------
# modulation norm

def test_modulation_norm_basics(bp2, field2):
    assert modulation_norm(LatticeField.zeros(2, 8.0, 32), bp2, 2, 2, 0) == 0
    for c in (-3.0, 0.5, 7.0):
        assert modulation_norm(field2 * c, bp2, 3, 2, 1) == pytest.approx(abs(c) * modulation_norm(field2, bp2, 3, 2, 1),
                                                                       rel=1e-12)
    with pytest.raises(ValueError):
        modulation_norm(field2, bp2, 0.5, 2, 0)
    assert modulation_norm(field2, bp2, 2, math.inf, 0) <= modulation_norm(field2, bp2, 2, 2, 0)


def test_modulation_l2_identity_and_equivalence(bp2, field2):
    tab = bp2.axis_table(8.0, 32)
    s1 = np.sum(tab ** 2, axis=0)
    weight = s1[:, None] * s1[None, :]
    exact = math.sqrt(field2.volume * np.sum(np.abs(field2.spectrum) ** 2 * weight))
    m = modulation_norm(field2, bp2, 2, 2, 0)
    assert m == pytest.approx(exact, rel=1e-10)
    l2 = field2.lp_norm(2)
    # 1/2 <= sum_k psi_k^2 <= 1 per axis
    assert 2 ** (-2 / 2) * l2 <= m <= l2


@pytest.mark.xfail(strict=True, reason="M^{2,2} and L^2 are equivalent, not equal within 2%; see the decisions ledger")
def test_modulation_l2_within_two_percent(bp2, field2):
    assert modulation_norm(field2, bp2, 2, 2, 0) == pytest.approx(field2.lp_norm(2), rel=0.02)


def test_modulation_norm_of_a_constant():
    bp = build_block_partition(3, 2)
    f = LatticeField.from_values(np.full((16,) * 3, 2.0), 4.0)
    for p in (1.5, 2, 4):
        assert modulation_norm(f, bp, p, 2, 0) == pytest.approx(f.lp_norm(p), rel=1e-12)


# ---------------------------------------------------------------------------
# integrability of the randomized datum

def test_moment_check_on_band_limited_field(bp2, field2):
    rep = lq_moment_check(field2, 2.0, 4000, 11, bp2)
    assert rep["l2_ratio"] == pytest.approx(1.0, abs=0.03)
    for r, m in rep["moments"].items():
        assert m == pytest.approx(rep["moment_oracle"][r], rel=0.05)
    assert rep["growth_slope"] <= 0.6
    assert np.isfinite(rep["ratio"])
    assert rep["ratio_half"] == pytest.approx(rep["ratio"], rel=0.1)


def test_moment_check_subquadratic_and_zero(bp2, field2):
    rep = lq_moment_check(field2, 1.5, 1000, 2, bp2)
    assert rep["bound"]["kind"] == "modulation"
    assert 0 < rep["ratio"] < math.inf
    zero = lq_moment_check(LatticeField.zeros(2, 8.0, 32), 2.0, 1000, 0, bp2)
    assert all(v == 0 for v in zero["moments"].values())
    with pytest.raises(ValueError):
        lq_moment_check(field2, 2.0, 10, 0, bp2)


def test_tail_gate_names_the_condition(bp2, field2):
    with pytest.raises(ValueError, match=r"theta3 < 2"):
        smoothing_tail_estimate(field2, 0.0, 2.0, 2.0, 2.0, 0.1, 100, 0, bp=bp2)


def test_tail_of_zero_datum(bp2):
    rep = smoothing_tail_estimate(LatticeField.zeros(2, 8.0, 32), 0, 0, 2, 2, 0.1, 200, 0, bp=bp2)
    assert np.all(rep.norms == 0)


def test_tail_mean_square_and_scaling(bp2):
    f = band_limited_field(2, 4.0, 16, 3.0, 5)
    a = smoothing_tail_estimate(f, 0, 0, 2, 2, 0.1, 3000, 9, bp=bp2)
    assert a.mean_square == pytest.approx(a.mean_square_oracle, rel=0.03)
    assert a.b > 0 and a.dominated
    b = smoothing_tail_estimate(f * 2, 0, 0, 2, 2, 0.1, 3000, 9, bp=bp2)
    assert a.b / b.b == pytest.approx(4.0, rel=0.2)
    short = smoothing_tail_estimate(f, 0, 0, 2, 2, 0.01, 3000, 9, bp=bp2)
    assert short.C_T < a.C_T


# ---------------------------------------------------------------------------
# local theory

def test_kappa_exponents_coincide_for_quadratic_q():
    pairs = []
    for d in range(3, 8):
        for p in np.linspace(1.8, 6, 12):
            try:
                random_data_gate(d, p, 2.0)
            except ValueError:
                continue
            pairs.append((d, p))
    assert len(pairs) >= 20
    for d, p in pairs[:20]:
        a, b = kappa_exponents(d, p)
        assert a <= b
        assert tail_exponent(d, p, 2.0) == a


def test_fixed_point_exponent():
    assert fixed_point_exponent(3, 3.0) == pytest.approx(9.0)
    assert fixed_point_exponent(3, 1.8) == pytest.approx(1.2 * 2.25)


def test_random_data_gate():
    random_data_gate(3, 3.0, 1.5)
    with pytest.raises(ValueError, match=r"sqrt\(1/4 \+ 4/d\)"):
        random_data_gate(3, 1.5, 1.5)
    with pytest.raises(ValueError, match="q_c"):
        random_data_gate(3, 3.0, 1.2)
    with pytest.raises(ValueError, match="q_c"):
        random_data_gate(3, 3.0, 3.5)


@pytest.fixture(scope="module")
def bp3():
    return build_block_partition(3, 8)


def test_fixed_point_on_zero_datum():
    sol = mild_fixed_point(LatticeField.zeros(3, 4.0, 16), 3.0, 3, 2.0, 0.1, steps=16)
    assert sol.stop.value == 0.1 and sol.stop.trigger == "horizon"
    assert all(np.all(f.spectrum == 0) for f in sol.v.fields)


@pytest.mark.parametrize("q", [2.0, 1.5])
def test_fixed_point_contracts_and_is_unique(bp3, q):
    u0 = bump_with_l2(3, 4.0, 16, 10.0)
    dat = randomize(u0, bp3, 4)
    sol = mild_fixed_point(dat, 3.0, 3, q, 0.1, steps=32)
    assert sol.certificate.ok
    assert sol.uniqueness_gap < 1e-6
    assert sol.self_map_ok
    assert 0 < sol.stop.value <= 0.1
    assert sol.continuity.passed
    assert np.array_equal(sol.v.times, sol.u.times)


def test_fixed_point_rejects_gate_violation(bp3):
    with pytest.raises(ValueError, match="gate violated"):
        mild_fixed_point(LatticeField.zeros(3, 8.0, 16), 1.5, 3, 1.5, 0.1)
    assert issubclass(FixedPointFailure, RuntimeError)


# ---------------------------------------------------------------------------
# success probability

@pytest.fixture(scope="module")
def curve(bp3):
    u0 = bump_with_l2(3, 8.0, 32, 10.0)
    T = np.geomspace(1e-3, 0.3, 41)
    return success_probability(u0, 2.0, 3.0, 3, T, 200, 0, bp=bp3, scales=(1.0, 2.0))


def test_success_curve_is_monotone(curve):
    for c in curve["curves"].values():
        assert np.all(np.diff(c["P"]) <= 0)
        assert 0 <= c["P"].min() and c["P"].max() <= 1
    assert curve["kappa"] == pytest.approx(1 / 3)


def test_larger_data_fail_sooner(curve):
    P1, P2 = curve["curves"][1.0]["P"], curve["curves"][2.0]["P"]
    assert np.all(P2 <= P1)
    assert np.all(curve["curves"][2.0]["stops"] <= curve["curves"][1.0]["stops"] + 1e-15)
    scal = amplitude_scaling(curve, 1.0, 2.0)
    assert scal["points"] >= 3 and scal["ratio"] > 1


def test_success_curve_of_zero_datum(bp3):
    res = success_probability(LatticeField.zeros(3, 8.0, 16), 2.0, 3.0, 3, [0.01, 0.1], 100, 0, bp=bp3)
    assert np.all(res["P"] == 1.0)
    with pytest.raises(ValueError):
        success_probability(LatticeField.zeros(3, 8.0, 16), 2.0, 3.0, 3, [0.01], 10, 0, bp=bp3)


@pytest.fixture(scope="module")
def curve_1000(bp3):
    u0 = bump_with_l2(3, 8.0, 32, 10.0)
    T = np.geomspace(1e-3, 0.3, 41)
    return success_probability(u0, 2.0, 3.0, 3, T, 1000, 0, bp=bp3, scales=(1.0, 2.0))


def test_doubled_datum_fits_are_linear(curve_1000):
    for c in (1.0, 2.0):
        fit = curve_1000["curves"][c]["fit"]
        assert fit["slope"] < 0 and fit["r2"] >= 0.95


@pytest.mark.xfail(strict=True, reason="stopping-time tail is not Gaussian in T^(-1/p); see the decisions ledger")
def test_doubled_datum_scales_tail_constant_fourfold(curve_1000):
    s1 = curve_1000["curves"][1.0]["fit"]["slope"]
    s2 = curve_1000["curves"][2.0]["fit"]["slope"]
    assert s1 / s2 == pytest.approx(4.0, rel=0.5)

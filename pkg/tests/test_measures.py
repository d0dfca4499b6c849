"""
驱动测度：矩、合并速率、μ*、行为区间
"""
import math

import numpy as np
import pytest
from scipy import special, stats

from src.measures import (
    DegenerateMeasureError,
    MeasureSpec,
    classify,
    coalescence_sums,
    event_rates,
    merger_rate,
    moment,
    mu_star,
    nu_interval_mass,
    nu_mean_tail,
    nu_tail_mass,
    parse_measure,
    preset,
    sample_nu_truncated,
    total_rate,
)

ALPHA = 0.001


# ---------- 构造 ----------

def test_beta_two_is_kingman_atom():
    m = MeasureSpec.beta(2.0)
    assert m.is_kingman
    assert m == preset("kingman")


@pytest.mark.parametrize("alpha", [0.0, -1.0, 2.5])
def test_beta_rejects_out_of_range(alpha):
    with pytest.raises(ValueError):
        MeasureSpec.beta(alpha)


def test_atoms_merge_and_validate():
    m = MeasureSpec.from_atoms([(0.5, 0.1), (0.5, 0.2), (0.0, 1.0)])
    assert m.atoms == ((0.0, 1.0), (0.5, pytest.approx(0.3)))
    with pytest.raises(ValueError):
        MeasureSpec.from_atoms([(1.0, 1.0)])
    with pytest.raises(ValueError):
        MeasureSpec.from_atoms([(0.5, 0.0)])


def test_density_rejects_negative_values():
    with pytest.raises(ValueError):
        MeasureSpec.from_density([0.0, 1.0], [[0.5, -1.0]])


def test_parse_density_matches_preset(x2):
    assert parse_measure("density", "0:1:0,0,1") == x2
    assert x2.total_mass == pytest.approx(1.0 / 3.0)


def test_parse_atoms_and_unknown_kind():
    m = parse_measure("atoms", "0:1,0.5:0.2")
    assert m.atoms == ((0.0, 1.0), (0.5, 0.2))
    with pytest.raises(ValueError):
        parse_measure("gamma", "1")


def test_beta_preset_name():
    assert preset("beta-0.5") == MeasureSpec.beta(0.5)


# ---------- 矩 ----------

def test_total_mass_of_beta_is_one():
    assert moment(MeasureSpec.beta(1.3), 0).value == pytest.approx(1.0, abs=1e-12)


def test_negative_moments_of_x2(x2):
    assert moment(x2, -2).value == pytest.approx(1.0, rel=1e-10)
    assert moment(x2, -1).value == pytest.approx(0.5, rel=1e-10)


def test_beta_half_moment_minus_one(beta_half):
    # B(1/2, 1/2) / B(3/2, 1/2) = π / (π/2)
    mu = moment(beta_half, -1)
    assert mu.is_finite
    assert mu.value == pytest.approx(2.0, rel=1e-10)
    assert not moment(beta_half, -2).is_finite


def test_atom_at_zero_gives_infinite_negative_moments(kingman):
    assert not moment(kingman, -1).is_finite
    assert str(moment(kingman, -2)) == "inf"


def test_moment_rejects_low_order(uniform):
    with pytest.raises(ValueError):
        moment(uniform, -3)


# ---------- 合并速率 ----------

def test_uniform_rates_closed_form(uniform):
    assert merger_rate(uniform, 2, 2) == pytest.approx(1.0)
    assert merger_rate(uniform, 3, 2) == pytest.approx(0.5)
    assert merger_rate(uniform, 3, 3) == pytest.approx(0.5)
    # λ_{n,k} = (k-2)! (n-k)! / (n-1)!
    n, k = 7, 4
    expected = math.factorial(k - 2) * math.factorial(n - k) / math.factorial(n - 1)
    assert merger_rate(uniform, n, k) == pytest.approx(expected, rel=1e-12)


def test_kingman_rates(kingman):
    assert merger_rate(kingman, 5, 2) == 1.0
    assert merger_rate(kingman, 5, 3) == 0.0
    for n in range(2, 12):
        assert total_rate(kingman, n) == pytest.approx(n * (n - 1) / 2)


def test_uniform_total_rate_is_n_minus_one(uniform):
    for n in range(2, 30):
        assert total_rate(uniform, n) == pytest.approx(n - 1, rel=1e-10)


@pytest.mark.parametrize("m", [
    preset("kingman"),
    preset("uniform"),
    preset("x2"),
    MeasureSpec.beta(0.5),
    MeasureSpec.beta(1.5),
    MeasureSpec.from_atoms([(0.0, 0.5), (0.3, 0.25), (0.8, 0.25)]),
    MeasureSpec.from_density([0.0, 0.5, 1.0], [[1.0], [0.0, 2.0]]),
])
def test_rate_consistency_identity(m):
    for i in range(2, 21):
        for k in range(2, i + 1):
            lhs = merger_rate(m, i, k)
            rhs = merger_rate(m, i + 1, k) + merger_rate(m, i + 1, k + 1)
            assert abs(lhs - rhs) <= 1e-9, (i, k, lhs, rhs)


def test_event_rates_match_merger_rates():
    m = MeasureSpec.beta(1.2)
    rates = event_rates(m, 9)
    expected = [special.comb(9, k) * merger_rate(m, 9, k) for k in range(2, 10)]
    np.testing.assert_allclose(rates, expected, rtol=1e-10)
    assert not rates.flags.writeable


def test_merger_rate_preconditions(uniform):
    with pytest.raises(ValueError):
        merger_rate(uniform, 3, 4)
    with pytest.raises(ValueError):
        merger_rate(uniform, 3, 1)


# ---------- ν 的尾部 ----------

def test_uniform_nu_masses(uniform):
    assert nu_tail_mass(uniform, 0.25) == pytest.approx(3.0)
    assert nu_interval_mass(uniform, 0.25, 0.5) == pytest.approx(2.0)
    assert nu_mean_tail(uniform, 0.5) == pytest.approx(math.log(2.0), rel=1e-9)


def test_x2_nu_mass_is_lebesgue(x2):
    assert nu_tail_mass(x2, 0.1) == pytest.approx(0.9)
    assert nu_mean_tail(x2, 0.1) == pytest.approx((1.0 - 0.01) / 2.0)


def test_atoms_nu_mass():
    m = MeasureSpec.from_atoms([(0.0, 1.0), (0.5, 0.2)])
    assert nu_tail_mass(m, 0.25) == pytest.approx(0.8)
    assert nu_tail_mass(m, 0.6) == 0.0


@pytest.mark.parametrize("m", [
    preset("kingman"),
    preset("uniform"),
    preset("x2"),
    MeasureSpec.beta(0.5),
    MeasureSpec.beta(1.5),
    MeasureSpec.from_atoms([(0.0, 0.5), (0.3, 0.2), (0.7, 0.3)]),
])
def test_nu_tail_mass_is_nonincreasing(m):
    grid = np.geomspace(0.9, 1e-3, 40)
    masses = [nu_tail_mass(m, eps) for eps in grid]
    assert all(b >= a for a, b in zip(masses, masses[1:]))


def test_truncated_samples_stay_above_eps(beta_half, rng):
    draws = sample_nu_truncated(beta_half, 0.01, rng, size=2000)
    assert np.all(draws > 0.01) and np.all(draws < 1.0)


@pytest.mark.statistical
def test_truncated_uniform_samples_follow_cdf(uniform, rng):
    eps = 0.1
    draws = sample_nu_truncated(uniform, eps, rng, size=20000)

    def cdf(x):
        return (1.0 / eps - 1.0 / x) / (1.0 / eps - 1.0)

    _, p_value = stats.kstest(draws, cdf)
    assert p_value > ALPHA, f"KS p={p_value:.4g}"


@pytest.mark.statistical
def test_density_sampler_follows_cdf(rng):
    m = MeasureSpec.from_density([0.0, 1.0], [[0.0, 0.0, 1.0]])
    eps = 0.2
    draws = sample_nu_truncated(m, eps, rng, size=2000)
    _, p_value = stats.kstest(draws, "uniform", args=(eps, 1.0 - eps))
    assert p_value > ALPHA, f"KS p={p_value:.4g}"


# ---------- μ* ----------

def test_kingman_coalescence_sums(kingman):
    gammas = coalescence_sums(kingman, 50)
    expected = [i * (i - 1) / 2 for i in range(2, 51)]
    np.testing.assert_allclose(gammas, expected, rtol=1e-12)


def test_coalescence_sums_match_direct_sum():
    m = MeasureSpec.beta(1.5)
    gammas = coalescence_sums(m, 12)
    for i in (2, 5, 12):
        direct = math.fsum((k - 1) * r for k, r in zip(range(2, i + 1), event_rates(m, i)))
        assert gammas[i - 2] == pytest.approx(direct, rel=1e-9)


def test_kingman_mu_star_is_two(kingman):
    star = mu_star(kingman)
    assert star.is_finite
    assert abs(star.value - 2.0) <= 1e-6


def test_beta_mu_star_finite_and_infinite(beta_half):
    star = mu_star(MeasureSpec.beta(1.5))
    assert star.is_finite
    assert star.diagnostics["tail_estimate"] > 0.0
    assert not mu_star(beta_half).is_finite


def test_mu_star_null_measure_is_degenerate():
    null = MeasureSpec.from_density([0.0, 1.0], [[0.0]])
    with pytest.raises(DegenerateMeasureError):
        mu_star(null)


def test_mu_star_rejects_small_truncation(kingman):
    with pytest.raises(ValueError):
        mu_star(kingman, i_max=5)


# ---------- 行为区间 ----------

@pytest.mark.parametrize("m, label", [
    (MeasureSpec.beta(0.25), "B"),
    (MeasureSpec.beta(0.5), "B"),
    (MeasureSpec.beta(0.75), "B"),
    (MeasureSpec.beta(1.0), "C"),
    (MeasureSpec.beta(1.25), "D"),
    (MeasureSpec.beta(1.5), "D"),
    (MeasureSpec.beta(1.9), "D"),
    (preset("kingman"), "D"),
    (preset("x2"), "A"),
])
def test_regime_table(m, label):
    assert classify(m).label == label


@pytest.mark.parametrize("alpha", [round(0.1 * k, 1) for k in range(1, 20)])
def test_beta_grid_regimes(alpha):
    expected = "B" if alpha < 1.0 else ("C" if alpha == 1.0 else "D")
    assert classify(MeasureSpec.beta(alpha)).label == expected


def test_behaviour_predicates(beta_half):
    behaviour = classify(beta_half)
    assert behaviour.predicates == (True, False, False)
    assert "μ^-1" in behaviour.description


def test_uniform_moments(uniform):
    assert moment(uniform, 1).value == pytest.approx(0.5)
    assert not moment(uniform, -1).is_finite
    assert moment(preset("kingman"), 0).value == 1.0


def test_single_atom_sampler(rng):
    m = MeasureSpec.from_atoms([(0.5, 1.0)])
    assert np.all(sample_nu_truncated(m, 0.25, rng, size=50) == 0.5)
    with pytest.raises(ValueError):
        sample_nu_truncated(m, 0.75, rng)

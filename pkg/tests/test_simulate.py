import math

import numpy as np
import pytest
from scipy import stats

from accperc.exact import mean_Z, psi, second_moment_Z
from accperc.gfsolve import survival_prob
from accperc.numerics import DomainError
from accperc.simulate import (
    BranchingConfig,
    PopulationBatch,
    brute_force_tree,
    estimate_survival,
    resolve_threads,
    sample_counts,
    sample_poisson_counts,
    sample_poisson_decreasing,
    sample_population,
    tilted_lower_bounds,
)
from accperc.stats import mean_and_se, two_sample_chisquare


def within_3se(sample, target):
    m, se = mean_and_se(sample)
    return abs(m - target) <= 3 * se


# --- config --------------------------------------------------------------------------


@pytest.mark.parametrize("kw", [
    dict(N=0, k=2), dict(N=2, k=0), dict(N=2, k=2, root_fitness=1.5),
    dict(N=2, k=2, window=(0.5, 0.2)), dict(N=2, k=2, level_lower_bounds=(0.1,)),
    dict(N=2, k=2, population_cap=0),
])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        BranchingConfig(**kw)


def test_resolve_threads():
    assert resolve_threads(3) == 3
    assert resolve_threads("auto") >= 1
    assert resolve_threads(None) >= 1
    with pytest.raises(DomainError):
        resolve_threads(0)


# --- sample_population ---------------------------------------------------------------


def test_first_generation_from_root_zero_is_full():
    for r in range(20):
        s = sample_population(BranchingConfig(3, 1, seed=5), r)
        assert list(s.counts_per_generation) == [1, 3]
        assert s.front_fitnesses.size == 3


def test_front_fitnesses_increase_from_root():
    s = sample_population(BranchingConfig(4, 3, root_fitness=0.2, seed=1), 0)
    assert s.front_fitnesses.size == s.final_count
    assert np.all(s.front_fitnesses > 0.2)


def test_mean_and_second_moment_2_2():
    z = sample_counts(BranchingConfig(2, 2, seed=11), 100_000).final.astype(float)
    assert within_3se(z, mean_Z(2, 2).mean)
    assert within_3se(z ** 2, second_moment_Z(2, 2).second_moment)


def test_sample_population_matches_batch_row():
    cfg = BranchingConfig(3, 4, root_fitness=0.1, seed=77)
    batch = sample_counts(cfg, 50)
    for r in (0, 17, 49):
        np.testing.assert_array_equal(sample_population(cfg, r).counts_per_generation, batch.counts[r])


@pytest.mark.parametrize("threads", [1, 4, 8])
def test_counts_independent_of_thread_count(threads):
    cfg = BranchingConfig(3, 5, seed=2024)
    ref = sample_counts(cfg, 3000, threads=1)
    got = sample_counts(cfg, 3000, threads=threads)
    np.testing.assert_array_equal(ref.counts, got.counts)
    est1 = estimate_survival(cfg, 3000, threads=1)
    est = estimate_survival(cfg, 3000, threads=threads)
    assert est1 == est


def test_truncation_is_flagged_and_excluded():
    cfg = BranchingConfig(10, 6, population_cap=50, seed=3)
    s = sample_population(cfg, 0)
    assert s.truncated
    assert s.counts_per_generation[-1] > 50
    assert s.front_fitnesses.size == 0
    batch = sample_counts(cfg, 20)
    assert batch.truncated.all()
    assert batch.final.size == 0


def test_window_shift_invariance():
    # Z_{N,k}(a,b) from root a+x has the law of Z_{N,k}(0,b-a) from root x
    a, b, x = 0.3, 0.9, 0.05
    z1 = sample_counts(BranchingConfig(3, 4, root_fitness=a + x, window=(a, b), seed=1), 40_000).final
    z2 = sample_counts(BranchingConfig(3, 4, root_fitness=x, window=(0.0, b - a), seed=2), 40_000).final
    assert two_sample_chisquare(z1, z2).pvalue > 0.01
    assert within_3se(z1.astype(float), 81 * (b - a - x) ** 4 / 24)


@pytest.mark.parametrize("N,k,eps", [(3, 3, 0.2), (4, 4, 0.0), (5, 3, 0.5)])
def test_tilted_mean(N, k, eps):
    cfg = BranchingConfig(N, k, level_lower_bounds=tilted_lower_bounds(k, eps), seed=8)
    z = sample_counts(cfg, 100_000).final.astype(float)
    assert within_3se(z, N ** k * psi(k, k, eps))


# --- estimate_survival -------------------------------------------------------------------


def test_survival_k1_is_one():
    for N in (1, 2, 7):
        est = estimate_survival(BranchingConfig(N, 1, seed=1), 500)
        assert est.p_hat == 1.0 and est.ci_halfwidth_95 == 0.0


def test_survival_2_2():
    est = estimate_survival(BranchingConfig(2, 2, seed=99), 100_000)
    assert est.contains(8 / 9)
    assert est.ci_halfwidth_95 == pytest.approx(1.96 * math.sqrt(est.p_hat * (1 - est.p_hat) / 100_000))


def test_survival_critical_small_N_band():
    N = 10
    k = int(math.floor(math.e * N))
    est = estimate_survival(BranchingConfig(N, k, seed=4), 2000)
    assert est.contains(survival_prob(N, k))
    # N^{-3/2 +- 1/2}: a loose desk-scale band around the critical order
    assert N ** -2.0 <= est.p_hat <= N ** -1.0


def test_survival_matches_population_nonextinction():
    cfg = BranchingConfig(3, 4, root_fitness=0.1, seed=12)
    est = estimate_survival(cfg, 20_000)
    z = sample_counts(BranchingConfig(3, 4, root_fitness=0.1, seed=13), 20_000).final
    p2 = float(np.mean(z > 0))
    assert abs(est.p_hat - p2) < 3 * math.sqrt(2 * p2 * (1 - p2) / 20_000)


# --- Poisson decreasing process -------------------------------------------------------


def test_poisson_root_zero_dies():
    s = sample_poisson_decreasing(5.0, 4, 0.0, seed=1)
    assert list(s.counts_per_generation) == [1, 0, 0, 0, 0]


def test_poisson_first_generation_law():
    batch = sample_poisson_counts(4.0, 1, 0.5, 100_000, seed=3)
    z = batch.counts[:, 1]
    assert within_3se(z.astype(float), 2.0)
    top = 9
    obs = np.bincount(np.minimum(z, top), minlength=top + 1)
    pmf = stats.poisson.pmf(np.arange(top), 2.0)
    exp = np.append(pmf, 1 - pmf.sum()) * z.size
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_poisson_fronts_decrease():
    s = sample_poisson_decreasing(6.0, 3, 0.9, seed=4, replicate=2)
    assert np.all(s.front_fitnesses < 0.9)


def test_poisson_mean_generation_k():
    # E[D_k] = (Lambda x)^k / k!
    lam, x, k = 5.0, 0.8, 3
    z = sample_poisson_counts(lam, k, x, 100_000, seed=6).counts[:, k].astype(float)
    assert within_3se(z, (lam * x) ** k / math.factorial(k))


# --- brute force ---------------------------------------------------------------------


def test_brute_force_2_2():
    z = brute_force_tree(2, 2, 0.0, 100_000, seed=5)
    assert within_3se(z.astype(float), 2.0)
    p = float(np.mean(z >= 1))
    assert abs(p - 8 / 9) <= 1.96 * math.sqrt(p * (1 - p) / z.size)


def test_brute_force_budget():
    with pytest.raises(DomainError):
        brute_force_tree(5, 6, 0.0, 1)


def test_brute_force_vs_branching_3_3():
    z1 = brute_force_tree(3, 3, 0.0, 100_000, seed=21)
    z2 = sample_counts(BranchingConfig(3, 3, seed=22), 100_000).final
    assert two_sample_chisquare(z1, z2).pvalue > 0.01


def test_brute_force_thread_independent():
    a = brute_force_tree(2, 5, 0.3, 5000, seed=1, threads=1)
    b = brute_force_tree(2, 5, 0.3, 5000, seed=1, threads=4)
    np.testing.assert_array_equal(a, b)


def test_population_batch_final_excludes_truncated():
    counts = np.array([[1, 2, 3], [1, 5, -1]])
    b = PopulationBatch(counts, np.array([False, True]), 0)
    np.testing.assert_array_equal(b.final, [3])
    assert b.replicates == 2

from types import SimpleNamespace

import numpy as np
import pytest

from crnsearch.encoding import encode, genome_bounds
from crnsearch.evolution import (
    DEConfig,
    LRUCache,
    NetworkObjective,
    choose_donors,
    initialize,
    make_offspring,
    make_offspring_batch,
    mutate_control,
    rescore,
    run,
    step,
)
from crnsearch.regression import RegressionData


class ConstantObjective:
    """Every genome scores the same; used for stagnation and plumbing checks."""

    def __init__(self, S=3, q_max=2, value=1.0):
        self.bounds = genome_bounds(S, q_max)
        self._ev = SimpleNamespace(value=value, fit=SimpleNamespace(q=1), verdict=SimpleNamespace(valid=True))

    def evaluate(self, genome):
        return self._ev


class SphereObjective:
    def __init__(self, S=4, q_max=2):
        self.bounds = genome_bounds(S, q_max)
        self.center = np.full(self.bounds[0].size, S / 2)

    def evaluate(self, genome):
        v = float(np.sum((genome - self.center) ** 2))
        return SimpleNamespace(value=v, fit=SimpleNamespace(q=1), verdict=SimpleNamespace(valid=True))


class FixedRandom:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def random(self, shape):
        return self.values.reshape(shape)


def test_config_defaults_and_validation():
    c = DEConfig()
    assert (c.population_size, c.generations, c.stagnation_limit, c.q_max) == (400, 2000, 500, 10)
    assert (c.tau1, c.tau2, c.f_lower, c.f_upper) == (0.1, 0.1, 0.1, 0.9)
    with pytest.raises(ValueError):
        DEConfig(population_size=3)
    with pytest.raises(ValueError):
        DEConfig(tau1=1.5)


def test_initialize_shapes_and_ranges():
    cfg = DEConfig(population_size=400, q_max=10)
    bounds = genome_bounds(10, 10)
    pop = initialize(cfg, bounds, np.random.default_rng(0), ConstantObjective(10, 10))
    assert pop.genomes.shape == (400, 50)
    assert pop.genomes.min() > -0.5 and pop.genomes.max() < 10.5
    assert np.all((pop.F >= 0.1) & (pop.F <= 1.0))
    assert np.all((pop.CR >= 0) & (pop.CR <= 1))
    assert abs(pop.F.mean() - 0.55) < 0.05
    again = initialize(cfg, bounds, np.random.default_rng(0), ConstantObjective(10, 10))
    np.testing.assert_array_equal(pop.genomes, again.genomes)


def test_mutate_control_rules():
    cfg = DEConfig()
    # a1, a2, a3, a4
    assert mutate_control(0.7, 0.3, FixedRandom([0.9, 0.5, 0.9, 0.5]), cfg) == (0.7, 0.3)
    F, CR = mutate_control(0.7, 0.3, FixedRandom([0.5, 0.05, 0.8, 0.5]), cfg)
    assert F == pytest.approx(0.55) and CR == 0.3
    F, CR = mutate_control(0.7, 0.3, FixedRandom([0.5, 0.5, 0.8, 0.05]), cfg)
    assert F == 0.7 and CR == pytest.approx(0.8)


def test_mutation_frequency():
    rng = np.random.default_rng(2024)
    F = np.full(10**6, 2.0)  # outside the resampling range, so every change is visible
    F_new, _ = mutate_control(F, np.zeros_like(F), rng)
    freq = np.mean(F_new != F)
    assert abs(freq - 0.1) < 0.001
    assert F_new[F_new != F].min() >= 0.1 and F_new[F_new != F].max() <= 1.0


def test_donors_distinct():
    rng = np.random.default_rng(0)
    for P in (4, 5, 50):
        targets = np.arange(P)
        for _ in range(20):
            d = choose_donors(targets, P, rng)
            allidx = np.column_stack([targets, d])
            assert all(len(set(row)) == 4 for row in allidx.tolist())


def test_offspring_full_crossover_is_mutant():
    genomes = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 0.0]])
    lo, hi = np.full(2, -10.0), np.full(2, 10.0)
    child = make_offspring(3, genomes, 0.5, 1.0, np.random.default_rng(1), (lo, hi))
    # the donors are {0, 1, 2} in some order
    import itertools

    mutants = [genomes[a] + 0.5 * (genomes[b] - genomes[c]) for a, b, c in itertools.permutations([0, 1, 2])]
    assert any(np.allclose(child, m) for m in mutants)
    assert any(np.allclose(m, [2.0, 2.0]) for m in mutants)


def test_offspring_zero_cr_changes_exactly_one_index():
    rng = np.random.default_rng(3)
    genomes = rng.random((6, 8)) * 3
    bounds = genome_bounds(3, 8 // 5 + 1)
    bounds = (bounds[0][:8], bounds[1][:8])
    for i in range(6):
        child = make_offspring(i, genomes, 0.8, 0.0, rng, bounds)
        assert np.sum(child != genomes[i]) == 1


def test_offspring_without_forced_index_can_equal_parent():
    rng = np.random.default_rng(3)
    genomes = rng.random((6, 8)) * 3
    lo, hi = np.full(8, -0.5), np.full(8, 3.5)
    child = make_offspring(0, genomes, 0.8, 0.0, rng, (lo, hi), forced=False)
    np.testing.assert_array_equal(child, genomes[0])


def test_offspring_truncated_to_bounds():
    lo, hi = genome_bounds(3, 1)
    genomes = np.array([[0.0] * 5, [3.4] * 5, [-0.4] * 5, [3.4] * 5])
    rng = np.random.default_rng(0)
    clipped = 0
    for _ in range(30):
        child = make_offspring_batch(np.array([0]), genomes, np.array([1.0]), np.array([1.0]), rng, (lo, hi))[0]
        assert np.all(child >= lo) and np.all(child <= hi)
        clipped += np.all((child == hi) | (child == lo))
    # donor orders giving 3.4 + (3.4 + 0.4) or -0.4 - 3.8 leave the box
    assert clipped > 0


def test_step_accepts_ties():
    obj = ConstantObjective()
    cfg = DEConfig(population_size=6, q_max=2, seed=0)
    rng = np.random.default_rng(0)
    pop = initialize(cfg, obj.bounds, rng, obj)
    nxt = step(pop, cfg, obj, rng)
    # equal scores: every offspring replaces its parent
    assert np.all(np.any(nxt.genomes != pop.genomes, axis=1))
    assert nxt.generation == pop.generation + 1


def test_step_rejects_worse_offspring():
    class Increasing:
        bounds = genome_bounds(3, 2)
        calls = 0

        def evaluate(self, g):
            Increasing.calls += 1
            return SimpleNamespace(value=float(Increasing.calls), fit=SimpleNamespace(q=1),
                                   verdict=SimpleNamespace(valid=True))

    obj = Increasing()
    cfg = DEConfig(population_size=5, q_max=2)
    rng = np.random.default_rng(0)
    pop = initialize(cfg, obj.bounds, rng, obj)
    nxt = step(pop, cfg, obj, rng)
    np.testing.assert_array_equal(nxt.genomes, pop.genomes)
    np.testing.assert_array_equal(nxt.F, pop.F)
    np.testing.assert_array_equal(nxt.CR, pop.CR)


def test_stagnation_stops_at_generation_501():
    res = run(DEConfig(population_size=4, generations=2000, stagnation_limit=500, q_max=2), ConstantObjective())
    assert res.population.generation == 501
    assert res.stopped_early


def test_generation_cap():
    res = run(DEConfig(population_size=8, generations=25, q_max=2), SphereObjective())
    assert res.population.generation == 25 and len(res.history) == 25


def test_monotone_best_and_control_bounds_on_real_objective(case1_noisy):
    case, experiments, smoothed = case1_noisy
    obj = NetworkObjective(RegressionData(smoothed), 10)
    seen = []

    def check(pop, stats, unchanged):
        assert np.all((pop.F >= 0.1) & (pop.F <= 1.0))
        assert np.all((pop.CR >= 0) & (pop.CR <= 1))
        lo, hi = obj.bounds
        assert np.all(pop.genomes >= lo) and np.all(pop.genomes <= hi)
        seen.append(stats.best_sic_d)

    run(DEConfig(population_size=30, generations=100, seed=4), obj, callback=check)
    assert len(seen) == 100
    assert all(b <= a for a, b in zip(seen, seen[1:]))


def test_determinism(case1_noisy):
    case, experiments, smoothed = case1_noisy
    data = RegressionData(smoothed)
    cfg = DEConfig(population_size=20, generations=30, seed=11)
    a = run(cfg, NetworkObjective(data, 10))
    b = run(cfg, NetworkObjective(data, 10, cache=False))
    np.testing.assert_array_equal(a.population.genomes, b.population.genomes)
    assert a.best_history == b.best_history


def test_resume_is_bit_identical(case1_noisy):
    case, experiments, smoothed = case1_noisy
    obj = NetworkObjective(RegressionData(smoothed), 10)
    full = run(DEConfig(population_size=12, generations=20, seed=2), obj)
    rng = np.random.default_rng(2)
    first = run(DEConfig(population_size=12, generations=10, seed=2), obj, rng)
    state = rng.bit_generator.state
    rng2 = np.random.default_rng(0)
    rng2.bit_generator.state = state
    p = first.population
    resumed = rescore(p.genomes, p.F, p.CR, p.generation, obj)
    rest = run(DEConfig(population_size=12, generations=20, seed=2), obj, rng2, population=resumed,
               unchanged=first.unchanged)
    np.testing.assert_array_equal(rest.population.genomes, full.population.genomes)


def test_objective_truth_genome(case1_noisy):
    case, experiments, smoothed = case1_noisy
    obj = NetworkObjective(RegressionData(smoothed), 10)
    genome = encode(case.truth_network, 10).astype(float)
    ev = obj.evaluate(genome)
    assert ev.network.canonical_key() == case.truth_network.canonical_key() and ev.verdict.valid
    assert obj(genome) == ev.value
    fits = obj.fits
    obj.evaluate(genome + 0.2)
    assert obj.fits == fits


def test_lru_cache_eviction():
    c = LRUCache(2)
    c.put("a", 1)
    c.put("b", 2)
    assert c.get("a") == 1
    c.put("c", 3)
    assert c.get("b") is None and c.get("a") == 1 and len(c) == 2

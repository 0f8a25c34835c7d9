"""Self-adaptive differential evolution (DE/rand/1/bin, jDE control updates).

Genomes stay real-valued; they are rounded only when the objective decodes
them into trial networks. Each individual carries its own scale factor F and
crossover rate CR, which are resampled with small probability before every
mutation and inherited only when the offspring wins its selection contest.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .encoding import decode, genome_bounds, round_genome
from .network import ReactionNetwork
from .regression import RateFit, RegressionData
from .scoring import Score, sic_d
from .validity import ValidityVerdict, assess, prepare_conservation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DEConfig:
    population_size: int = 400
    generations: int = 2000
    stagnation_limit: int = 500
    q_max: int = 10
    tau1: float = 0.1
    tau2: float = 0.1
    f_lower: float = 0.1
    f_upper: float = 0.9
    forced_crossover: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be at least 4")
        if self.q_max < 1 or self.generations < 1 or self.stagnation_limit < 1:
            raise ValueError("q_max, generations and stagnation_limit must be positive")
        for name in ("tau1", "tau2"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 < self.f_lower and self.f_upper > 0:
            raise ValueError("F bounds must be positive")


@dataclass(frozen=True)
class Evaluation:
    """Objective outcome for one decoded trial network."""

    fit: RateFit
    verdict: ValidityVerdict
    score: Score

    @property
    def value(self) -> float:
        return self.score.value

    @property
    def network(self) -> ReactionNetwork:
        return self.fit.network


class LRUCache:
    def __init__(self, maxsize: int):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()

    def get(self, key):
        value = self._data.get(key)
        if value is not None:
            self._data.move_to_end(key)
        return value

    def put(self, key, value) -> None:
        self._data[key] = value
        if len(self._data) > self.maxsize:
            self._data.popitem(last=False)

    def __len__(self) -> int:
        return len(self._data)


class NetworkObjective:
    """SIC_D of a genome: round, decode, prune-and-fit, assess validity.

    Results are cached by the rounded integer vector and, on a miss, by the
    decoded network, since many genomes share a network.
    """

    def __init__(
        self,
        data: RegressionData,
        q_max: int,
        conservation=None,
        cache: bool = True,
        cache_size: int = 100_000,
    ):
        self.data = data
        self.species_count = data.species_count
        self.q_max = q_max
        self.conservation = conservation
        self._prepared = prepare_conservation(conservation)
        self.cache = cache
        self._by_genome = LRUCache(2 * cache_size)
        self._by_network = LRUCache(cache_size)
        self.fits = 0

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return genome_bounds(self.species_count, self.q_max)

    def evaluate(self, genome: np.ndarray) -> Evaluation:
        ints = round_genome(genome, self.species_count)
        key = ints.astype(np.int8).tobytes()
        if self.cache:
            hit = self._by_genome.get(key)
            if hit is not None:
                return hit
        result = self.evaluate_network(decode(ints, self.species_count, self.q_max).network)
        if self.cache:
            self._by_genome.put(key, result)
        return result

    def evaluate_network(self, network: ReactionNetwork) -> Evaluation:
        nkey = network.canonical_key()
        if self.cache:
            hit = self._by_network.get(nkey)
            if hit is not None:
                return hit
        fit = self.data.fit(network)
        self.fits += 1
        verdict = assess(fit.network, self._prepared, self.q_max)
        result = Evaluation(fit, verdict, sic_d(fit, self.data.n_rows, verdict.alpha))
        if self.cache:
            self._by_network.put(nkey, result)
        return result

    def __call__(self, genome: np.ndarray) -> float:
        return self.evaluate(genome).value


@dataclass
class Population:
    genomes: np.ndarray  # (P, 5 q_max)
    F: np.ndarray
    CR: np.ndarray
    evaluations: list
    generation: int = 1

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.evaluations])

    def __len__(self) -> int:
        return self.genomes.shape[0]

    def best_index(self) -> int:
        return int(np.argmin(self.values))

    def best(self) -> Evaluation:
        return self.evaluations[self.best_index()]

    def individual(self, i: int) -> "Individual":
        return Individual(self.genomes[i].copy(), float(self.F[i]), float(self.CR[i]), self.evaluations[i])


@dataclass(frozen=True)
class Individual:
    genome: np.ndarray
    F: float
    CR: float
    evaluation: Evaluation

    @property
    def score(self) -> Score:
        return self.evaluation.score


def initialize(config: DEConfig, bounds, rng: np.random.Generator, objective) -> Population:
    """Uniform genomes within bounds, F ~ U[0.1, 1], CR ~ U[0, 1], all scored."""
    lo, hi = bounds
    P = config.population_size
    genomes = lo + rng.random((P, lo.size)) * (hi - lo)
    F = rng.uniform(0.1, 1.0, size=P)
    CR = rng.uniform(0.0, 1.0, size=P)
    return Population(genomes, F, CR, [objective.evaluate(g) for g in genomes])


def mutate_control(F, CR, rng: np.random.Generator, config: DEConfig = DEConfig()):
    """jDE resampling of (F, CR); works elementwise on scalars or arrays."""
    F = np.asarray(F, dtype=float)
    CR = np.asarray(CR, dtype=float)
    a1, a2, a3, a4 = rng.random((4,) + F.shape)
    F_new = np.where(a2 < config.tau1, config.f_lower + a1 * config.f_upper, F)
    CR_new = np.where(a4 < config.tau2, a3, CR)
    if F_new.ndim == 0:
        return float(F_new), float(CR_new)
    return F_new, CR_new


def choose_donors(targets: np.ndarray, P: int, rng: np.random.Generator) -> np.ndarray:
    """Three distinct random indices per target, all different from the target."""
    keys = rng.random((targets.size, P))
    keys[np.arange(targets.size), targets] = np.inf
    picks = np.argpartition(keys, 3, axis=1)[:, :3]
    order = np.argsort(np.take_along_axis(keys, picks, axis=1), axis=1)
    return np.take_along_axis(picks, order, axis=1)


def make_offspring_batch(targets, genomes, F, CR, rng, bounds, forced: bool = True) -> np.ndarray:
    """Mutant vectors for each target index, with per-target F and CR."""
    targets = np.asarray(targets)
    P, n = genomes.shape
    donors = choose_donors(targets, P, rng)
    z1, z2, z3 = (genomes[donors[:, c]] for c in range(3))
    v = z1 + np.asarray(F)[:, None] * (z2 - z3)
    mask = rng.random((targets.size, n)) < np.asarray(CR)[:, None]
    if forced:
        mask[np.arange(targets.size), rng.integers(0, n, size=targets.size)] = True
    lo, hi = bounds
    return np.clip(np.where(mask, v, genomes[targets]), lo, hi)


def make_offspring(i: int, genomes, F: float, CR: float, rng, bounds, forced: bool = True) -> np.ndarray:
    return make_offspring_batch(np.array([i]), genomes, np.array([F]), np.array([CR]), rng, bounds, forced)[0]


def step(population: Population, config: DEConfig, objective, rng: np.random.Generator) -> Population:
    """One synchronous generation: every individual competes with its offspring."""
    P = len(population)
    F_new, CR_new = mutate_control(population.F, population.CR, rng, config)
    offspring = make_offspring_batch(
        np.arange(P), population.genomes, F_new, CR_new, rng, objective.bounds, config.forced_crossover
    )
    genomes = population.genomes.copy()
    F, CR = population.F.copy(), population.CR.copy()
    evaluations = list(population.evaluations)
    for i in range(P):
        ev = objective.evaluate(offspring[i])
        if ev.value <= evaluations[i].value:
            genomes[i], F[i], CR[i], evaluations[i] = offspring[i], F_new[i], CR_new[i], ev
    return Population(genomes, F, CR, evaluations, population.generation + 1)


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_sic_d: float
    best_q: int
    valid_fraction: float
    mean_F: float
    mean_CR: float

    @classmethod
    def of(cls, pop: Population) -> "GenerationStats":
        best = pop.best()
        valid = np.mean([e.verdict.valid for e in pop.evaluations])
        return cls(pop.generation, best.value, best.fit.q, float(valid), float(pop.F.mean()), float(pop.CR.mean()))


@dataclass
class RunResult:
    population: Population
    history: list[GenerationStats] = field(default_factory=list)
    stopped_early: bool = False
    unchanged: int = 0

    @property
    def best_history(self) -> list[float]:
        return [h.best_sic_d for h in self.history]


def rescore(genomes: np.ndarray, F, CR, generation: int, objective) -> Population:
    """Population rebuilt from stored genomes and controls (checkpoint resume)."""
    genomes = np.array(genomes, dtype=float)
    return Population(genomes, np.array(F, dtype=float), np.array(CR, dtype=float),
                      [objective.evaluate(g) for g in genomes], generation)


def run(
    config: DEConfig,
    objective,
    rng: Optional[np.random.Generator] = None,
    callback: Optional[Callable[[Population, GenerationStats, int], None]] = None,
    population: Optional[Population] = None,
    unchanged: int = 0,
) -> RunResult:
    """Evolve for up to ``config.generations`` generations (the initial one counts).

    Stops early once the best value has not changed at all for
    ``config.stagnation_limit`` consecutive generations. ``population`` and
    ``unchanged`` resume from a checkpoint instead of initialising; pass the
    checkpointed ``rng`` too for a bit-identical continuation. ``callback``
    receives the population, its statistics and the stagnation counter.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    resumed = population is not None
    pop = population if resumed else initialize(config, objective.bounds, rng, objective)
    stats = GenerationStats.of(pop)
    result = RunResult(pop, [stats])
    if callback and not resumed:
        callback(pop, stats, unchanged)
    best = stats.best_sic_d
    while pop.generation < config.generations and unchanged < config.stagnation_limit:
        pop = step(pop, config, objective, rng)
        stats = GenerationStats.of(pop)
        result.history.append(stats)
        if stats.best_sic_d == best:
            unchanged += 1
        else:
            best, unchanged = stats.best_sic_d, 0
        if callback:
            callback(pop, stats, unchanged)
        if pop.generation % 100 == 0:
            log.info("generation %d best SIC_D %.4f (q=%d)", pop.generation, stats.best_sic_d, stats.best_q)
    result.stopped_early = unchanged >= config.stagnation_limit
    result.population = pop
    result.unchanged = unchanged
    return result

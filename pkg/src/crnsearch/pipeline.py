"""End-to-end orchestration: smoothing once, seeded DE runs, selection and summaries."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .evolution import DEConfig, NetworkObjective, RunResult, rescore, run
from .exceptions import ConfigError
from .io import (
    Checkpoint,
    Dataset,
    RunLog,
    load_checkpoint,
    network_to_json,
    save_checkpoint,
    write_json,
)
from .network import ConservationMatrix, ReactionNetwork
from .regression import RegressionData
from .selection import SelectionResult, compare_topology, rates_in_truth_order, select_model
from .smoothing import SmoothedExperiment, smooth_all

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    """Every user-settable value of an inference job."""

    manifest: Optional[str] = None
    species_count: Optional[int] = None
    q_max: int = 10
    population_size: int = 400
    generations: int = 2000
    stagnation_limit: int = 500
    tau1: float = 0.1
    tau2: float = 0.1
    f_lower: float = 0.1
    f_upper: float = 0.9
    forced_crossover: bool = True
    refit: bool = True
    trim: int = 4
    restarts: int = 10
    smoothing_seed: int = 0
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    conservation: Optional[list] = None
    use_conservation: bool = True
    seed: int = 0
    runs: int = 10
    top_k: int = 10
    checkpoint_every: int = 100
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.runs < 1 or self.top_k < 1 or self.checkpoint_every < 1:
            raise ConfigError("runs, top_k and checkpoint_every must be positive")
        if self.trim < 0 or self.restarts < 1:
            raise ConfigError("trim must be >= 0 and restarts >= 1")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ConfigError("integration tolerances must be positive")
        try:
            self.de_config(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def de_config(self, run_index: int) -> DEConfig:
        return DEConfig(
            population_size=self.population_size,
            generations=self.generations,
            stagnation_limit=self.stagnation_limit,
            q_max=self.q_max,
            tau1=self.tau1,
            tau2=self.tau2,
            f_lower=self.f_lower,
            f_upper=self.f_upper,
            forced_crossover=self.forced_crossover,
            seed=self.seed + run_index,
        )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def provenance(config: RunConfig) -> dict:
    """Config as embedded in artifacts; the output location is not a parameter."""
    d = config.to_json()
    d.pop("out_dir")
    return d


def dataset_digest(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for s in dataset.experiments:
        h.update(np.ascontiguousarray(s.times).tobytes())
        h.update(np.ascontiguousarray(s.measured).tobytes())
    return h.hexdigest()


def resolve_conservation(dataset: Dataset, config: RunConfig) -> Optional[ConservationMatrix]:
    """Explicit config matrix, else the manifest's, unless disabled."""
    if not config.use_conservation:
        return None
    values = config.conservation if config.conservation is not None else dataset.manifest.conservation
    if values is None:
        return None
    a = np.atleast_2d(np.array(values, dtype=float))
    if a.shape[1] != dataset.species_count:
        raise ConfigError(f"conservation matrix has {a.shape[1]} columns, expected S={dataset.species_count}")
    try:
        return ConservationMatrix(a)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def check_dataset(dataset: Dataset, config: RunConfig) -> None:
    if config.species_count is not None and config.species_count != dataset.species_count:
        raise ConfigError(f"config says S={config.species_count} but data has S={dataset.species_count}")
    for m, s in enumerate(dataset.experiments, start=1):
        if len(s) < 2 * config.trim + 6:
            raise ConfigError(f"experiment {m} has {len(s)} samples; trim {config.trim} needs >= {2 * config.trim + 6}")


def smooth_dataset(dataset: Dataset, config: RunConfig) -> list[SmoothedExperiment]:
    return smooth_all(dataset.experiments, config.trim, config.restarts, config.smoothing_seed)


def make_objective(dataset: Dataset, smoothed, config: RunConfig) -> NetworkObjective:
    data = RegressionData(smoothed, refit=config.refit)
    return NetworkObjective(data, config.q_max, resolve_conservation(dataset, config))


@dataclass
class RunOutcome:
    run_index: int
    seed: int
    result: RunResult
    selection: SelectionResult
    elapsed: float

    @property
    def generations(self) -> int:
        return self.result.population.generation


def candidates_document(outcome: RunOutcome, config: RunConfig, digest: str) -> dict:
    sel = outcome.selection
    best_d = outcome.result.population.best()
    return {
        "config": provenance(config),
        "dataset_sha256": digest,
        "run_index": outcome.run_index,
        "seed": outcome.seed,
        "generations": outcome.generations,
        "stopped_early": outcome.result.stopped_early,
        "distinct_networks": sel.distinct_networks,
        "no_solution": sel.no_solution,
        "best_sic_d": {
            "sic_d": best_d.value,
            "q": best_d.fit.q,
            "reactions": [str(r) for r in best_d.network.reactions],
        },
        "candidates": [
            dict(c.to_dict(), network=network_to_json(c.network)) for c in sel.candidates
        ],
    }


def run_once(
    config: RunConfig,
    dataset: Dataset,
    objective: NetworkObjective,
    run_index: int,
    run_dir: Optional[Path] = None,
    resume: bool = False,
) -> RunOutcome:
    """One seeded DE run plus SIC_C selection; artifacts go to ``run_dir`` if given."""
    de = config.de_config(run_index)
    rng = np.random.default_rng(de.seed)
    population, unchanged = None, 0
    ckpt_path = run_dir / "checkpoint.npz" if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        write_json(run_dir / "config.json", dict(provenance(config), run_index=run_index, run_seed=de.seed))
    if resume and ckpt_path is not None and ckpt_path.exists():
        ckpt = load_checkpoint(ckpt_path)
        population = rescore(ckpt.genomes, ckpt.F, ckpt.CR, ckpt.generation, objective)
        rng.bit_generator.state = ckpt.rng_state
        unchanged = ckpt.unchanged
        log.info("run %d resumed at generation %d", run_index, ckpt.generation)
    run_log = RunLog(run_dir / "run_log.csv", append=population is not None) if run_dir is not None else None

    def checkpoint(pop, unchanged_now):
        save_checkpoint(ckpt_path, Checkpoint(pop.genomes, pop.F, pop.CR, pop.generation,
                                              rng.bit_generator.state, unchanged_now))

    def callback(pop, stats, unchanged_now):
        if run_log is not None:
            run_log.write(stats)
            if pop.generation % config.checkpoint_every == 0:
                checkpoint(pop, unchanged_now)

    t0 = time.perf_counter()
    try:
        result = run(de, objective, rng, callback, population, unchanged)
    finally:
        if run_log is not None:
            run_log.close()
    if ckpt_path is not None:
        checkpoint(result.population, result.unchanged)
    selection = select_model(result.population, dataset.experiments, config.top_k, config.rel_tol, config.abs_tol)
    outcome = RunOutcome(run_index, de.seed, result, selection, time.perf_counter() - t0)
    if run_dir is not None:
        write_json(run_dir / "candidates.json", candidates_document(outcome, config, dataset_digest(dataset)))
        (run_dir / "summary.txt").write_text(selection_text(outcome))
        write_json(run_dir / "timing.json", {"elapsed_seconds": outcome.elapsed, "fits": objective.fits})
    log.info("run %d: %d generations, rank-1 q=%s, %.1f s", run_index, outcome.generations,
             selection.best.q if selection.best else None, outcome.elapsed)
    return outcome


def selection_text(outcome: RunOutcome) -> str:
    sel = outcome.selection
    lines = [f"run {outcome.run_index} (seed {outcome.seed}): {outcome.generations} generations, "
             f"{sel.distinct_networks} distinct networks in final population"]
    if sel.no_solution:
        lines.append("no solution: every candidate failed to integrate")
    for c in sel.candidates:
        validity = "valid" if c.verdict.valid else f"invalid ({c.verdict.reason.value})"
        lines.append(f"\nrank {c.rank}: SIC_C {c.sic_c:.4f}  SIC_D {c.sic_d:.4f}  q={c.q}  {validity}")
        lines += [f"  {r}" for r in c.network.reactions]
    return "\n".join(lines) + "\n"


@dataclass
class InferenceSummary:
    outcomes: list[RunOutcome]
    truth: Optional[ReactionNetwork] = None
    matches: list[bool] = field(default_factory=list)

    @property
    def match_count(self) -> int:
        return sum(self.matches)

    def to_json(self) -> dict:
        topologies: dict = {}
        for o in self.outcomes:
            best = o.selection.best
            key = "no solution" if best is None else " ; ".join(
                str(r.with_rate(None)) for r in best.network.sorted().reactions
            )
            topologies[key] = topologies.get(key, 0) + 1
        doc = {
            "runs": len(self.outcomes),
            "seeds": [o.seed for o in self.outcomes],
            "rank1_topologies": topologies,
            "rank1": [
                None if o.selection.best is None else {
                    "q": o.selection.best.q,
                    "sic_c": o.selection.best.sic_c,
                    "reactions": [str(r) for r in o.selection.best.network.reactions],
                }
                for o in self.outcomes
            ],
        }
        if self.truth is not None:
            doc["truth_matches"] = self.matches
            doc["topology_match_count"] = self.match_count
            doc["topology_match_rate"] = self.match_count / len(self.outcomes)
            ks = [rates_in_truth_order(o.selection.best.network, self.truth)
                  for o, ok in zip(self.outcomes, self.matches) if ok]
            if ks:
                k = np.array(ks)
                true_k = self.truth.rate_coefficients
                doc["k_statistics"] = {
                    "true": true_k,
                    "mean": k.mean(axis=0),
                    "std": k.std(axis=0),
                    "max_relative_deviation": np.max(np.abs(k / true_k - 1), axis=0),
                }
        return doc


def summarize(outcomes: Sequence[RunOutcome], truth: Optional[ReactionNetwork]) -> InferenceSummary:
    matches = []
    if truth is not None:
        matches = [o.selection.best is not None and bool(compare_topology(o.selection.best.network, truth))
                   for o in outcomes]
    return InferenceSummary(list(outcomes), truth, matches)


def infer(config: RunConfig, dataset: Dataset, out_dir: Optional[Path] = None, resume: bool = False) -> InferenceSummary:
    """Smooth once, then ``config.runs`` independent runs seeded ``seed + run_index``."""
    check_dataset(dataset, config)
    smoothed = smooth_dataset(dataset, config)
    objective = make_objective(dataset, smoothed, config)
    outcomes = []
    for i in range(config.runs):
        run_dir = None if out_dir is None else Path(out_dir) / f"run_{i + 1:02d}"
        outcomes.append(run_once(config, dataset, objective, i, run_dir, resume))
    summary = summarize(outcomes, dataset.truth_network)
    if out_dir is not None:
        write_json(Path(out_dir) / "summary.json", dict(summary.to_json(), config=provenance(config),
                                                          dataset_sha256=dataset_digest(dataset)))
    return summary


def reselect(run_dir: Path, config: RunConfig, dataset: Dataset) -> SelectionResult:
    """Selection again from a run's final checkpoint."""
    smoothed = smooth_dataset(dataset, config)
    objective = make_objective(dataset, smoothed, config)
    ckpt = load_checkpoint(Path(run_dir) / "checkpoint.npz")
    population = rescore(ckpt.genomes, ckpt.F, ckpt.CR, ckpt.generation, objective)
    return select_model(population, dataset.experiments, config.top_k, config.rel_tol, config.abs_tol)

"""Post-run model selection in concentration space.

The lowest SIC_D network of a run is not necessarily the best explanation of
the data: derivative estimation errors favour slight overfits. Every distinct
network in the final population is therefore integrated and re-scored by
SIC_C against the measured concentrations, and the lowest value wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .evolution import Evaluation, Population
from .network import Reaction, ReactionNetwork
from .scoring import sic_c
from .simulate import ExperimentSeries
from .validity import ValidityVerdict


@dataclass(frozen=True)
class CandidateReport:
    rank: int
    network: ReactionNetwork
    k: np.ndarray
    sic_d: float
    sic_c: float
    verdict: ValidityVerdict
    sse_c_by_experiment: list[float]
    sse_d: float

    @property
    def q(self) -> int:
        return len(self.network)

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "q": self.q,
            "reactions": [str(r) for r in self.network.reactions],
            "stoichiometric_matrix": self.network.stoichiometric_matrix().tolist(),
            "k": [float(v) for v in self.k],
            "sic_d": _num(self.sic_d),
            "sic_c": _num(self.sic_c),
            "sse_d": _num(self.sse_d),
            "valid": self.verdict.valid,
            "alpha": self.verdict.alpha,
            "validity_reason": self.verdict.reason.value,
            "sse_c_by_experiment": [float(v) for v in self.sse_c_by_experiment],
        }


def _num(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


@dataclass
class SelectionResult:
    candidates: list[CandidateReport]
    distinct_networks: int
    no_solution: bool = False

    @property
    def best(self) -> CandidateReport | None:
        return self.candidates[0] if self.candidates else None


def distinct_evaluations(evaluations: Sequence[Evaluation]) -> list[Evaluation]:
    """One evaluation per rectified network, in first-seen order."""
    seen: dict = {}
    for ev in evaluations:
        if len(ev.network) == 0:
            continue
        seen.setdefault(ev.network.canonical_key(), ev)
    return list(seen.values())


def select_model(
    population: Population | Sequence[Evaluation],
    experiments: Sequence[ExperimentSeries],
    top_k: int = 10,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-9,
) -> SelectionResult:
    """Rank the distinct networks of a population by SIC_C (ascending).

    Ties are broken by fewer reactions, then lower SIC_D, then structure.
    """
    evaluations = population.evaluations if isinstance(population, Population) else list(population)
    scored = []
    for ev in distinct_evaluations(evaluations):
        score, parts = sic_c(ev.network, experiments, ev.verdict.alpha, rel_tol, abs_tol)
        scored.append((score, parts, ev))
    scored.sort(key=lambda item: (item[0].value, len(item[2].network), item[2].value, item[2].network.canonical_key()))
    finite = [item for item in scored if math.isfinite(item[0].value)]
    candidates = [
        CandidateReport(
            rank=rank,
            network=ev.network,
            k=ev.fit.k.copy(),
            sic_d=ev.value,
            sic_c=score.value,
            verdict=ev.verdict,
            sse_c_by_experiment=parts,
            sse_d=ev.fit.sse_d,
        )
        for rank, (score, parts, ev) in enumerate(finite[:top_k], start=1)
    ]
    return SelectionResult(candidates, len(scored), no_solution=not candidates)


@dataclass(frozen=True)
class TopologyMatch:
    match: bool
    missing: list[Reaction] = field(default_factory=list)
    extra: list[Reaction] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.match


def compare_topology(found: ReactionNetwork, truth: ReactionNetwork) -> TopologyMatch:
    """Compare reaction sets, ignoring order and rate coefficients."""
    if found.species_count != truth.species_count:
        raise ValueError("networks have different species counts")
    found_keys = {r.key(): r for r in found.reactions}
    truth_keys = {r.key(): r for r in truth.reactions}
    missing = [truth_keys[k] for k in sorted(truth_keys.keys() - found_keys.keys())]
    extra = [found_keys[k] for k in sorted(found_keys.keys() - truth_keys.keys())]
    return TopologyMatch(not missing and not extra, missing, extra)


def rates_in_truth_order(found: ReactionNetwork, truth: ReactionNetwork) -> np.ndarray:
    """Fitted k of ``found`` rearranged to the reaction order of ``truth``."""
    by_key = {r.key(): r.rate_coefficient for r in found.reactions}
    return np.array([by_key[r.key()] for r in truth.reactions], dtype=float)

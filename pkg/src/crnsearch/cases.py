"""The three hypothetical batch-reactor networks used as benchmarks.

Network 1 (5 species, 4 reactions) and network 2 (6 species, 4 reactions,
the fourth the reverse of the third) carry no chemical information.
Network 3 (10 species, 6 reactions) has a backbone of unimolecular steps in
series and comes with a molecular-weight-ratio conservation row.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .network import ConservationMatrix, Reaction, ReactionNetwork
from .simulate import ExperimentSpec

RxnSpec = namedtuple("RxnSpec", "reactants products k")


@dataclass(frozen=True)
class CaseStudy:
    case_id: int
    truth_network: ReactionNetwork
    experiments: tuple[ExperimentSpec, ...]
    conservation: Optional[ConservationMatrix] = None
    noise_fraction: float = 0.04
    # structurally close wrong answers, kept for tests and reports
    decoys: dict = field(default_factory=dict)

    @property
    def species_count(self) -> int:
        return self.truth_network.species_count


def _network(S, rows) -> ReactionNetwork:
    return ReactionNetwork(S, tuple(Reaction.from_species(r.reactants, r.products, r.k) for r in rows))


def _experiments(S, initial_pairs, t_end, dt):
    specs = []
    for x1, x2 in initial_pairs:
        x0 = np.zeros(S)
        x0[:2] = (x1, x2)
        specs.append(ExperimentSpec(x0, 0.0, t_end, dt))
    return tuple(specs)


NETWORK_1 = [
    RxnSpec([1, 2], [3], 0.1),
    RxnSpec([3], [4], 0.2),
    RxnSpec([1, 4], [5], 0.13),
    RxnSpec([2, 3], [5], 0.3),
]

NETWORK_2 = [
    RxnSpec([1], [3], 0.2),
    RxnSpec([2, 3], [4], 0.1),
    RxnSpec([4], [5, 6], 0.15),
    RxnSpec([5, 6], [4], 0.05),
]

NETWORK_3 = [
    RxnSpec([1, 2], [3], 0.35),
    RxnSpec([3], [4], 0.25),
    RxnSpec([4], [5], 0.3),
    RxnSpec([5], [6], 0.4),
    RxnSpec([6], [7, 8], 0.3),
    RxnSpec([4], [9, 10], 0.1),
]

MOLECULAR_WEIGHT_RATIOS = [1, 3, 4, 4, 4, 4, 1, 3, 2, 2]


def make_case_study(case_id: int) -> CaseStudy:
    """Truth network, experiment designs and (for network 3) conservation row."""
    if case_id == 1:
        truth = _network(5, NETWORK_1)
        # stoichiometric twin of reaction 2 with x1 as a spectator: the overfit extra reaction
        twin = Reaction.from_species([1, 3], [1, 4])
        return CaseStudy(
            1,
            truth,
            _experiments(5, [(0.33, 1.0), (1.0, 0.33), (1.0, 1.0), (0.75, 1.0)], 24.0, 1.0),
            decoys={"overfit": ReactionNetwork(5, truth.reactions + (twin.with_rate(0.07),))},
        )
    if case_id == 2:
        truth = _network(6, NETWORK_2)
        return CaseStudy(
            2,
            truth,
            _experiments(6, [(2.5, 2.5), (2.5, 7.5), (7.5, 2.5), (10.0, 5.0)], 15.0, 0.5),
        )
    if case_id == 3:
        truth = _network(10, NETWORK_3)
        wrong = list(truth.reactions)
        wrong[5] = Reaction.from_species([5], [9, 10], 0.033)
        return CaseStudy(
            3,
            truth,
            _experiments(10, [(5.0, 5.0), (2.0, 4.0), (4.0, 2.0)], 5.0, 0.1),
            conservation=ConservationMatrix(np.array([MOLECULAR_WEIGHT_RATIOS], dtype=float)),
            decoys={"x5_reactant": ReactionNetwork(10, tuple(wrong))},
        )
    raise ValueError(f"unknown case study {case_id!r}; expected 1, 2 or 3")


def consistency_problems(case: CaseStudy) -> list[str]:
    """Structural checks on a transcribed case study; empty when all pass."""
    problems = []
    expected = {1: (5, 4, 4), 2: (6, 4, 4), 3: (10, 6, 3)}.get(case.case_id)
    if expected is not None:
        S, q, M = expected
        got = (case.species_count, len(case.truth_network), len(case.experiments))
        if got != expected:
            problems.append(f"expected (S, q, M) = {expected}, got {got}")
    N = case.truth_network.stoichiometric_matrix()
    if case.case_id == 2 and not np.array_equal(N[:, 3], -N[:, 2]):
        problems.append("reaction 4 is not the reverse of reaction 3")
    if case.conservation is not None:
        residual = case.conservation.values @ N
        if np.any(residual != 0):
            problems.append(f"A N != 0 for the truth network: {residual.tolist()}")
    for r in case.truth_network.reactions:
        if not r.is_admissible():
            problems.append(f"inadmissible reaction {r}")
    return problems

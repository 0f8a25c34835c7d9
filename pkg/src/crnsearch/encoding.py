"""Mapping between real-valued DE vectors and trial reaction networks.

A genome holds ``5 * q_max`` reals. Each consecutive group of five rounds to
integers ``(r1, r2, p1, p2, p3)`` in ``0..S``: two reactant identities and
three product identities, with 0 switching a slot off.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .network import Reaction, ReactionNetwork

SLOTS = 5
DELTA = 1e-6


def genome_bounds(species_count: int, q_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-element lower and upper bounds ``(-1/2 + delta, S + 1/2 - delta)``.

    Each integer 0..S then owns an interval of exactly unit length.
    """
    if species_count < 1 or q_max < 1:
        raise ValueError("species_count and q_max must be positive")
    n = SLOTS * q_max
    return np.full(n, -0.5 + DELTA), np.full(n, species_count + 0.5 - DELTA)


def round_genome(genome: np.ndarray, species_count: int) -> np.ndarray:
    """Round to the nearest integer, halves away from zero."""
    z = np.asarray(genome, dtype=float)
    lo, hi = -0.5 + DELTA, species_count + 0.5 - DELTA
    if np.any(z < lo) or np.any(z > hi):
        raise ValueError(f"genome element outside [{lo}, {hi}]")
    return (np.sign(z) * np.floor(np.abs(z) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class DecodedNetwork:
    network: ReactionNetwork
    raw_reaction_count: int
    excluded_count: int
    duplicate_count: int


def decode_slot(slot: Sequence[int]) -> Reaction | None:
    """Reaction for one five-integer group, or None when it means "no reaction"."""
    return _decode_slot(tuple(int(s) for s in slot))


@lru_cache(maxsize=None)
def _decode_slot(slot: tuple[int, ...]) -> Reaction | None:
    reactants = [int(s) for s in slot[:2] if s]
    products = [int(s) for s in slot[2:SLOTS] if s]
    if not reactants or not products:
        return None
    reaction = Reaction.from_species(reactants, products)
    return reaction if reaction.is_admissible() else None


def decode(ints: Sequence[int], species_count: int, q_max: int) -> DecodedNetwork:
    """Decode an integer vector into a canonical, duplicate-free network.

    Reactions come out sorted by structure, so genomes that encode the same
    set of reactions in different slots decode to identical networks.
    """
    ints = np.asarray(ints)
    if ints.shape != (SLOTS * q_max,):
        raise ValueError(f"expected {SLOTS * q_max} integers, got shape {ints.shape}")
    if ints.min(initial=0) < 0 or ints.max(initial=0) > species_count:
        raise ValueError(f"genome integers must lie in 0..{species_count}")
    values = ints.tolist()
    raw = excluded = 0
    unique: dict = {}
    for j in range(0, SLOTS * q_max, SLOTS):
        slot = tuple(values[j : j + SLOTS])
        if not any(slot):
            continue
        raw += 1
        reaction = _decode_slot(slot)
        if reaction is None:
            excluded += 1
            continue
        unique.setdefault(reaction.key(), reaction)
    reactions = tuple(unique[k] for k in sorted(unique))
    return DecodedNetwork(
        # in-range, canonical and duplicate-free by construction
        network=ReactionNetwork._trusted(species_count, reactions),
        raw_reaction_count=raw,
        excluded_count=excluded,
        duplicate_count=raw - excluded - len(reactions),
    )


def encode(network: ReactionNetwork, q_max: int) -> np.ndarray:
    """Integer slot vector that decodes back to ``network`` (unused slots are zero)."""
    if len(network) > q_max:
        raise ValueError(f"network has {len(network)} reactions, more than q_max={q_max}")
    ints = np.zeros(SLOTS * q_max, dtype=np.int64)
    for j, r in enumerate(network.reactions):
        reactants = [s for s, m in r.reactants for _ in range(m)]
        products = [s for s, m in r.products for _ in range(m)]
        ints[SLOTS * j : SLOTS * j + len(reactants)] = reactants
        ints[SLOTS * j + 2 : SLOTS * j + 2 + len(products)] = products
    return ints


def write_genomes(path: str | Path, genomes: np.ndarray) -> None:
    """One flat CSV row of reals per genome."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for g in np.atleast_2d(genomes):
            writer.writerow([repr(float(v)) for v in g])


def read_genomes(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=float)

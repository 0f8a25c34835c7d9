"""Species, elementary reactions, stoichiometric matrices and mass-action fluxes.

Species are numbered 1..S throughout. A reaction stores its reactants and
products as multisets in canonical form, a tuple of ``(species, multiplicity)``
pairs sorted by species index, so two structurally identical reactions compare
(and hash) equal regardless of the order they were written in. The rate
coefficient does not take part in equality.
"""

from __future__ import annotations

import numbers
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

MAX_REACTANTS = 2
MAX_PRODUCTS = 3

Multiset = tuple[tuple[int, int], ...]


def _canonical(species: Iterable[int]) -> Multiset:
    counts = Counter(s for s in species if s != 0)
    return tuple(sorted(counts.items()))


def _total(ms: Multiset) -> int:
    return sum(m for _, m in ms)


@dataclass(frozen=True)
class Reaction:
    """An elementary reaction ``reactants -> products`` with mass-action kinetics."""

    reactants: Multiset
    products: Multiset
    rate_coefficient: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "reactants", _canonical_pairs(self.reactants))
        object.__setattr__(self, "products", _canonical_pairs(self.products))
        nr, np_ = _total(self.reactants), _total(self.products)
        if not 1 <= nr <= MAX_REACTANTS:
            raise ValueError(f"reaction needs 1..{MAX_REACTANTS} reactant molecules, got {nr}")
        if not 1 <= np_ <= MAX_PRODUCTS:
            raise ValueError(f"reaction needs 1..{MAX_PRODUCTS} product molecules, got {np_}")
        if self.rate_coefficient is not None and not self.rate_coefficient >= 0:
            raise ValueError("rate coefficient must be nonnegative")

    @classmethod
    def from_species(
        cls,
        reactants: Sequence[int],
        products: Sequence[int],
        rate_coefficient: Optional[float] = None,
    ) -> "Reaction":
        """Build from flat species lists, e.g. ``([1, 1], [2])`` for 2x1 -> x2.

        Zeros are ignored, matching the "switched off" slots of the genome.
        """
        return cls(_canonical(reactants), _canonical(products), rate_coefficient)

    @property
    def order(self) -> int:
        return _total(self.reactants)

    @property
    def species(self) -> set[int]:
        return {s for s, _ in self.reactants} | {s for s, _ in self.products}

    def with_rate(self, k: Optional[float]) -> "Reaction":
        if k is not None and not k >= 0:
            raise ValueError("rate coefficient must be nonnegative")
        # fields are already canonical; skip re-validation
        new = object.__new__(Reaction)
        object.__setattr__(new, "reactants", self.reactants)
        object.__setattr__(new, "products", self.products)
        object.__setattr__(new, "rate_coefficient", None if k is None else float(k))
        return new

    def net_change(self) -> dict[int, int]:
        """Net stoichiometric coefficient per species, zero entries dropped."""
        delta: Counter = Counter()
        for s, m in self.products:
            delta[s] += m
        for s, m in self.reactants:
            delta[s] -= m
        return {s: d for s, d in delta.items() if d != 0}

    def is_admissible(self) -> bool:
        """True when the net column has at least one negative and one positive entry."""
        values = self.net_change().values()
        return any(v < 0 for v in values) and any(v > 0 for v in values)

    def rate(self, concentrations: Sequence[float]) -> float:
        """Mass-action rate ``k * prod(x_i ** m_i)`` over the reactants."""
        return mass_action_rate(self, concentrations)

    def key(self) -> tuple[Multiset, Multiset]:
        return (self.reactants, self.products)

    def __str__(self) -> str:
        text = f"{_side(self.reactants)} -> {_side(self.products)}"
        if self.rate_coefficient is None:
            return text
        return f"{self.rate_coefficient:.6g}: {text}"


def _canonical_pairs(pairs) -> Multiset:
    counts: Counter = Counter()
    for s, m in pairs:
        s, m = int(s), int(m)
        if s < 1:
            raise ValueError(f"species index must be >= 1, got {s}")
        if m < 1:
            raise ValueError(f"multiplicity must be >= 1, got {m}")
        counts[s] += m
    return tuple(sorted(counts.items()))


def _side(ms: Multiset) -> str:
    return " + ".join(f"x{s}" if m == 1 else f"{m}*x{s}" for s, m in ms)


@dataclass(frozen=True)
class ReactionNetwork:
    """An ordered list of distinct elementary reactions over ``species_count`` species."""

    species_count: int
    reactions: tuple[Reaction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "reactions", tuple(self.reactions))
        if self.species_count < 1:
            raise ValueError("species_count must be positive")
        seen = set()
        for r in self.reactions:
            bad = [s for s in r.species if s > self.species_count]
            if bad:
                raise ValueError(f"species {bad} out of range 1..{self.species_count} in {r}")
            if r.key() in seen:
                raise ValueError(f"duplicate reaction {r}")
            seen.add(r.key())

    def __len__(self) -> int:
        return len(self.reactions)

    def __iter__(self):
        return iter(self.reactions)

    @property
    def rate_coefficients(self) -> np.ndarray:
        """Rate coefficients as a q-vector in reaction order."""
        if any(r.rate_coefficient is None for r in self.reactions):
            raise ValueError("network has unset rate coefficients")
        return np.array([r.rate_coefficient for r in self.reactions], dtype=float)

    def with_rates(self, k: Sequence[float]) -> "ReactionNetwork":
        if len(k) != len(self.reactions):
            raise ValueError(f"expected {len(self.reactions)} rate coefficients, got {len(k)}")
        return ReactionNetwork._trusted(
            self.species_count, tuple(r.with_rate(kj) for r, kj in zip(self.reactions, k))
        )

    def subset(self, keep: Sequence[int]) -> "ReactionNetwork":
        return ReactionNetwork._trusted(self.species_count, tuple(self.reactions[j] for j in keep))

    @classmethod
    def _trusted(cls, species_count: int, reactions: tuple) -> "ReactionNetwork":
        # caller guarantees the invariants (used on the optimiser's hot path)
        new = object.__new__(cls)
        object.__setattr__(new, "species_count", species_count)
        object.__setattr__(new, "reactions", reactions)
        return new

    def canonical_key(self) -> tuple:
        """Order-independent structural identity (rate coefficients ignored)."""
        return tuple(sorted(r.key() for r in self.reactions))

    def sorted(self) -> "ReactionNetwork":
        return ReactionNetwork(self.species_count, tuple(sorted(self.reactions, key=Reaction.key)))

    def stoichiometric_matrix(self) -> np.ndarray:
        return stoichiometric_matrix(self)

    def flux(self, concentrations: Sequence[float]) -> np.ndarray:
        return flux(self, concentrations)

    def __str__(self) -> str:
        return "\n".join(str(r) for r in self.reactions) or "(empty network)"


@dataclass(frozen=True)
class ConservationMatrix:
    """C x S matrix of reaction-invariant species properties (e.g. molecular weights)."""

    values: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.values, dtype=float))
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("conservation matrix must be a non-empty C x S array")
        if np.any(np.all(a == 0, axis=0)):
            raise ValueError("every species needs at least one nonzero conserved property")
        a.setflags(write=False)
        object.__setattr__(self, "values", a)

    @property
    def species_count(self) -> int:
        return self.values.shape[1]

    def tolist(self) -> list[list[float]]:
        return self.values.tolist()


def stoichiometric_matrix(network: ReactionNetwork) -> np.ndarray:
    """S x q integer matrix of net coefficients (products minus reactants)."""
    S = network.species_count
    if not network.reactions:
        return np.zeros((S, 0), dtype=np.int64)
    return np.array([_column(r.reactants, r.products, S) for r in network.reactions], dtype=np.int64).T


@lru_cache(maxsize=65536)
def _column(reactants: Multiset, products: Multiset, species_count: int) -> tuple[int, ...]:
    col = [0] * species_count
    for s, m in products:
        col[s - 1] += m
    for s, m in reactants:
        col[s - 1] -= m
    return tuple(col)


def mass_action_rate(reaction: Reaction, concentrations: Sequence[float]) -> float:
    if reaction.rate_coefficient is None:
        raise ValueError(f"rate coefficient unset for {reaction}")
    rate = reaction.rate_coefficient
    for s, m in reaction.reactants:
        rate *= concentrations[s - 1] ** m
    # symbolic concentrations (e.g. sympy) pass through unconverted
    return float(rate) if isinstance(rate, numbers.Real) else rate


def flux(network: ReactionNetwork, concentrations: Sequence[float]) -> np.ndarray:
    """Right-hand side ``N r(x)`` of the batch material balances."""
    rates = [mass_action_rate(r, concentrations) for r in network.reactions]
    if not rates:
        return np.zeros(network.species_count)
    return stoichiometric_matrix(network) @ np.array(rates)


class CompiledNetwork:
    """Vectorised flux evaluation for repeated calls (integration, regression).

    Each reaction has at most two reactant molecules, so its rate term is
    ``x[a] * x[b]`` over a concentration vector padded with a trailing 1.0.
    """

    def __init__(self, network: ReactionNetwork):
        self.species_count = network.species_count
        self.stoich = stoichiometric_matrix(network).astype(float)
        pad = network.species_count
        first, second = [], []
        for r in network.reactions:
            molecules = [s - 1 for s, m in r.reactants for _ in range(m)]
            molecules += [pad] * (2 - len(molecules))
            first.append(molecules[0])
            second.append(molecules[1])
        self.first = np.array(first, dtype=np.intp)
        self.second = np.array(second, dtype=np.intp)
        self.k = (
            network.rate_coefficients
            if all(r.rate_coefficient is not None for r in network.reactions)
            else None
        )

    def rate_terms(self, x: np.ndarray) -> np.ndarray:
        """Unscaled mass-action terms; ``x`` is (..., S), result is (..., q)."""
        xe = np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)
        return xe[..., self.first] * xe[..., self.second]

    def flux(self, x: np.ndarray) -> np.ndarray:
        if self.k is None:
            raise ValueError("network has unset rate coefficients")
        return (self.rate_terms(x) * self.k) @ self.stoich.T

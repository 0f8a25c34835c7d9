"""Physical realisability checks on stoichiometric matrices.

With a known conservation matrix A a network is valid iff A N = 0. Without
one, the nullspace of N^T must exist and must not force any species to have
every conserved property equal to zero (an all-zero row of its basis).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional

import numpy as np

from .network import ConservationMatrix, ReactionNetwork, stoichiometric_matrix

RANK_RCOND = 1e-10
ZERO_ROW_TOL = 1e-9


class Reason(str, Enum):
    VALID = "valid"
    CONSERVATION_VIOLATED = "conservation_violated"
    NO_NULLSPACE = "no_nullspace"
    ZERO_ROW_IN_NULLSPACE = "zero_row_in_nullspace"


@dataclass(frozen=True)
class ValidityVerdict:
    valid: bool
    alpha: int
    reason: Reason


def _as_matrix(a) -> np.ndarray:
    return a.values if isinstance(a, ConservationMatrix) else np.atleast_2d(np.asarray(a, dtype=float))


class _IntegerConservation:
    """Pre-converted integer A, so repeated checks skip the type analysis."""

    def __init__(self, a: np.ndarray):
        self.values = a


def prepare_conservation(A):
    """Integer-valued A converted once for fast exact checks; others unchanged."""
    if A is None or isinstance(A, _IntegerConservation):
        return A
    a = _as_matrix(A)
    if np.all(a == np.round(a)) and np.max(np.abs(a)) < 2**52:
        return _IntegerConservation(a.astype(np.int64))
    return A


def conservation_valid(N: np.ndarray, A) -> bool:
    """Whether ``A @ N`` is exactly zero.

    Integer-valued A is checked in exact integer arithmetic, other rational
    entries through :class:`fractions.Fraction`; irrational-looking values
    fall back to ``|entry| < 1e-9 * max|A|``.
    """
    if isinstance(A, _IntegerConservation):
        N = np.asarray(N)
        return N.shape[1] == 0 or not np.any(A.values @ N.astype(np.int64))
    a = _as_matrix(A)
    N = np.asarray(N)
    if a.shape[1] != N.shape[0]:
        raise ValueError(f"A has {a.shape[1]} columns but N has {N.shape[0]} rows")
    if N.shape[1] == 0:
        return True
    if np.all(a == np.round(a)) and np.max(np.abs(a)) < 2**52:
        return not np.any(a.astype(np.int64) @ N.astype(np.int64))
    fa = [[Fraction(v).limit_denominator(10**6) for v in row] for row in a]
    if all(abs(float(f) - v) <= 1e-15 * max(1.0, abs(v)) for frow, row in zip(fa, a) for f, v in zip(frow, row)):
        nn = N.astype(int).tolist()
        for frow in fa:
            for j in range(N.shape[1]):
                if sum(f * nn[i][j] for i, f in enumerate(frow)) != 0:
                    return False
        return True
    return bool(np.all(np.abs(a @ N) < 1e-9 * np.max(np.abs(a))))


def left_nullspace(N: np.ndarray, rcond: float = RANK_RCOND) -> np.ndarray:
    """Orthonormal basis (S x d) of the nullspace of ``N.T``."""
    N = np.asarray(N, dtype=float)
    S = N.shape[0]
    if N.shape[1] == 0:
        return np.eye(S)
    u, s, _ = np.linalg.svd(N, full_matrices=True)
    rank = int(np.sum(s > rcond * s[0])) if s.size and s[0] > 0 else 0
    return u[:, rank:]


def nullspace_reason(N: np.ndarray) -> Reason:
    basis = left_nullspace(N)
    if basis.shape[1] == 0:
        return Reason.NO_NULLSPACE
    if np.any(np.all(np.abs(basis) < ZERO_ROW_TOL, axis=1)):
        return Reason.ZERO_ROW_IN_NULLSPACE
    return Reason.VALID


def nullspace_valid(N: np.ndarray) -> bool:
    return nullspace_reason(N) is Reason.VALID


def assess(network: ReactionNetwork, conservation: Optional[object], q_max: int) -> ValidityVerdict:
    """Verdict and penalty exponent (0 if valid, ``q_max`` otherwise)."""
    N = stoichiometric_matrix(network)
    if conservation is not None:
        conservation = prepare_conservation(conservation)
    if conservation is not None:
        reason = Reason.VALID if conservation_valid(N, conservation) else Reason.CONSERVATION_VIOLATED
    else:
        reason = nullspace_reason(N)
    valid = reason is Reason.VALID
    return ValidityVerdict(valid, 0 if valid else q_max, reason)

"""Linear estimation of mass-action rate coefficients from derivative estimates.

For a trial network the estimated derivatives are linear in the rate
coefficients: each species block of the design matrix holds, per reaction,
the net stoichiometric coefficient times the unscaled rate term at the
sampled concentrations. Blocks are stacked by (experiment, species, time).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .network import CompiledNetwork, ReactionNetwork
from .smoothing import SmoothedExperiment

SVD_RCOND = 1e-10
ZERO_RATE = 1e-12


@dataclass(frozen=True)
class DesignSystem:
    X: np.ndarray
    y: np.ndarray

    @property
    def row_count(self) -> int:
        return self.y.size

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y"] + [f"X{j + 1}" for j in range(self.X.shape[1])])
            for yi, row in zip(self.y, self.X):
                w.writerow([repr(float(yi))] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class RateFit:
    network: ReactionNetwork
    k: np.ndarray
    sse_d: float
    pruned_count: int
    n_rows: int

    @property
    def q(self) -> int:
        return len(self.network)


def stacked_response(smoothed: Sequence[SmoothedExperiment]) -> np.ndarray:
    """Derivative estimates in (experiment, species, time) order."""
    return np.concatenate([s.derivatives.T.ravel() for s in smoothed])


def build_design(network: ReactionNetwork, smoothed: Sequence[SmoothedExperiment]) -> DesignSystem:
    compiled = CompiledNetwork(network)
    blocks = []
    for s in smoothed:
        terms = compiled.rate_terms(s.concentrations)  # (N, q)
        # (S, 1, q) * (1, N, q) -> species blocks of N rows each
        blocks.append((compiled.stoich[:, None, :] * terms[None, :, :]).reshape(-1, len(network)))
    return DesignSystem(np.concatenate(blocks, axis=0), stacked_response(smoothed))


def solve_rates(system: DesignSystem) -> np.ndarray:
    """Minimum-norm least-squares solution via SVD, relative cutoff 1e-10."""
    X, y = system.X, system.y
    if X.shape[1] == 0:
        raise ValueError("design matrix has no columns")
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(X.shape[1])
    keep = s > SVD_RCOND * s[0]
    return vt[keep].T @ ((u[:, keep].T @ y) / s[keep])


def residual_sse(system: DesignSystem, k: np.ndarray) -> float:
    r = system.y - system.X @ k
    return float(r @ r)


def prune_and_fit(
    network: ReactionNetwork,
    smoothed: Sequence[SmoothedExperiment],
    refit: bool = True,
) -> RateFit:
    """Fit, delete reactions with non-positive coefficients, repeat to a fixed point.

    With ``refit=False`` a single deletion pass is made and the surviving
    coefficients are kept from the full fit.
    """
    y = stacked_response(smoothed)
    if len(network) == 0:
        return _empty_fit(network, 0, y.size)
    return _prune(network, build_design(network, smoothed).X, y, refit)


def _empty_fit(network, pruned, n_rows) -> RateFit:
    return RateFit(ReactionNetwork(network.species_count), np.zeros(0), np.inf, pruned, n_rows)


def _prune(network: ReactionNetwork, X: np.ndarray, y: np.ndarray, refit: bool) -> RateFit:
    keep = np.arange(len(network))
    while True:
        k = solve_rates(DesignSystem(X[:, keep], y))
        positive = k > ZERO_RATE
        if positive.all():
            break
        keep, k = keep[positive], k[positive]
        if keep.size == 0 or not refit:
            break
    if keep.size == 0:
        return _empty_fit(network, len(network), y.size)
    r = y - X[:, keep] @ k
    rectified = network.subset(keep.tolist()).with_rates(k)
    return RateFit(rectified, k, float(r @ r), len(network) - keep.size, y.size)


def _reactant_sets(species_count: int) -> list[tuple]:
    """Every reactant multiset of one or two molecules."""
    sets = [((i, 1),) for i in range(1, species_count + 1)]
    for i in range(1, species_count + 1):
        sets.append(((i, 2),))
        sets += [((i, 1), (j, 1)) for j in range(i + 1, species_count + 1)]
    return sets


class RegressionData:
    """Smoothed data condensed for fast fitting of many trial networks.

    All species blocks of one experiment share the same rate-term columns, so
    ``X^T X = (N^T N) * G`` and ``X^T y = sum_i N_ij H_{term(j), i}`` where
    ``G`` and ``H`` are inner products of the candidate rate terms with each
    other and with the derivative estimates. Both are precomputed for every
    possible reactant multiset, leaving a q x q pseudo-inverse per fit
    (the normal-equation form ``k = (X^T X)^# X^T y``).
    """

    def __init__(self, smoothed: Sequence[SmoothedExperiment], refit: bool = True):
        self.smoothed = list(smoothed)
        self.species_count = self.smoothed[0].species_count
        self.refit = refit
        self.n_rows = int(sum(s.derivatives.size for s in self.smoothed))
        conc = np.concatenate([s.concentrations for s in self.smoothed])
        deriv = np.concatenate([s.derivatives for s in self.smoothed])
        sets = _reactant_sets(self.species_count)
        self.term_index = {rs: t for t, rs in enumerate(sets)}
        terms = np.empty((conc.shape[0], len(sets)))
        for t, rs in enumerate(sets):
            col = np.ones(conc.shape[0])
            for sp, m in rs:
                for _ in range(m):
                    col = col * conc[:, sp - 1]
            terms[:, t] = col
        self.gram = terms.T @ terms
        self.cross = terms.T @ deriv
        self.yy = float(np.sum(deriv * deriv))

    def normal_equations(self, network: ReactionNetwork) -> tuple[np.ndarray, np.ndarray]:
        tid = [self.term_index[r.reactants] for r in network.reactions]
        N = network.stoichiometric_matrix().astype(float)
        XtX = (N.T @ N) * self.gram[tid][:, tid]
        Xty = np.sum(N.T * self.cross[tid], axis=1)
        return XtX, Xty

    def fit(self, network: ReactionNetwork) -> RateFit:
        if len(network) == 0:
            return _empty_fit(network, 0, self.n_rows)
        XtX, Xty = self.normal_equations(network)
        keep = np.arange(len(network))
        while True:
            sub_A, sub_b = XtX[keep][:, keep], Xty[keep]
            k = _pinv_solve(sub_A, sub_b)
            positive = k > ZERO_RATE
            if positive.all():
                break
            keep, k = keep[positive], k[positive]
            if keep.size == 0 or not self.refit:
                break
        if keep.size == 0:
            return _empty_fit(network, len(network), self.n_rows)
        A, b = XtX[keep][:, keep], Xty[keep]
        sse = max(self.yy - 2.0 * (k @ b) + k @ A @ k, 0.0)
        rectified = network.subset(keep.tolist()).with_rates(k)
        return RateFit(rectified, k, float(sse), len(network) - keep.size, self.n_rows)


def _pinv_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``pinv(A) @ b`` for symmetric PSD ``A``, tolerance ``q * eps * max eigenvalue``."""
    w, V = np.linalg.eigh(A)
    top = w[-1]
    if top <= 0:
        return np.zeros(b.size)
    keep = w > A.shape[0] * np.finfo(float).eps * top
    Vk = V[:, keep]
    return Vk @ ((Vk.T @ b) / w[keep])

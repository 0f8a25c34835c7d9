"""Penalised Schwarz information criteria in derivative and concentration space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import IntegrationFailure
from .network import ReactionNetwork
from .regression import RateFit
from .simulate import ExperimentSeries, simulate_at


@dataclass(frozen=True)
class Score:
    sse: float
    n_s: int
    q: int
    alpha: int
    value: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "value", sic(self.sse, self.n_s, self.q, self.alpha))


def sic(sse: float, n_s: int, q: int, alpha: int = 0) -> float:
    """``n_s ln(sse / n_s) + (q + 1 + alpha) ln(n_s)``; +inf for infinite sse."""
    if n_s < 1:
        raise ValueError("sample size must be positive")
    if not math.isfinite(sse):
        return math.inf
    if sse <= 0:
        return -math.inf
    return n_s * math.log(sse / n_s) + (q + 1 + alpha) * math.log(n_s)


def sic_d(fit: RateFit, n_s: int, alpha: int) -> Score:
    return Score(fit.sse_d, n_s, fit.q, alpha)


def predict(network: ReactionNetwork, series: ExperimentSeries, rel_tol=1e-6, abs_tol=1e-9, max_steps=20_000):
    """Trajectory from the first measured sample, at the measured times."""
    x0 = series.measured[0]
    return simulate_at(network, x0, series.times, rel_tol, abs_tol, max_steps)


def concentration_sse(
    network: ReactionNetwork,
    experiments: Sequence[ExperimentSeries],
    rel_tol=1e-6,
    abs_tol=1e-9,
) -> list[float]:
    """Per-experiment SSE between measured data and the integrated network.

    Raises IntegrationFailure if any experiment cannot be integrated.
    """
    out = []
    for series in experiments:
        pred = predict(network, series, rel_tol, abs_tol)
        r = series.measured - pred
        out.append(float(np.sum(r * r)))
    return out


def sic_c(
    network: ReactionNetwork,
    experiments: Sequence[ExperimentSeries],
    alpha: int,
    rel_tol=1e-6,
    abs_tol=1e-9,
) -> tuple[Score, list[float]]:
    """Concentration-space criterion over all (untrimmed) samples.

    Initial conditions are the first measured (noisy) sample of each
    experiment. Returns the score and the per-experiment SSE breakdown
    (empty when integration fails, in which case the score is +inf).
    """
    n_s = int(sum(s.measured.size for s in experiments))
    if len(network) == 0:
        return Score(math.inf, n_s, 0, alpha), []
    try:
        parts = concentration_sse(network, experiments, rel_tol, abs_tol)
    except IntegrationFailure:
        return Score(math.inf, n_s, len(network), alpha), []
    return Score(sum(parts), n_s, len(network), alpha), parts

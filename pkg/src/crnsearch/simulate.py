"""Synthetic batch-reactor data: ODE integration, sampling and measurement noise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import IntegrationFailure
from .network import CompiledNetwork, ReactionNetwork

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

MAX_STATE = 1e12


@dataclass(frozen=True)
class ExperimentSpec:
    initial_concentrations: np.ndarray
    t_start: float
    t_end: float
    sample_interval: float

    def __post_init__(self):
        x0 = np.asarray(self.initial_concentrations, dtype=float)
        object.__setattr__(self, "initial_concentrations", x0)
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        if np.any(x0 < 0) or not np.all(np.isfinite(x0)):
            raise ValueError("initial concentrations must be finite and nonnegative")

    @property
    def times(self) -> np.ndarray:
        n = int(round((self.t_end - self.t_start) / self.sample_interval))
        return self.t_start + self.sample_interval * np.arange(n + 1)


@dataclass(frozen=True)
class ExperimentSeries:
    """Sampled concentrations of one batch experiment (rows are sample times)."""

    times: np.ndarray
    measured: np.ndarray
    truth: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.atleast_2d(np.asarray(self.measured, dtype=float))
        if x.shape[0] != t.size:
            raise ValueError(f"{t.size} times but {x.shape[0]} measurement rows")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if not np.all(np.isfinite(x)):
            raise ValueError("measurements must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "measured", x)
        if self.truth is not None:
            object.__setattr__(self, "truth", np.asarray(self.truth, dtype=float))

    @property
    def species_count(self) -> int:
        return self.measured.shape[1]

    def __len__(self) -> int:
        return self.times.size


def solve(rhs, x0, times, rel_tol=1e-6, abs_tol=1e-9, max_steps=100_000) -> np.ndarray:
    """Integrate ``dx/dt = rhs(x)`` with adaptive Dormand-Prince steps.

    Steps are shortened to land exactly on every requested time, so the
    returned rows are the solution at ``times`` (the first row is ``x0``).
    """
    times = np.asarray(times, dtype=float)
    x = np.array(x0, dtype=float)
    out = np.empty((times.size, x.size))
    out[0] = x
    t = times[0]
    f = rhs(x)
    span = times[-1] - times[0]
    h = _initial_step(rhs, x, f, rel_tol, abs_tol, span)
    steps = 0
    k = np.empty((7, x.size))
    for n in range(1, times.size):
        target = times[n]
        while t < target:
            if steps >= max_steps:
                raise IntegrationFailure("step budget exhausted", t)
            last = target - t <= h * (1 + 1e-12)
            step = target - t if last else h
            k[0] = f
            for s in range(1, 7):
                k[s] = rhs(x + step * (_A[s] @ k[:s]))
            x_new = x + step * (_B5[:6] @ k[:6])
            err_vec = step * (_E @ k)
            scale = abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(x_new))
            err = np.sqrt(np.mean((err_vec / scale) ** 2))
            steps += 1
            if not np.isfinite(err):
                h = step * 0.2
            elif err <= 1.0:
                t = target if last else t + step
                x = x_new
                f = k[6]
                if not np.all(np.isfinite(x)):
                    raise IntegrationFailure("non-finite state", t)
                if np.max(np.abs(x)) > MAX_STATE:
                    raise IntegrationFailure("state magnitude exceeded 1e12", t)
                factor = 10.0 if err == 0 else min(10.0, max(0.2, 0.9 * err**-0.2))
                # a step shortened to hit a sample time says nothing about the natural step
                h = max(h, step * factor) if last else step * factor
            else:
                h = step * max(0.2, 0.9 * err**-0.25)
            if h < 1e-12 * max(1.0, abs(t)):
                raise IntegrationFailure("step size underflow", t)
        out[n] = x
    return out


def _initial_step(rhs, x, f, rel_tol, abs_tol, span):
    scale = abs_tol + rel_tol * np.abs(x)
    d0 = np.sqrt(np.mean((x / scale) ** 2))
    d1 = np.sqrt(np.mean((f / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = rhs(x + h0 * f)
    d2 = np.sqrt(np.mean(((f1 - f) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate(
    network: ReactionNetwork,
    spec: ExperimentSpec,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-9,
) -> ExperimentSeries:
    """Noise-free trajectory of ``network`` sampled on the experiment grid."""
    x = simulate_at(network, spec.initial_concentrations, spec.times, rel_tol, abs_tol)
    return ExperimentSeries(spec.times, x, x.copy())


def simulate_at(network, x0, times, rel_tol=1e-6, abs_tol=1e-9, max_steps=100_000) -> np.ndarray:
    """Trajectory of ``network`` from ``x0`` at the given times, shape (len(times), S)."""
    if rel_tol <= 0 or abs_tol <= 0:
        raise ValueError("tolerances must be positive")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (network.species_count,):
        raise ValueError(f"expected {network.species_count} initial concentrations")
    compiled = CompiledNetwork(network)
    if compiled.k is None:
        raise ValueError("network has unset rate coefficients")
    if len(network) == 0 or not np.any(compiled.k):
        return np.tile(x0, (len(times), 1))
    return solve(compiled.flux, x0, times, rel_tol, abs_tol, max_steps)


def noise_streams(seed: int, experiment: int, species_count: int) -> list[np.random.Generator]:
    """Independent generators per species, keyed on (seed, experiment, species)."""
    return [np.random.default_rng([seed, experiment, i]) for i in range(species_count)]


def add_noise(series: ExperimentSeries, fraction: float, rng) -> ExperimentSeries:
    """Gaussian noise with sd = ``fraction`` x (range of each true signal).

    ``rng`` is a single Generator (species drawn in order) or one Generator
    per species. Values are not clamped at zero.
    """
    if series.truth is None:
        raise ValueError("series carries no noise-free truth")
    if fraction < 0:
        raise ValueError("noise fraction must be nonnegative")
    truth = series.truth
    streams = rng if isinstance(rng, (list, tuple)) else [rng] * truth.shape[1]
    measured = truth.copy()
    for i in range(truth.shape[1]):
        sigma = fraction * (truth[:, i].max() - truth[:, i].min())
        noise = streams[i].normal(0.0, 1.0, size=truth.shape[0])
        if sigma > 0:
            measured[:, i] += sigma * noise
    return ExperimentSeries(series.times, measured, truth)


def noise_sigmas(truth: np.ndarray, fraction: float) -> np.ndarray:
    return fraction * (truth.max(axis=0) - truth.min(axis=0))

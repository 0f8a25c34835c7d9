"""Derivative estimation by second-order rational polynomial smoothing.

Each concentration signal is fitted independently with

    x(t) = (p1 t^2 + p2 t + p3) / (t^2 + p4 t + p5)

by multi-start Levenberg-Marquardt, and the fitted curve is differentiated
analytically. The first and last ``trim`` samples are then discarded because
the derivative estimates are least reliable there.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import SmoothingFailure
from .simulate import ExperimentSeries

DENOMINATOR_FLOOR = 1e-12


@dataclass(frozen=True)
class RationalPolyFit:
    p: np.ndarray
    fit_sse: float
    pole_free: bool
    t_start: float = 0.0
    t_end: float = 0.0

    def __call__(self, t) -> np.ndarray:
        return rational_value(self.p, np.asarray(t, dtype=float))

    def derivative(self, t) -> np.ndarray:
        return eval_derivative(self, t)


def rational_value(p, t):
    return (p[0] * t**2 + p[1] * t + p[2]) / (t**2 + p[3] * t + p[4])


def _jacobian(p, t):
    den = t**2 + p[3] * t + p[4]
    f = (p[0] * t**2 + p[1] * t + p[2]) / den
    return f, np.column_stack([t**2 / den, t / den, 1.0 / den, -f * t / den, -f / den])


def has_pole(p, t_start: float, t_end: float) -> bool:
    """Whether ``t^2 + p4 t + p5`` vanishes (or nearly so) on ``[t_start, t_end]``."""
    b, c = p[3], p[4]
    disc = b * b - 4 * c
    if disc >= 0:
        root = np.sqrt(disc)
        for r in ((-b - root) / 2, (-b + root) / 2):
            if t_start <= r <= t_end:
                return True
    grid = np.linspace(t_start, t_end, 64)
    edge = np.array([t_start, t_end, min(max(-b / 2, t_start), t_end)])
    den = np.concatenate([grid, edge]) ** 2 + b * np.concatenate([grid, edge]) + c
    return bool(np.min(np.abs(den)) < DENOMINATOR_FLOOR)


def levenberg_marquardt(p0, t, y, max_iter=500, step_tol=1e-10, pole_free=True):
    """Minimise the sum of squared residuals of the rational model from ``p0``.

    Marquardt's diagonal scaling; returns ``(p, sse, converged)``. With
    ``pole_free`` a trial step that puts a denominator root inside the time
    span is treated like an uphill step, so iterates never cross a pole.
    """
    p = np.array(p0, dtype=float)
    f, jac = _jacobian(p, t)
    resid = y - f
    sse = float(resid @ resid)
    lam = 1e-3
    if not np.isfinite(sse):
        return p, np.inf, False
    for _ in range(max_iter):
        jtj = jac.T @ jac
        grad = jac.T @ resid
        diag = np.maximum(np.diag(jtj), 1e-12)
        improved = False
        while lam < 1e16:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = p + delta
            f_new, jac_new = _jacobian(trial, t)
            r_new = y - f_new
            sse_new = float(r_new @ r_new)
            if (
                np.isfinite(sse_new)
                and sse_new <= sse
                and not (pole_free and has_pole(trial, t[0], t[-1]))
            ):
                p, f, jac, resid = trial, f_new, jac_new, r_new
                done = np.linalg.norm(delta) < step_tol * (1.0 + np.linalg.norm(p)) or sse - sse_new <= 1e-15 * sse
                sse = sse_new
                lam = max(lam / 10, 1e-12)
                improved = True
                break
            lam *= 10
        if not improved:
            # no descent direction left at any damping: a stationary point
            return p, sse, True
        if done or sse == 0.0:
            return p, sse, True
    return p, sse, False


def initial_guess(t, y) -> np.ndarray:
    """Start that reproduces the curve's endpoints for monotone signals."""
    t_mid = 0.5 * (t[0] + t[-1])
    p5 = t_mid**2 + 1.0
    return np.array([y[-1], 0.0, y[0] * p5, 0.0, p5])


def fit_rational_poly(times, values, restarts: int = 10, seed: int = 0) -> RationalPolyFit:
    """Lowest-SSE pole-free fit among ``restarts`` LM runs.

    The first start is :func:`initial_guess`; the others scale it by seeded
    log-normal factors (zero entries get an additive kick instead).
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 6:
        raise SmoothingFailure(f"need at least 6 samples, got {t.size}")
    if np.any(np.diff(t) <= 0) or not np.all(np.isfinite(t)):
        raise SmoothingFailure("times must be finite and increasing")
    rng = np.random.default_rng(seed)
    base = initial_guess(t, y)
    span = t[-1] - t[0]
    yscale = max(np.max(np.abs(y)), 1e-12)
    scales = np.array([yscale, yscale * span, yscale * (span**2 + 1), span, span**2 + 1])
    best = None
    for attempt in range(restarts):
        if attempt == 0:
            p0 = base
        else:
            p0 = base * rng.lognormal(0.0, 1.0, size=5)
            zero = base == 0
            p0[zero] = rng.normal(0.0, 0.5, size=zero.sum()) * scales[zero]
            if has_pole(p0, t[0], t[-1]):
                p0[4] = abs(p0[4]) + (abs(p0[3]) * span + span**2)
        p, sse, _ = levenberg_marquardt(p0, t, y)
        if not np.isfinite(sse) or has_pole(p, t[0], t[-1]):
            continue
        if best is None or sse < best[1]:
            best = (p, sse)
    if best is None:
        raise SmoothingFailure("no pole-free rational fit found")
    return RationalPolyFit(best[0], float(best[1]), True, float(t[0]), float(t[-1]))


def eval_derivative(fit: RationalPolyFit, t) -> np.ndarray:
    """Analytic time derivative of the fitted rational polynomial."""
    p = fit.p
    t = np.asarray(t, dtype=float)
    num = p[0] * t**2 + p[1] * t + p[2]
    den = t**2 + p[3] * t + p[4]
    if np.any(np.abs(den) < DENOMINATOR_FLOOR):
        raise ValueError("denominator vanishes at evaluation time")
    return ((2 * p[0] * t + p[1]) * den - num * (2 * t + p[3])) / den**2


@dataclass(frozen=True)
class SmoothedExperiment:
    times: np.ndarray
    concentrations: np.ndarray
    derivatives: np.ndarray
    fits: tuple[RationalPolyFit, ...]
    trim: int = 4

    @property
    def species_count(self) -> int:
        return self.concentrations.shape[1]

    def __len__(self) -> int:
        return self.times.size


def smooth_experiment(
    series: ExperimentSeries,
    trim: int = 4,
    restarts: int = 10,
    seed: int = 0,
    experiment: int | None = None,
) -> SmoothedExperiment:
    """Fit every species, evaluate derivatives, keep the interior samples."""
    n = len(series)
    if n < 2 * trim + 6:
        raise SmoothingFailure(f"need at least {2 * trim + 6} samples, got {n}", experiment=experiment)
    fits = []
    for i in range(series.species_count):
        try:
            fits.append(fit_rational_poly(series.times, series.measured[:, i], restarts, seed=seed + i))
        except SmoothingFailure as exc:
            raise SmoothingFailure(str(exc), species=i + 1, experiment=experiment) from exc
    keep = slice(trim, n - trim)
    t = series.times[keep]
    derivs = np.column_stack([eval_derivative(f, t) for f in fits])
    return SmoothedExperiment(t, series.measured[keep], derivs, tuple(fits), trim)


def smooth_all(experiments: Sequence[ExperimentSeries], trim=4, restarts=10, seed=0) -> list[SmoothedExperiment]:
    return [
        smooth_experiment(e, trim, restarts, seed=seed + 1000 * m, experiment=m + 1)
        for m, e in enumerate(experiments)
    ]


def write_smoothing_report(path: str | Path, series: ExperimentSeries, smoothed: SmoothedExperiment) -> None:
    """CSV with columns ``time,species,measured,fitted,derivative`` over kept samples."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "species", "measured", "fitted", "derivative"])
        for i, fit in enumerate(smoothed.fits):
            fitted = fit(smoothed.times)
            for n, t in enumerate(smoothed.times):
                w.writerow([repr(float(t)), f"x{i + 1}", repr(float(smoothed.concentrations[n, i])),
                            repr(float(fitted[n])), repr(float(smoothed.derivatives[n, i]))])

"""End-to-end acceptance checks, one test per criterion.

The case-study criteria run the full protocol (10 seeded runs, P=400,
G=2000) and take hours on a single core. Each test records a PASS/FAIL line
that is printed in the pytest terminal summary.
"""

import contextlib
import math
import os

import numpy as np
import pytest
import sympy as sp

from crnsearch.cases import make_case_study
from crnsearch.cli import main
from crnsearch.evolution import DEConfig, NetworkObjective, mutate_control, run
from crnsearch.io import load_dataset, read_json
from crnsearch.network import ReactionNetwork, flux
from crnsearch.pipeline import RunConfig, infer
from crnsearch.regression import RegressionData, build_design, prune_and_fit
from crnsearch.scoring import sic
from crnsearch.selection import compare_topology, rates_in_truth_order
from crnsearch.simulate import ExperimentSpec, integrate
from crnsearch.smoothing import SmoothedExperiment, fit_rational_poly, rational_value
from crnsearch.validity import Reason, conservation_valid, left_nullspace, nullspace_reason

from conftest import ACCEPTANCE, rxn

DATASET_SEED = 1
RUNS = int(os.environ.get("CRNSEARCH_ACCEPTANCE_RUNS", "10"))
K_TOL = 0.2


@contextlib.contextmanager
def criterion(n):
    """Record PASS/FAIL for criterion ``n``; the body may append to ``notes``."""
    notes = []
    try:
        yield notes
    except BaseException as exc:
        ACCEPTANCE[n] = (False, "; ".join(notes + [f"{type(exc).__name__}: {exc}".splitlines()[0]]))
        raise
    ACCEPTANCE[n] = (True, "; ".join(notes))


_RUNS: dict = {}


def case_runs(case_id, use_conservation, tmp_path_factory):
    """Default-configuration inference on a fixed-seed dataset, shared across criteria."""
    key = (case_id, use_conservation)
    if key not in _RUNS:
        data_dir = tmp_path_factory.mktemp(f"case{case_id}_data")
        assert main(["simulate", str(case_id), "--seed", str(DATASET_SEED), "--out-dir", str(data_dir)]) == 0
        dataset = load_dataset(data_dir)
        config = RunConfig(manifest=str(data_dir), runs=RUNS, use_conservation=use_conservation)
        out = tmp_path_factory.mktemp(f"case{case_id}_{'A' if use_conservation else 'noA'}")
        _RUNS[key] = (dataset, infer(config, dataset, out))
    return _RUNS[key]


def k_deviation(summary):
    truth = summary.truth
    devs = [np.abs(rates_in_truth_order(o.selection.best.network, truth) / truth.rate_coefficients - 1)
            for o, ok in zip(summary.outcomes, summary.matches) if ok]
    return float(np.max(devs)) if devs else math.nan


def test_criterion_1_equation_oracles():
    with criterion(1) as notes:
        # flux of x1 + x2 -> x3 + x4, x3 -> x4, symbolically
        x = sp.symbols("x1:5")
        k1, k2 = sp.symbols("k1 k2", positive=True)
        got = flux(ReactionNetwork(4, (rxn([1, 2], [3, 4], k1), rxn([3], [4], k2))), x)
        r1 = k1 * x[0] * x[1]
        assert all(sp.simplify(g - e) == 0 for g, e in zip(got, [-r1, -r1, r1 - k2 * x[2], r1 + k2 * x[2]]))
        # regression blocks for 2 x1 -> x2, x2 -> x3
        xs = np.array([[1.0, 0.0, 0.0], [0.8, 0.1, 0.05], [0.6, 0.15, 0.1]])
        X = build_design(ReactionNetwork(3, (rxn([1, 1], [2]), rxn([2], [3]))),
                         [SmoothedExperiment(np.arange(3.0), xs, np.zeros_like(xs), (), 0)]).X
        a, b = xs[:, 0], xs[:, 1]
        np.testing.assert_array_equal(X, np.vstack([np.column_stack([-2 * a**2, 0 * a]),
                                                    np.column_stack([a**2, -b]),
                                                    np.column_stack([0 * a, b])]))
        # pseudo-inverse recovery on exact derivatives
        case = make_case_study(1)
        sm = []
        for spec in case.experiments:
            tr = integrate(case.truth_network, spec, rel_tol=1e-10, abs_tol=1e-13).truth
            sm.append(SmoothedExperiment(spec.times, tr, np.array([flux(case.truth_network, r) for r in tr]), (), 0))
        fit = prune_and_fit(case.truth_network, sm)
        err = np.max(np.abs(fit.k / case.truth_network.rate_coefficients - 1))
        assert err < 1e-6
        notes.append(f"k recovery rel err {err:.1e}")
        # penalty identity
        assert sic(0.37, 340, 4, 10) - sic(0.37, 340, 4, 0) == pytest.approx(10 * math.log(340), rel=1e-12)
        # nullspace of x1 -> x2 + x3, x2 -> x1 + x3
        N = ReactionNetwork(3, (rxn([1], [2, 3]), rxn([2], [1, 3]))).stoichiometric_matrix()
        basis = left_nullspace(N)
        assert basis.shape == (3, 1)
        np.testing.assert_allclose(basis[:, 0] * np.sign(basis[0, 0]), [0.7071067811865476] * 2 + [0.0], atol=1e-6)
        assert nullspace_reason(N) is Reason.ZERO_ROW_IN_NULLSPACE


@pytest.mark.slow
def test_criterion_2_case1_recovery(tmp_path_factory):
    with criterion(2) as notes:
        dataset, summary = case_runs(1, True, tmp_path_factory)
        dev = k_deviation(summary)
        notes.append(f"{summary.match_count}/{RUNS} runs recovered the topology, max k deviation {dev:.3f}")
        mean_time = np.mean([o.elapsed for o in summary.outcomes])
        notes.append(f"mean run time {mean_time:.0f} s")
        matched = summary.match_count
        assert matched >= math.ceil(0.9 * RUNS)
        assert dev <= K_TOL


@pytest.mark.slow
def test_criterion_3_case1_overfit_phenomenon(tmp_path_factory):
    with criterion(3) as notes:
        dataset, summary = case_runs(1, True, tmp_path_factory)
        truth_q = len(summary.truth)
        hits = []
        for o, ok in zip(summary.outcomes, summary.matches):
            best_d = o.result.population.best()
            if ok and best_d.fit.q > truth_q:
                hits.append((o.run_index, best_d.fit.q))
        notes.append(f"runs with min-SIC_D q > {truth_q} and truth at rank 1: {hits}")
        assert hits


@pytest.mark.slow
def test_criterion_4_case2_recovery(tmp_path_factory):
    with criterion(4) as notes:
        dataset, summary = case_runs(2, True, tmp_path_factory)
        dev = k_deviation(summary)
        notes.append(f"{summary.match_count}/{RUNS} runs recovered the topology, max k deviation {dev:.3f}")
        matched = summary.match_count
        assert matched >= math.ceil(0.9 * RUNS)
        assert dev <= K_TOL


@pytest.mark.slow
def test_criterion_5_case3_with_and_without_conservation(tmp_path_factory):
    with criterion(5) as notes:
        dataset, with_a = case_runs(3, True, tmp_path_factory)
        _, without_a = case_runs(3, False, tmp_path_factory)
        assert [o.seed for o in with_a.outcomes] == [o.seed for o in without_a.outcomes]
        dev = k_deviation(with_a)
        notes.append(f"with A {with_a.match_count}/{RUNS} (max k deviation {dev:.3f}), "
                     f"without A {without_a.match_count}/{RUNS}")
        A = dataset.conservation
        wrong = [o.selection.best for o, ok in zip(with_a.outcomes, with_a.matches) if not ok]
        conserving = [c is not None and conservation_valid(c.network.stoichiometric_matrix(), A) for c in wrong]
        notes.append(f"incorrect with-A rank-1 networks satisfying A.N = 0: {sum(conserving)}/{len(wrong)}")
        n_with, n_without = with_a.match_count, without_a.match_count
        assert n_with >= math.ceil(0.4 * RUNS)
        assert n_with == 0 or dev <= K_TOL
        assert n_without < n_with
        assert all(conserving)


def test_criterion_6_smoother_fidelity():
    with criterion(6) as notes:
        p_true = np.array([2.0, 1.0, 3.0, 1.0, 2.0])
        t = np.arange(0.0, 25.0)
        y = rational_value(p_true, t)
        fit = fit_rational_poly(t, y)
        assert fit.fit_sse < 1e-10
        kept = t[4:-4]
        h = 1e-5
        fd = (fit(kept + h) - fit(kept - h)) / (2 * h)
        rel = np.max(np.abs(fit.derivative(kept) - fd) / np.abs(fd))
        notes.append(f"SSE {fit.fit_sse:.1e}, derivative rel err {rel:.1e}")
        assert rel < 1e-6


def test_criterion_7_de_invariants(case1_noisy):
    with criterion(7) as notes:
        case, experiments, smoothed = case1_noisy
        data = RegressionData(smoothed)
        obj = NetworkObjective(data, 10)
        lo, hi = obj.bounds
        best = []

        def check(pop, stats, unchanged):
            assert np.all((pop.F >= 0.1) & (pop.F <= 1.0)) and np.all((pop.CR >= 0) & (pop.CR <= 1))
            assert np.all(pop.genomes >= lo) and np.all(pop.genomes <= hi)
            best.append(stats.best_sic_d)

        cfg = DEConfig(population_size=40, generations=100, seed=3)
        first = run(cfg, obj, callback=check)
        assert len(best) == 100 and all(b <= a for a, b in zip(best, best[1:]))
        F = np.full(10**5, 2.0)
        F_new, _ = mutate_control(F, np.zeros_like(F), np.random.default_rng(7))
        freq = float(np.mean(F_new != F))
        notes.append(f"F mutation frequency {freq:.4f}")
        assert abs(freq - 0.1) <= 0.01
        again = run(cfg, NetworkObjective(data, 10, cache=False))
        np.testing.assert_array_equal(first.population.genomes, again.population.genomes)
        np.testing.assert_array_equal(first.population.F, again.population.F)
        assert first.best_history == again.best_history


@pytest.mark.slow
def test_criterion_8_end_to_end_determinism(tmp_path):
    with criterion(8) as notes:
        data = tmp_path / "data"
        docs = []
        for attempt in ("a", "b"):
            assert main(["simulate", "1", "--seed", "5", "--out-dir", str(data)]) == 0
            out = tmp_path / attempt
            assert main(["infer", "--manifest", str(data), "--out-dir", str(out), "--runs", "2",
                         "--population-size", "60", "--generations", "60"]) == 0
            docs.append([(out / f"run_{i:02d}" / "candidates.json").read_bytes() for i in (1, 2)])
        assert docs[0] == docs[1]
        n = len(read_json(tmp_path / "a/run_01/candidates.json")["candidates"])
        notes.append(f"candidates.json identical for 2 runs ({n} candidates in run 1)")

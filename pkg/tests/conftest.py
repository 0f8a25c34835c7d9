import numpy as np
import pytest

from crnsearch.cases import make_case_study
from crnsearch.network import Reaction, ReactionNetwork
from crnsearch.simulate import add_noise, integrate, noise_streams
from crnsearch.smoothing import smooth_all


def rxn(reactants, products, k=None):
    return Reaction.from_species(reactants, products, k)


def noisy_case(case_id: int, seed: int):
    case = make_case_study(case_id)
    experiments = [
        add_noise(integrate(case.truth_network, spec), case.noise_fraction, noise_streams(seed, m, case.species_count))
        for m, spec in enumerate(case.experiments)
    ]
    return case, experiments


@pytest.fixture(scope="session")
def case1_noisy():
    case, experiments = noisy_case(1, 1)
    return case, experiments, smooth_all(experiments)


@pytest.fixture
def two_step_network():
    # x1 + x2 -> x3 + x4 ; x3 -> x4
    return ReactionNetwork(4, (rxn([1, 2], [3, 4], 0.3), rxn([3], [4], 0.2)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    # commands that fall back to the default output root write under tmp
    monkeypatch.setenv("CRNSEARCH_OUTPUT_ROOT", str(tmp_path / "output-root"))

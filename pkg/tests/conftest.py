"""Shared fixtures: the 25-PRB / 512-point scenario and its calibrated masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from specprecoder.leakage import LeakageMatrix, MaskSpec, build_leakage_matrix
from specprecoder.precoders import Rank1Constraint, constraints_from
from specprecoder.scenario import Scenario, load_scenario, scenario_calibration, scenario_mask
from specprecoder.signal import gen_ofdm_symbols

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@dataclass
class MaskedScenario:
    scenario: Scenario
    mask: MaskSpec
    A: LeakageMatrix
    constraints: list[Rank1Constraint]
    calibration: object

    @property
    def cfg(self):
        return self.scenario.carrier

    def symbols(self, n: int, seed: int = 7) -> np.ndarray:
        return gen_ofdm_symbols(self.cfg, self.scenario.constellation, n, seed)


def _masked(name: str) -> MaskedScenario:
    s = load_scenario(name)
    cal = scenario_calibration(s)
    mask = scenario_mask(s, cal)
    A = build_leakage_matrix(s.carrier, mask.points)
    return MaskedScenario(s, mask, A, constraints_from(A, mask), cal)


@pytest.fixture(scope="session")
def sem1() -> MaskedScenario:
    return _masked("sem1_16qam")


@pytest.fixture(scope="session")
def sem2() -> MaskedScenario:
    return _masked("sem2_16qam")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def random_constraints(rng: np.random.Generator, n: int, m: int, d: np.ndarray, tight=(0.05, 0.5)) -> list[Rank1Constraint]:
    """``m`` random rank-1 constraints that ``d`` violates by a random factor."""
    out = []
    for _ in range(m):
        u = rng.normal(size=n) + 1j * rng.normal(size=n)
        b = rng.uniform(*tight) * abs(np.vdot(u, d)) ** 2
        out.append(Rank1Constraint(u, b))
    return out

import pathlib

import numpy as np
import pytest

from ehcng.case import load_case
from ehcng.pipeline import solve_case

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "ehcng" / "data"


@pytest.fixture()
def micro():
    return load_case(DATA / "micro3x4.json")


@pytest.fixture()
def desk():
    return load_case(DATA / "desk5x7.json")


# Staged solves on the bundled cases dominate the suite's wall time, so every
# test that can share a solution does.  Keyed by everything that changes the
# program; the cache lives for the whole session.
_SOLVED = {}


def shared_solution(case_path, method="MP", policy="PP", eps=None, fixed_w=None):
    key = (str(case_path), method, policy, eps, fixed_w)
    if key not in _SOLVED:
        case = load_case(case_path)
        _SOLVED[key] = solve_case(case, method=method, policy=policy, eps=eps,
                                  fixed_w=fixed_w)
    return _SOLVED[key]


@pytest.fixture()
def micro_solved():
    return shared_solution(DATA / "micro3x4.json")


@pytest.fixture()
def desk_solved():
    return shared_solution(DATA / "desk5x7.json")


@pytest.fixture()
def rng():
    return np.random.default_rng(20260822)

import pytest

from ncslaser.params import NormalizedParams
from ncslaser.state import build_solution, strong_coupling_solution

FIG1 = NormalizedParams(a0sq=1.0, nu0=1.0, mu0=3.0, eta=5.0)
DEPHASING = NormalizedParams(a0sq=5.0, nu0=5.0, mu0=200.0, eta=5.0)
FIG3 = [
    NormalizedParams(5.0, 0.0, 5.0, 30.0),
    NormalizedParams(5.0, 0.0, 5.0, 200.0),
    NormalizedParams(1.0, 1.0, 3.0, 5.0),
    NormalizedParams(1.0, 1.0, 3.0, 15.0),
    NormalizedParams(1.0, 1.0, 3.0, 50.0),
]


@pytest.fixture(scope="session")
def fig1():
    return FIG1


@pytest.fixture(scope="session")
def fig1_solution():
    return build_solution(FIG1)


@pytest.fixture(scope="session")
def fig1_sc():
    return strong_coupling_solution(FIG1)

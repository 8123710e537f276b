import numpy as np
import pytest

from hdmn.network import DiscreteCPD, LinearGaussianCPD, MixedNetwork, Variable


def forward_algorithm(init, trans, emit, obs):
    """Textbook normalised forward recursion; returns one filtered vector per slice."""
    out = []
    alpha = init * emit[:, obs[0]]
    alpha /= alpha.sum()
    out.append(alpha)
    for e in obs[1:]:
        alpha = (alpha @ trans) * emit[:, e]
        alpha /= alpha.sum()
        out.append(alpha)
    return out


def binary_net(p1=0.3):
    return MixedNetwork([Variable.discrete(0, "x", 2)], [DiscreteCPD(0, (), [1 - p1, p1])])


def clg_chain():
    """d -> y -> z with d binary: y | d ~ N(a_d, v_d), z | y ~ N(1 + 2y, 0.5)."""
    return MixedNetwork(
        [Variable.discrete(0, "d", 2), Variable.continuous(1, "y"), Variable.continuous(2, "z")],
        [DiscreteCPD(0, (), [0.4, 0.6]),
         LinearGaussianCPD(1, (0,), (), [0.0, 3.0], np.zeros((2, 0)), [1.0, 2.0]),
         LinearGaussianCPD(2, (), (1,), 1.0, [2.0], 0.5)],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ---------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from neorl.nres import NresStack
from neorl.ovf import LearnerParams, OvfBank


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_bank(rng, resolutions, dyadic_bits=None, touch=0.7):
    """Bank with random Q values in [0, 1] on a random subset of states.

    With ``dyadic_bits`` the values are multiples of ``2**-dyadic_bits`` so
    that sums of modest size are exact in double precision.
    """
    bank = OvfBank(NresStack.from_resolutions(resolutions), LearnerParams())
    for k, n in enumerate(resolutions):
        kk = n * n
        states = np.flatnonzero(rng.random(kk) < touch)
        vals = rng.random((len(states), 4, kk))
        if dyadic_bits is not None:
            vals = np.floor(vals * 2 ** dyadic_bits) / 2 ** dyadic_bits
        bank._q[k][states] = vals
        bank._touched[k][states] = True
    return bank


_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance check; echoed in the summary."""

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in _VERDICTS:
            terminalreporter.write_line(line)

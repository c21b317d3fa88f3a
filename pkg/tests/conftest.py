import numpy as np
import pytest

from bellhedge.mdp import MDPConfig, build_mdp
from bellhedge.utility import UtilityFamily

# 2 regimes, 5 lattice points, 3 actions: small enough for n-step enumeration
SMALL_MDP = MDPConfig(n_market_states=2, action_points=3, lattice_points=5, lattice_bound=1.0, cost={"action_bound": 0.5})


@pytest.fixture(scope="session")
def default_mdp():
    return build_mdp(MDPConfig())


@pytest.fixture(scope="session")
def small_mdp():
    return build_mdp(SMALL_MDP)


@pytest.fixture(scope="session")
def costly_mdp():
    return build_mdp(MDPConfig(cost={"action_bound": 2.5, "gamma_weights": [0.0, 0.05, 0.0, 0.0, 0.0]}))


FAMS = [UtilityFamily("expectation"), UtilityFamily("entropy", 1.0), UtilityFamily("cvar", 1.0)]


@pytest.fixture(params=FAMS, ids=lambda f: f.kind)
def fam3(request):
    return request.param


def binomial_price(spot, strike, tau, rate, vol, is_call, steps=1000):
    """Cox-Ross-Rubinstein European price; independent of the closed form."""
    dt = tau / steps
    u = np.exp(vol * np.sqrt(dt))
    d = 1.0 / u
    q = (np.exp(rate * dt) - d) / (u - d)
    j = np.arange(steps + 1)
    s = spot * u**j * d ** (steps - j)
    v = np.maximum(s - strike, 0.0) if is_call else np.maximum(strike - s, 0.0)
    disc = np.exp(-rate * dt)
    for _ in range(steps):
        v = disc * (q * v[1:] + (1.0 - q) * v[:-1])
    return float(v[0])


# --------------------------------------------------------------------------- acceptance report

ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """``record(n, ok, detail)`` stores one criterion line for the summary."""

    def record(n, ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"acceptance #{n}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"#{n:<2} {'PASS' if ok else 'FAIL'}  {detail}")

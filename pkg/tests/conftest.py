from __future__ import annotations

import functools
import logging

import numpy as np
import pytest

from fbl_star_noma.channel import ChannelParams, SystemGeometry, draw_channel
from fbl_star_noma.config import ElementLayout
from fbl_star_noma.fbl import QosRequirements
from fbl_star_noma.optimizer import InfeasibleError, SolverConfig, optimize
from fbl_star_noma.runner import cell_seed_sequence

BASE_SEED = 0


def square(N: int) -> ElementLayout:
    r = int(round(N**0.5))
    if r * r == N:
        return ElementLayout(r, r)
    # non-square sizes use the widest two-row-or-more split
    for nv in range(int(N**0.5), 0, -1):
        if N % nv == 0:
            return ElementLayout(nv, N // nv)
    raise ValueError(N)


@functools.lru_cache(maxsize=None)
def channel_for(N: int, realization: int, seed: int = BASE_SEED):
    """Channel drawn exactly as the experiment runner draws cell ``realization``."""
    lay = square(N)
    geo = SystemGeometry(N_v=lay.N_v, N_h=lay.N_h)
    return draw_channel(geo, ChannelParams(), np.random.default_rng(cell_seed_sequence(seed, lay, realization)))


@functools.lru_cache(maxsize=None)
def solve_cell(N: int, eps: float, realization: int, method: str = "ao"):
    """Optimizer result for one runner cell, or None when infeasible."""
    from fbl_star_noma.benchmarks import bcd_optimize

    lay = square(N)
    chan = channel_for(N, realization)
    qos = QosRequirements(eps_c=eps, eps_s=eps)
    rng = np.random.default_rng(cell_seed_sequence(BASE_SEED, lay, realization, stream=1))
    fn = optimize if method == "ao" else bcd_optimize
    try:
        return fn(chan, qos, ChannelParams(), SolverConfig(), rng)
    except InfeasibleError:
        return None


@pytest.fixture(autouse=True)
def _quiet_solver_logs():
    logging.getLogger("fbl_star_noma").setLevel(logging.ERROR)
    yield


# one-line verdict per acceptance criterion, echoed at the end of the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def report(cid: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[cid] = (bool(ok), detail)
    print(f"{cid}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid}: {'PASS' if ok else 'FAIL'} {detail}")

import functools
from dataclasses import replace

import pytest

from evcoord.cases import build_agents, builtin_case, make_toy
from evcoord.coordination import central_solve, sdmgs_run, vils_run

# seeds of the randomized toys used by the oracle comparisons
TOY_SEEDS = tuple(range(24))


@functools.lru_cache(maxsize=None)
def toy_agents(seed: int):
    return build_agents(make_toy(seed))


@functools.lru_cache(maxsize=None)
def toy_vils(seed: int):
    a = toy_agents(seed)
    return vils_run(a.pdn, a.tn, a.config.algo)


@functools.lru_cache(maxsize=None)
def toy_central(seed: int):
    a = toy_agents(seed)
    return central_solve(a.pdn, a.tn)


@functools.lru_cache(maxsize=None)
def case_agents(name: str):
    return build_agents(builtin_case(name))


@functools.lru_cache(maxsize=None)
def case_run(name: str, algo: str = "vils", transport: str = "inproc"):
    a = case_agents(name)
    if algo == "vils":
        return vils_run(a.pdn, a.tn, a.config.algo, transport)
    j = int(algo.split(":")[1])
    return sdmgs_run(a.pdn, a.tn, replace(a.config.algo, inner_loop_fixed=j), transport)


@pytest.fixture(scope="session")
def case1():
    return case_agents("case1")


@pytest.fixture(scope="session")
def case1_vils():
    return case_run("case1")

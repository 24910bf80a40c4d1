"""Case data: feeder reconstructions, random toys, scenario files and the shipped cases."""

from .builtin import BUILTIN, builtin_case, make_case1, make_case2, make_toy, resolve_scenario
from .feeders import ieee13, ieee33
from .scenario import (
    TAGS,
    Agents,
    Coupling,
    ScenarioConfig,
    ScenarioError,
    build_agents,
    load_scenario,
    parse_scenario,
    save_scenario,
    serialize,
)
from .toy import toy_case

__all__ = [
    "BUILTIN",
    "TAGS",
    "Agents",
    "Coupling",
    "ScenarioConfig",
    "ScenarioError",
    "build_agents",
    "builtin_case",
    "ieee13",
    "ieee33",
    "load_scenario",
    "make_case1",
    "make_case2",
    "make_toy",
    "parse_scenario",
    "resolve_scenario",
    "save_scenario",
    "serialize",
    "toy_case",
]

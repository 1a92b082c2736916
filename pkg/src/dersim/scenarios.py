"""Builtin scenario library.

Two desk-scale testbeds: a 9-DER feeder with a partially connected cyber
ring ("-69" family) and a 5-DER network with a fully connected cyber graph
("-47" family).  Controller gain sets follow the respective parameter
tables; convergence parameters, coupling strengths and loads are scenario
design values chosen so each case exhibits its intended regime at dt = 1 ms.

Scenario names are accepted by the CLI as ``builtin:<name>``.
"""

from __future__ import annotations

import copy
import math

from .config import ScenarioConfig, load_config

TWO_PI = 2.0 * math.pi


def _ring_edges(n, weight=1.0):
    return [[j, (j + 1) % n, weight] for j in range(n)]


def _chain_edges(n, weight=1.0):
    return [[j, j + 1, weight] for j in range(n - 1)]


def _complete_edges(n, weight=1.0):
    return [[j, m, weight] for j in range(n) for m in range(j + 1, n)]


def _sym(n, entries):
    mat = [[0.0] * n for _ in range(n)]
    for j, m, b in entries:
        mat[j][m] = b
        mat[m][j] = b
    return mat


# --- 5-DER network ---------------------------------------------------------

_NET47 = _sym(5, [(0, 1, 0.6), (1, 2, 0.6), (2, 3, 0.6), (3, 4, 0.6),
                  (4, 0, 0.6), (0, 2, 0.35), (1, 3, 0.35)])
_NET47_STIFF = _sym(5, [(0, 1, 2.4), (1, 2, 2.4), (2, 3, 2.4), (3, 4, 2.4),
                        (4, 0, 2.4), (0, 2, 1.4), (1, 3, 1.4)])
_NET47_WEAK = _sym(5, [(0, 1, 0.35), (1, 2, 0.35), (2, 3, 0.35),
                       (3, 4, 0.35), (4, 0, 0.35)])
_LOADS47 = [
    {"bus": 0, "p": 22e3, "q": 9e3},
    {"bus": 1, "p": 9e3, "q": 11e3},
    {"bus": 2, "p": 15e3, "q": 8e3},
    {"bus": 3, "p": 6e3, "q": 12e3},
    {"bus": 4, "p": 12e3, "q": 10e3},
]

_BASE47 = {
    "dt": 1e-3,
    "seed": 1,
    "droop": {"m_p": 9.4e-5, "n_q": 1.3e-3,
              "omega_nom": TWO_PI * 60.0, "v_nom": 310.0},
    "inner": {"kp_v": 40.0, "ki_v": 80.0, "kp_i": 0.1, "ki_i": 0.5,
              "omega_c": TWO_PI * 5.0},
    "sc": {"c": 1.2, "kp_omega": 0.1, "ki_omega": 10.0,
           "kp_v": 0.1, "ki_v": 1.5},
    "graph": {"n": 5, "edges": _complete_edges(5)},
    "network": {"susceptance": _NET47},
    "loads": copy.deepcopy(_LOADS47),
    # impulse weight 1/v_nom per-unitizes the volt-scale loop error so the
    # downsampled signal is commensurate with the consensus inputs
    "mca": {"enabled": True, "d_factor": 10, "window": 1,
            "impulse": [1.0 / 310.0], "beta": 1.5, "g1": 0.3, "g2": 0.5},
}

# --- 9-DER network ---------------------------------------------------------

_NET69 = _sym(9, [(j, j + 1, 4.0) for j in range(8)] + [(2, 6, 2.0)])
_NET69_TIES = _sym(9, [(j, j + 1, 4.0) for j in range(8)]
                   + [(2, 6, 2.0), (1, 5, 2.0), (3, 7, 2.0)])
_LOADS69 = [
    {"bus": 0, "p": 10e3, "q": 5e3},
    {"bus": 1, "p": 14e3, "q": 7e3},
    {"bus": 2, "p": 8e3, "q": 4e3},
    {"bus": 3, "p": 12e3, "q": 6e3},
    {"bus": 4, "p": 16e3, "q": 8e3},
    {"bus": 5, "p": 9e3, "q": 5e3},
    {"bus": 6, "p": 13e3, "q": 6e3},
    {"bus": 7, "p": 7e3, "q": 3e3},
    {"bus": 8, "p": 11e3, "q": 5e3},
]
_CYBER69 = _ring_edges(9) + [[0, 4, 1.0], [2, 6, 1.0]]

_BASE69 = {
    "dt": 1e-3,
    "seed": 1,
    "droop": {"m_p": 9.4e-5, "n_q": 1.3e-3,
              "omega_nom": TWO_PI * 60.0, "v_nom": 310.0},
    "inner": {"kp_v": 50.0, "ki_v": 100.0, "kp_i": 0.2, "ki_i": 1.0,
              "omega_c": TWO_PI * 5.0},
    "sc": {"c": 0.6, "kp_omega": 0.1, "ki_omega": 100.0,
           "kp_v": 0.1, "ki_v": 10.0},
    "graph": {"n": 9, "edges": copy.deepcopy(_CYBER69)},
    "network": {"susceptance": _NET69},
    "loads": copy.deepcopy(_LOADS69),
    "mca": {"enabled": True, "d_factor": 10, "window": 1,
            "impulse": [1.0 / 310.0], "beta": 1.5, "g1": 0.3, "g2": 0.5},
}


def _with_load_step(loads, bus, t, dp, dq=0.0):
    loads = copy.deepcopy(loads)
    for ld in loads:
        if ld["bus"] == bus:
            ld["steps"] = [{"t": t, "p": ld["p"] + dp, "q": ld["q"] + dq}]
    return loads


def _scenario(base, name, description, **over):
    doc = copy.deepcopy(base)
    doc["name"] = name
    doc["description"] = description
    doc.update(over)
    return doc


_BUILTINS = {}


def _register(doc):
    _BUILTINS[doc["name"]] = doc
    return doc


_register(_scenario(
    _BASE47, "attack-free-47",
    "5-DER baseline without attacks: load step at 5 s, conventional DSC",
    t_end=10.0,
    loads=_with_load_step(_LOADS47, 1, 5.0, 8e3),
    mca={"enabled": False},
    report={"disturbance_t": 5.0},
))

_register(_scenario(
    _BASE47, "topology-47",
    "cyber graph switches fully-connected to spanning-tree chain at 5 s "
    "with a 0.05 s latency attack and a load step from the switch",
    t_end=12.0,
    graph={"n": 5, "edges": _complete_edges(5),
           "schedule": [{"t": 5.0, "edges": _chain_edges(5)}]},
    sc={"c": 1.6, "kp_omega": 0.1, "ki_omega": 10.0,
        "kp_v": 0.1, "ki_v": 1.5},
    network={"susceptance": _NET47_STIFF},
    loads=_with_load_step(_LOADS47, 1, 5.0, 8e3),
    attacks=[{"kind": "latency", "edges": "all", "start": 5.0, "tau": 0.05}],
    report={"disturbance_t": 5.0},
))

_register(_scenario(
    _BASE47, "fdia-balanced-47",
    "balanced false-data injection on the frequency channel from 5 s",
    t_end=12.0,
    attacks=[{"kind": "fdia", "agents": [0, 1], "start": 5.0,
              "alpha": [[0.0085, 0.0, 0.0], [-0.0085, 0.0, 0.0]],
              "lambda": 1}],
    report={"disturbance_t": 5.0},
))

_register(_scenario(
    _BASE47, "fdia-balanced-la-47",
    "balanced frequency-channel injection plus a 0.05 s latency attack",
    t_end=12.0,
    sc={"c": 0.8, "kp_omega": 0.1, "ki_omega": 10.0,
        "kp_v": 0.1, "ki_v": 1.5},
    attacks=[{"kind": "fdia", "agents": [0, 1], "start": 5.0,
              "alpha": [[0.0085, 0.0, 0.0], [-0.0085, 0.0, 0.0]],
              "lambda": 1},
             {"kind": "latency", "edges": "all", "start": 5.0, "tau": 0.05}],
    report={"disturbance_t": 5.0},
))

_register(_scenario(
    _BASE47, "fdia-unbalanced-47",
    "unbalanced reactive-channel injection window driving voltage collapse "
    "without compensation",
    t_end=14.0,
    network={"susceptance": _NET47_WEAK},
    loads=[{"bus": 0, "p": 34e3, "q": 9e3},
           {"bus": 1, "p": 8e3, "q": 11e3},
           {"bus": 2, "p": 22e3, "q": 8e3},
           {"bus": 3, "p": 9e3, "q": 12e3},
           {"bus": 4, "p": 14e3, "q": 10e3}],
    attacks=[{"kind": "fdia", "agents": [0, 1, 2, 3, 4], "start": 5.0,
              "stop": 7.5,
              "alpha": [[0.0, 0.0, -6.0]] * 5, "lambda": 1}],
    report={"disturbance_t": 5.0},
))

_register(_scenario(
    _BASE69, "la-69",
    "9-DER feeder under a 0.05 s latency attack with a load step at 5 s",
    t_end=12.0,
    attacks=[{"kind": "latency", "edges": "all", "start": 2.0, "tau": 0.05}],
    loads=_with_load_step(_LOADS69, 4, 5.0, 10e3, 6e3),
    report={"disturbance_t": 5.0},
))

_register(_scenario(
    _BASE69, "la-dropout-69",
    "0.05 s latency attack combined with 10% packet dropout",
    t_end=12.0,
    sc={"c": 0.75, "kp_omega": 0.1, "ki_omega": 100.0,
        "kp_v": 0.1, "ki_v": 10.0},
    attacks=[{"kind": "latency", "edges": "all", "start": 2.0, "tau": 0.05},
             {"kind": "dropout", "edges": "all", "start": 2.0, "p": 0.1}],
    loads=_with_load_step(_LOADS69, 4, 5.0, 10e3, 6e3),
    report={"disturbance_t": 5.0},
))

_register(_scenario(
    _BASE69, "tsa-69",
    "time-synchronization attack serving 0.15 s stale data under fresh "
    "stamps, with a load step at 5 s",
    t_end=12.0,
    attacks=[{"kind": "tsa", "edges": "all", "start": 2.0, "n_shift": -100,
              "t_s": 1e-3}],
    loads=_with_load_step(_LOADS69, 4, 5.0, 10e3, 6e3),
    report={"disturbance_t": 5.0},
))

_register(_scenario(
    _BASE69, "recfg-69",
    "electrical reconfiguration (tie lines close at 5 s) plus a 0.05 s "
    "latency attack",
    t_end=12.0,
    network={"susceptance": _NET69,
             "schedule": [{"t": 5.0, "susceptance": _NET69_TIES}]},
    attacks=[{"kind": "latency", "edges": "all", "start": 5.0, "tau": 0.05}],
    report={"disturbance_t": 5.0},
))

_register({
    "name": "abstract-k5",
    "description": "pure delayed consensus on the complete 5-graph "
                   "(largest eigenvalue 5, delay bound pi/10)",
    "mode": "abstract",
    "dt": 1e-3,
    "t_end": 10.0,
    "seed": 1,
    "graph": {"n": 5, "edges": _complete_edges(5)},
    "abstract": {"tau": 0.0},
})

_register({
    "name": "abstract-p2",
    "description": "pure delayed consensus on the 2-path "
                   "(largest eigenvalue 2, delay bound pi/4)",
    "mode": "abstract",
    "dt": 1e-3,
    "t_end": 10.0,
    "seed": 1,
    "graph": {"n": 2, "edges": [[0, 1, 1.0]]},
    "abstract": {"tau": 0.0},
})


def scenario_names() -> list[str]:
    return list(_BUILTINS)


def scenario_description(name: str) -> str:
    return _BUILTINS[name].get("description", "")


def get_scenario_doc(name: str) -> dict:
    """Raw config mapping of a builtin scenario."""
    if name not in _BUILTINS:
        raise KeyError(f"unknown builtin scenario {name!r}; "
                       f"known: {', '.join(_BUILTINS)}")
    return copy.deepcopy(_BUILTINS[name])


def get_scenario(name: str, seed: int | None = None,
                 mca_enabled: bool | None = None) -> ScenarioConfig:
    """Validated builtin scenario, optionally overriding seed / MCA flag."""
    doc = get_scenario_doc(name)
    if seed is not None:
        doc["seed"] = seed
    if mca_enabled is not None:
        doc.setdefault("mca", {})["enabled"] = mca_enabled
    return load_config(doc)

"""Scenario configuration: schema, validation and YAML loading.

A scenario is a nested mapping (YAML on disk, plain dicts for the builtin
library).  Validation walks the whole document and reports every problem
with its field path before giving up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .attacks import AttackSpec
from .control import ScParams
from .graph import CyberGraph, TopologySchedule, build_graph
from .mca import McaParams
from .plant import DroopParams, ElectricalNetwork, InnerLoopParams, LoadSchedule


class ConfigError(ValueError):
    """Validation failure; ``errors`` lists 'path: message' strings."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario config:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ReportSettings:
    """Convergence-classifier settings bound to a scenario."""

    disturbance_t: float = 0.0
    tol_freq: float = 1e-3          # rad/s
    tol_share: float = 0.01         # fraction of the mean
    dwell: float = 0.5              # s


@dataclass
class ScenarioConfig:
    """Fully validated scenario, ready for the engine."""

    name: str
    mode: str                       # "full" | "abstract"
    dt: float
    t_end: float
    seed: int
    init: str                       # "equilibrium" | "cold"
    schedule: TopologySchedule
    droop: DroopParams | None = None
    inner: InnerLoopParams | None = None
    sc: ScParams | None = None
    c_per_agent: np.ndarray | None = None
    network: ElectricalNetwork | None = None
    net_schedule: list = field(default_factory=list)  # [(t, susceptance)]
    mca: McaParams | None = None
    attacks: list = field(default_factory=list)
    report: ReportSettings = field(default_factory=ReportSettings)
    abstract_tau: float = 0.0
    abstract_psi0: np.ndarray | None = None

    @property
    def n_agents(self) -> int:
        return self.schedule.entries[0][1].n_agents

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def with_updates(self, **kwargs) -> "ScenarioConfig":
        from dataclasses import replace
        return replace(self, **kwargs)


def _get(d, key, path, errors, required=True, default=None):
    if key not in d:
        if required:
            errors.append(f"{path}{key}: required field missing")
        return default
    return d[key]


def _num(d, key, path, errors, required=True, default=None, positive=False):
    v = _get(d, key, path, errors, required, default)
    if v is None:
        return default
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        errors.append(f"{path}{key}: expected a number, got {v!r}")
        return default
    if positive and v <= 0:
        errors.append(f"{path}{key}: must be > 0")
    return float(v)


def _parse_graph(doc, errors) -> TopologySchedule | None:
    g = doc.get("graph")
    if not isinstance(g, dict):
        errors.append("graph: required mapping missing")
        return None
    n = g.get("n")
    if not isinstance(n, int) or n < 1:
        errors.append("graph.n: must be an integer >= 1")
        return None
    entries = []
    try:
        base = build_graph(n, [tuple(e) for e in g.get("edges", [])])
        entries.append((0.0, base))
        for i, blk in enumerate(g.get("schedule", []) or []):
            t = blk.get("t")
            if not isinstance(t, (int, float)) or t <= 0:
                errors.append(f"graph.schedule[{i}].t: must be a number > 0")
                continue
            entries.append((float(t),
                            build_graph(n, [tuple(e) for e in blk["edges"]])))
        return TopologySchedule(entries=entries)
    except Exception as exc:
        errors.append(f"graph: {exc}")
        return None


def _parse_network(doc, n, errors):
    net_doc = doc.get("network")
    loads_doc = doc.get("loads", [])
    if not isinstance(net_doc, dict) or "susceptance" not in net_doc:
        errors.append("network.susceptance: required matrix missing")
        return None, []
    loads = [LoadSchedule() for _ in range(n)]
    for i, ld in enumerate(loads_doc or []):
        bus = ld.get("bus")
        if not isinstance(bus, int) or not 0 <= bus < n:
            errors.append(f"loads[{i}].bus: must be an agent index < {n}")
            continue
        steps = [(float(st["t"]), float(st.get("p", ld.get("p", 0.0))),
                  float(st.get("q", ld.get("q", 0.0))))
                 for st in (ld.get("steps") or [])]
        loads[bus] = LoadSchedule(p=float(ld.get("p", 0.0)),
                                  q=float(ld.get("q", 0.0)),
                                  steps=sorted(steps))
    try:
        net = ElectricalNetwork(
            susceptance=np.asarray(net_doc["susceptance"], dtype=float),
            loads=loads)
    except Exception as exc:
        errors.append(f"network: {exc}")
        return None, []
    sched = []
    for i, blk in enumerate(net_doc.get("schedule", []) or []):
        try:
            b = np.asarray(blk["susceptance"], dtype=float)
            ElectricalNetwork(susceptance=b, loads=loads)  # shape/symmetry check
            sched.append((float(blk["t"]), b))
        except Exception as exc:
            errors.append(f"network.schedule[{i}]: {exc}")
    return net, sorted(sched)


def _parse_attack(doc, i, n, errors) -> AttackSpec | None:
    path = f"attacks[{i}]."
    kind = doc.get("kind")
    if kind not in ("latency", "dropout", "tsa", "fdia"):
        errors.append(f"{path}kind: must be one of latency|dropout|tsa|fdia")
        return None
    start = _num(doc, "start", path, errors, default=0.0)
    stop = doc.get("stop")
    stop = math.inf if stop in (None, "open") else float(stop)
    if "edges" in doc:
        if doc["edges"] == "all":
            targets = ("all",)
        else:
            targets = tuple((int(e[0]), int(e[1])) for e in doc["edges"])
            for src, dst in targets:
                if not (0 <= src < n and 0 <= dst < n) or src == dst:
                    errors.append(f"{path}edges: bad edge ({src},{dst})")
    elif "agents" in doc:
        targets = tuple(int(a) for a in doc["agents"])
        for a in targets:
            if not 0 <= a < n:
                errors.append(f"{path}agents: agent {a} out of range")
    else:
        targets = ("all",)
    params = {}
    if kind == "latency":
        params["tau"] = _num(doc, "tau", path, errors, positive=False, default=0.0)
        if params["tau"] is not None and params["tau"] < 0:
            errors.append(f"{path}tau: must be >= 0")
    elif kind == "dropout":
        p = _num(doc, "p", path, errors, default=0.0)
        if p is not None and not 0.0 <= p <= 1.0:
            errors.append(f"{path}p: must be in [0, 1]")
        params["p"] = p
    elif kind == "tsa":
        n_shift = doc.get("n_shift")
        if not isinstance(n_shift, int):
            errors.append(f"{path}n_shift: integer sample shift required")
            n_shift = 0
        params["n_shift"] = n_shift
        params["t_s"] = _num(doc, "t_s", path, errors, required=False)
    elif kind == "fdia":
        alpha = doc.get("alpha")
        if alpha is None:
            errors.append(f"{path}alpha: required for fdia")
            return None
        params["alpha"] = np.asarray(alpha, dtype=float)
        lam = doc.get("lambda", 1)
        if lam not in (0, 1):
            errors.append(f"{path}lambda: must be 0 or 1")
        params["lambda_flag"] = lam
    try:
        return AttackSpec(kind=kind, targets=targets, start=start or 0.0,
                          stop=stop, params=params)
    except Exception as exc:
        errors.append(f"{path}{exc}")
        return None


def load_config(doc: dict) -> ScenarioConfig:
    """Validate a scenario mapping; raises :class:`ConfigError` on failure."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["document: expected a mapping"])

    name = str(doc.get("name", "scenario"))
    mode = doc.get("mode", "full")
    if mode not in ("full", "abstract"):
        errors.append("mode: must be 'full' or 'abstract'")
    dt = _num(doc, "dt", "", errors, default=1e-3, required=False, positive=True)
    t_end = _num(doc, "t_end", "", errors, positive=True)
    if dt and t_end and t_end <= dt:
        errors.append("t_end: must exceed dt")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        errors.append("seed: must be an integer")
        seed = 0
    init = doc.get("init", "equilibrium")
    if init not in ("equilibrium", "cold"):
        errors.append("init: must be 'equilibrium' or 'cold'")

    schedule = _parse_graph(doc, errors)
    n = schedule.entries[0][1].n_agents if schedule else 0

    droop = inner = sc = None
    c_arr = None
    network = None
    net_sched: list = []
    mca = None
    attacks: list = []
    abstract_tau = 0.0
    psi0 = None

    if mode == "full" and schedule is not None:
        d = doc.get("droop", {})
        try:
            droop = DroopParams(
                m_p=float(d.get("m_p", 9.4e-5)),
                n_q=float(d.get("n_q", 1.3e-3)),
                omega_nom=float(d.get("omega_nom", 2 * math.pi * 60.0)),
                v_nom=float(d.get("v_nom", 310.0)))
        except Exception as exc:
            errors.append(f"droop: {exc}")
        il = doc.get("inner", {})
        try:
            inner = InnerLoopParams(
                kp_v=float(il.get("kp_v", 50.0)),
                ki_v=float(il.get("ki_v", 100.0)),
                kp_i=float(il.get("kp_i", 0.2)),
                ki_i=float(il.get("ki_i", 1.0)),
                omega_c=float(il.get("omega_c", 2 * math.pi * 5.0)))
        except Exception as exc:
            errors.append(f"inner: {exc}")
        if inner and dt and dt * inner.omega_c >= 1.0:
            errors.append("inner.omega_c: dt*omega_c >= 1, explicit filter unstable")
        s = doc.get("sc", {})
        c_raw = s.get("c", 1.0)
        try:
            c_arr = (np.full(n, float(c_raw)) if np.isscalar(c_raw)
                     else np.asarray(c_raw, dtype=float))
            if c_arr.shape != (n,):
                errors.append(f"sc.c: expected scalar or list of {n}")
            elif np.any(c_arr <= 0):
                errors.append("sc.c: must be > 0")
            sc = ScParams(c=float(c_arr[0]),
                          kp_omega=float(s.get("kp_omega", 0.1)),
                          ki_omega=float(s.get("ki_omega", 100.0)),
                          kp_v=float(s.get("kp_v", 0.1)),
                          ki_v=float(s.get("ki_v", 10.0)))
        except Exception as exc:
            errors.append(f"sc: {exc}")
        network, net_sched = _parse_network(doc, n, errors)
        m = doc.get("mca", {})
        try:
            t_c_default = ((sc.kp_omega / sc.ki_omega, sc.kp_v / sc.ki_v)
                           if sc else (1e-3, 1e-2))
            impulse = tuple(float(x) for x in m.get("impulse", (1.0,)))
            mca = McaParams(
                d_factor=int(m.get("d_factor", 10)),
                window=int(m.get("window", len(impulse))),
                impulse=impulse,
                beta=float(m.get("beta", 1.5)),
                t_c=tuple(m.get("t_c", t_c_default)),
                g1=float(m.get("g1", 0.3)),
                g2=float(m.get("g2", 0.5)),
                enabled=bool(m.get("enabled", True)))
        except Exception as exc:
            errors.append(f"mca: {exc}")
        for i, a in enumerate(doc.get("attacks", []) or []):
            spec = _parse_attack(a, i, n, errors)
            if spec is not None:
                attacks.append(spec)
    elif mode == "abstract" and schedule is not None:
        ab = doc.get("abstract", {})
        abstract_tau = _num(ab, "tau", "abstract.", errors, required=False,
                            default=0.0) or 0.0
        if abstract_tau < 0:
            errors.append("abstract.tau: must be >= 0")
        if "psi0" in ab:
            psi0 = np.asarray(ab["psi0"], dtype=float)
            if psi0.shape != (n, 3):
                errors.append(f"abstract.psi0: expected shape ({n}, 3)")

    rep = doc.get("report", {})
    report = ReportSettings(
        disturbance_t=float(rep.get("disturbance_t", 0.0)),
        tol_freq=float(rep.get("tol_freq", 1e-3)),
        tol_share=float(rep.get("tol_share", 0.01)),
        dwell=float(rep.get("dwell", 0.5)))

    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(
        name=name, mode=mode, dt=dt, t_end=t_end, seed=seed, init=init,
        schedule=schedule, droop=droop, inner=inner, sc=sc,
        c_per_agent=c_arr, network=network, net_schedule=net_sched,
        mca=mca, attacks=attacks, report=report,
        abstract_tau=abstract_tau, abstract_psi0=psi0)


def load_config_file(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return load_config(doc)

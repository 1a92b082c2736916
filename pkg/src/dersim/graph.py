"""Communication topology among DER agents.

Weighted cyber graphs, their Laplacian views, the largest-eigenvalue delay
bound for uniformly delayed consensus, and scheduled topology switching.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12


class GraphConstructionError(ValueError):
    """Raised for self-loops, out-of-range indices or bad weights."""


class DirectedGraphUnsupported(ValueError):
    """Raised where an operation is only defined for undirected graphs."""


class DisconnectedGraphWarning(UserWarning):
    """The graph is not connected; spectral results may be degenerate."""


@dataclass(frozen=True)
class CyberGraph:
    """Weighted communication graph over ``n_agents`` nodes.

    ``weights[j, m]`` is the edge weight e_jm for information flowing from
    agent m to agent j.  Zero diagonal, non-negative entries; symmetric
    unless ``directed`` is set.
    """

    n_agents: int
    weights: np.ndarray
    directed: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.n_agents, self.n_agents):
            raise GraphConstructionError(
                f"weights shape {w.shape} does not match n={self.n_agents}")
        if np.any(np.diag(w) != 0.0):
            raise GraphConstructionError("self-loops are not allowed")
        if np.any(w < 0.0):
            raise GraphConstructionError("edge weights must be >= 0")
        if not self.directed and not np.array_equal(w, w.T):
            raise GraphConstructionError(
                "undirected graph requires a symmetric weight matrix")
        object.__setattr__(self, "weights", w)

    def neighbors(self, j: int) -> np.ndarray:
        """Indices m with e_jm > 0."""
        return np.flatnonzero(self.weights[j] > 0.0)

    def is_connected(self) -> bool:
        """Connectivity of the underlying undirected support."""
        n = self.n_agents
        if n <= 1:
            return True
        adj = (self.weights > 0) | (self.weights.T > 0)
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            j = stack.pop()
            for m in np.flatnonzero(adj[j]):
                if not seen[m]:
                    seen[m] = True
                    stack.append(int(m))
        return bool(seen.all())


@dataclass(frozen=True)
class LaplacianView:
    """In-degree vector and Laplacian L = D_in - A of a cyber graph."""

    d_in: np.ndarray
    laplacian: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.laplacian.shape[0]


@dataclass
class TopologySchedule:
    """Piecewise-constant graph schedule, right-continuous at switches."""

    entries: list[tuple[float, CyberGraph]] = field(default_factory=list)

    def __post_init__(self):
        times = [t for t, _ in self.entries]
        if not self.entries:
            raise GraphConstructionError("schedule must not be empty")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise GraphConstructionError("switch times must strictly increase")
        n0 = self.entries[0][1].n_agents
        if any(g.n_agents != n0 for _, g in self.entries):
            raise GraphConstructionError("all graphs must share n_agents")
        self._times = times


def build_graph(n: int, edge_list, directed: bool = False) -> CyberGraph:
    """Build a graph from ``(j, m, weight)`` triples.

    Undirected input inserts both directions.  Self-loops, out-of-range
    indices and non-positive weights are rejected.
    """
    w = np.zeros((n, n), dtype=float)
    for j, m, weight in edge_list:
        j, m = int(j), int(m)
        if not (0 <= j < n and 0 <= m < n):
            raise GraphConstructionError(f"edge ({j},{m}) out of range for n={n}")
        if j == m:
            raise GraphConstructionError(f"self-loop ({j},{m}) not allowed")
        if weight <= 0:
            raise GraphConstructionError(f"edge ({j},{m}) weight must be > 0")
        w[j, m] = weight
        if not directed:
            w[m, j] = weight
    return CyberGraph(n_agents=n, weights=w, directed=directed)


def complete_graph(n: int, weight: float = 1.0) -> CyberGraph:
    return build_graph(n, [(j, m, weight) for j in range(n) for m in range(j + 1, n)])


def chain_graph(n: int, weight: float = 1.0) -> CyberGraph:
    """Spanning tree as a chain over agent indices 0-1-...-(n-1)."""
    return build_graph(n, [(j, j + 1, weight) for j in range(n - 1)])


def laplacian(g: CyberGraph) -> LaplacianView:
    """Laplacian view; row sums vanish to within accumulation tolerance."""
    d_in = g.weights.sum(axis=1)
    lap = np.diag(d_in) - g.weights
    resid = np.abs(lap.sum(axis=1)).max() if g.n_agents else 0.0
    if resid > ROW_SUM_TOL * max(1.0, float(d_in.max(initial=0.0))):
        raise AssertionError(f"Laplacian row sums off by {resid}")
    return LaplacianView(d_in=d_in, laplacian=lap)


def max_laplacian_eigenvalue(lv: LaplacianView, rel_tol: float = 1e-12,
                             max_iter: int = 100_000) -> float:
    """Largest Laplacian eigenvalue via shifted power iteration.

    Only defined for symmetric L (undirected graphs).  The iteration runs on
    sigma*I + L so the dominant eigenvalue is simple-signed and positive; the
    shift is removed from the converged Rayleigh quotient.
    """
    lap = lv.laplacian
    if not np.allclose(lap, lap.T, rtol=0.0, atol=0.0):
        raise DirectedGraphUnsupported(
            "largest-eigenvalue bound is stated for undirected graphs only")
    n = lap.shape[0]
    if n == 1:
        return 0.0
    sigma = 1.0 + 2.0 * float(lv.d_in.max(initial=0.0))  # Gershgorin upper bound
    shifted = sigma * np.eye(n) + lap
    # deterministic start vector, not orthogonal to the dominant eigenspace
    v = np.cos(np.arange(n, dtype=float) + 0.5) + 1e-3
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iter):
        u = shifted @ v
        nrm = np.linalg.norm(u)
        v = u / nrm
        ray = float(v @ (shifted @ v))
        if abs(ray - prev) <= rel_tol * abs(ray):
            prev = ray
            break
        prev = ray
    else:  # pragma: no cover - generous iteration cap
        warnings.warn("power iteration hit max_iter before tolerance")
    lam = prev - sigma
    return max(lam, 0.0)


def delay_stability_bound(lv: LaplacianView) -> float:
    """Uniform-delay bound pi / (2 * lambda_max) for delayed consensus.

    Disconnected graphs trigger :class:`DisconnectedGraphWarning`; the bound
    for the given L is still returned (infinite when lambda_max == 0).
    """
    lam = max_laplacian_eigenvalue(lv)
    connected = _is_connected_laplacian(lv.laplacian)
    if not connected:
        warnings.warn("graph is disconnected; bound applies to the given L "
                      "but consensus cannot be reached",
                      DisconnectedGraphWarning)
    if lam <= 0.0:
        return math.inf
    return math.pi / (2.0 * lam)


def _is_connected_laplacian(lap: np.ndarray) -> bool:
    n = lap.shape[0]
    if n <= 1:
        return True
    adj = (np.abs(lap) > 0) & ~np.eye(n, dtype=bool)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        j = stack.pop()
        for m in np.flatnonzero(adj[j]):
            if not seen[m]:
                seen[m] = True
                stack.append(int(m))
    return bool(seen.all())


def graph_at(schedule: TopologySchedule, t: float) -> CyberGraph:
    """Graph of the latest entry with switch_time <= t (inclusive switch)."""
    idx = bisect.bisect_right(schedule._times, t) - 1
    if idx < 0:
        raise ValueError(f"t={t} precedes the initial graph at "
                         f"t={schedule._times[0]}")
    return schedule.entries[idx][1]

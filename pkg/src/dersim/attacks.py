"""Per-edge message channel and the attack transformations applied in flight.

Four attack kinds act on consensus packets: latency (delayed delivery),
dropout (probabilistic loss), time-synchronization shift (stale content under
a fresh stamp) and false-data injection (additive corruption).  The pipeline
order is fixed: FDIA -> TSA -> latency -> dropout.

Dropout draws come from independent, named, counter-based random streams
(one per channel, indexed by send step), so adding or removing one attack
never perturbs another channel's draws.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from .control import Psi
from .graph import LaplacianView

ATTACK_KINDS = ("latency", "dropout", "tsa", "fdia")
PIPELINE_ORDER = ("fdia", "tsa", "latency", "dropout")
BALANCE_TOL = 1e-9


class AttackSpecError(ValueError):
    """Raised for inconsistent attack descriptions."""


@dataclass(frozen=True)
class Packet:
    """Timestamped consensus message traversing one edge."""

    src: int
    dst: int
    psi: Psi
    stamp: float                    # s, sender timestamp
    send_step: int

    def __post_init__(self):
        if self.src == self.dst:
            raise AttackSpecError("packet src and dst must differ")
        if self.stamp < 0:
            raise AttackSpecError("stamp must be >= 0")


@dataclass(frozen=True)
class AttackSpec:
    """Declarative description of one attack window.

    ``targets`` is a tuple of (src, dst) edges for latency/dropout/tsa; for
    fdia it may also be a tuple of agent ids (corrupting all outgoing edges
    of each agent).  ``params`` holds the kind-specific values: latency: tau;
    dropout: p; tsa: n_shift, t_s; fdia: alpha (per target) and lambda_flag.
    """

    kind: str
    targets: tuple
    start: float
    stop: float = math.inf
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise AttackSpecError(f"unknown attack kind {self.kind!r}")
        if not self.start < self.stop:
            raise AttackSpecError("attack start must precede stop")
        if self.kind == "latency" and self.params.get("tau", 0.0) < 0:
            raise AttackSpecError("latency tau must be >= 0")
        if self.kind == "dropout":
            p = self.params.get("p", 0.0)
            if not 0.0 <= p <= 1.0:
                raise AttackSpecError("dropout p must be in [0, 1]")

    def active(self, t: float) -> bool:
        return self.start <= t < self.stop


def stream_key(seed: int, name: str) -> int:
    """128-bit Philox key derived from the run seed and a stream name."""
    digest = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=16)
    return int.from_bytes(digest.digest(), "little")


def channel_stream_name(src: int, dst: int) -> str:
    return f"drop:{src}->{dst}"


def dropout_uniform(seed: int, src: int, dst: int, send_step: int) -> float:
    """The uniform draw deciding the fate of one packet on one channel.

    Indexed by send step through the Philox counter, so the draw for a given
    packet does not depend on which other packets or windows exist.
    """
    key = stream_key(seed, channel_stream_name(src, dst))
    return float(Generator(Philox(key=key, counter=send_step)).random())


def dropout_uniforms(seed: int, src: int, dst: int, n_steps: int) -> np.ndarray:
    """Vectorized per-step draws, counter-aligned with `dropout_uniform`."""
    key = stream_key(seed, channel_stream_name(src, dst))
    bulk = Generator(Philox(key=key)).random(4 * n_steps)
    return bulk[::4].copy()


@dataclass
class Channel:
    """One directed edge with a delay buffer and a named dropout stream."""

    src: int
    dst: int
    seed: int = 0
    buffer: list = field(default_factory=list)  # (due_time, packet)

    def send(self, pkt: Packet, tau: float = 0.0, drop_p: float = 0.0) -> bool:
        """Apply latency then dropout; returns True if the packet survives."""
        if drop_p > 0.0:
            u = dropout_uniform(self.seed, self.src, self.dst, pkt.send_step)
            if u < drop_p:
                return False
        apply_latency(self, pkt, tau)
        return True

    def deliver_due(self, t: float) -> Packet | None:
        """Pop every packet due by ``t`` and return the newest, if any."""
        due = [(d, p) for d, p in self.buffer if d <= t]
        if not due:
            return None
        self.buffer = [(d, p) for d, p in self.buffer if d > t]
        return max(due, key=lambda dp: dp[1].send_step)[1]


def apply_latency(ch: Channel, pkt: Packet, tau: float) -> float:
    """Schedule ``pkt`` for delivery at its send time plus ``tau``."""
    if tau < 0:
        raise AttackSpecError("tau must be >= 0")
    due = pkt.stamp + tau
    ch.buffer.append((due, pkt))
    return due


def apply_dropout(ch: Channel, pkt: Packet, p: float) -> bool:
    """Decide whether ``pkt`` is dropped; True means dropped."""
    if not 0.0 <= p <= 1.0:
        raise AttackSpecError("p must be in [0, 1]")
    if p == 0.0:
        return False
    return dropout_uniform(ch.seed, ch.src, ch.dst, pkt.send_step) < p


def apply_tsa(pkt: Packet, n_shift: int, t_s: float, history,
              dt: float) -> tuple[Packet, bool]:
    """Serve time-shifted source data under the packet's nominal stamp.

    ``history`` maps a send-step index to the source's Psi at that step.
    Negative shifts (the default attack direction) deliver stale data;
    indices outside the available history clamp to the nearest sample.
    Returns the falsified packet and whether clamping occurred.
    """
    if n_shift == 0:
        return pkt, False
    shift_steps = int(round(n_shift * t_s / dt))
    idx = pkt.send_step + shift_steps
    clamped = False
    if idx < 0:
        idx, clamped = 0, True
    elif idx > pkt.send_step:
        idx, clamped = pkt.send_step, True
    psi = history[idx]
    return Packet(src=pkt.src, dst=pkt.dst, psi=psi, stamp=pkt.stamp,
                  send_step=pkt.send_step), clamped


def apply_fdia(psi: Psi, alpha, lambda_flag: int) -> Psi:
    """Additive corruption psi + lambda * alpha, component-wise."""
    if lambda_flag not in (0, 1):
        raise AttackSpecError("lambda_flag must be 0 or 1")
    if lambda_flag == 0:
        return psi
    a = np.asarray(alpha, dtype=float)
    return Psi(psi.omega + a[0], psi.mp_p + a[1], psi.nq_q + a[2])


def make_fdia(n: int, kind: str, magnitude: float,
              rng: np.random.Generator) -> np.ndarray:
    """Per-agent corruption vectors, shape (n, 3).

    Balanced vectors sum to zero on every channel (so -alpha lies in the
    range of any connected symmetric Laplacian and the corrupted consensus
    dynamics admit an equilibrium); unbalanced vectors have a nonzero
    channel sum.  The rng only shuffles which agents carry which sign.
    """
    if kind not in ("balanced", "unbalanced"):
        raise AttackSpecError(f"unknown fdia kind {kind!r}")
    if kind == "balanced" and n < 2:
        raise AttackSpecError("balanced fdia requires n >= 2")
    if kind == "balanced":
        pattern = np.zeros(n)
        half = n // 2
        pattern[:half] = magnitude
        pattern[n - half:] = -magnitude
        rng.shuffle(pattern)
    else:
        pattern = np.full(n, magnitude)
    return np.repeat(pattern[:, None], 3, axis=1)


def classify_fdia(alpha: np.ndarray, lv: LaplacianView) -> str:
    """Balanced iff every channel's component sum vanishes.

    For a connected undirected graph this is exactly solvability of
    L x = -alpha (alpha orthogonal to the all-ones kernel of L).
    """
    a = np.atleast_2d(np.asarray(alpha, dtype=float))
    if a.shape[0] != lv.n_agents:
        raise AttackSpecError("one alpha vector per agent required")
    sums = np.abs(a.sum(axis=0))
    return "balanced" if np.all(sums <= BALANCE_TOL) else "unbalanced"


# ---------------------------------------------------------------------------
# Vectorized delivery planning for the simulation engine.
#
# The engine sends one packet per directed edge per step.  Everything about
# the channel layer (who receives what, when, with which content index) is a
# pure function of the attack windows, the topology schedule and the named
# dropout streams, so it is precomputed here into dense index arrays that the
# hot stepping kernels consume.
# ---------------------------------------------------------------------------

def _steps_ceil(value: float, dt: float) -> int:
    x = value / dt
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


@dataclass
class DeliveryPlan:
    """Per-step delivery maps for every directed edge.

    ``deliver_send[k, j, m]`` is the send-step index of the packet agent j
    consumes from neighbor m at step k (-1 when nothing arrives that step);
    ``content_send`` is the TSA-shifted index selecting the transported
    content.  ``drop_count`` and ``tsa_clamped`` feed the run summary.
    """

    deliver_send: np.ndarray        # (n_steps, n, n) int64
    content_send: np.ndarray        # (n_steps, n, n) int64
    drop_count: int
    tsa_clamped: int


def build_delivery_plan(n: int, n_steps: int, dt: float, seed: int,
                        edge_exists_at,  # (s) -> bool ndarray (n, n)
                        attacks: list[AttackSpec]) -> DeliveryPlan:
    """Resolve latency/TSA/dropout windows into dense delivery maps.

    A packet carrying the state published at step s is consumed at step
    s + ceil(tau/dt); with tau = 0 it is readable the same step (snapshot
    semantics).  Receivers consume the newest packet arriving each step.
    Overlapping latency windows add their delays; overlapping dropout
    windows drop if any of them would.
    """
    steps = np.arange(n_steps + 1)
    t_send = steps * dt
    deliver = np.full((n_steps, n, n), -1, dtype=np.int64)
    content = np.full((n_steps, n, n), -1, dtype=np.int64)

    lat = [a for a in attacks if a.kind == "latency"]
    tsa = [a for a in attacks if a.kind == "tsa"]
    drops = [a for a in attacks if a.kind == "dropout"]

    exists = np.zeros((n_steps + 1, n, n), dtype=bool)
    for s in range(n_steps + 1):
        exists[s] = edge_exists_at(s)

    drop_count = 0
    tsa_clamped = 0
    for dst in range(n):
        for src in range(n):
            if src == dst or not exists[:, dst, src].any():
                continue
            delay = np.zeros(n_steps + 1, dtype=np.int64)
            for a in lat:
                if (src, dst) not in _edges_of(a, n):
                    continue
                win = (t_send >= a.start) & (t_send < a.stop)
                delay[win] += _steps_ceil(a.params["tau"], dt)
            shift = np.zeros(n_steps + 1, dtype=np.int64)
            for a in tsa:
                if (src, dst) not in _edges_of(a, n):
                    continue
                win = (t_send >= a.start) & (t_send < a.stop)
                shift[win] += int(round(a.params["n_shift"]
                                        * a.params.get("t_s", dt) / dt))
            p_eff = np.zeros(n_steps + 1)
            for a in drops:
                if (src, dst) not in _edges_of(a, n):
                    continue
                win = (t_send >= a.start) & (t_send < a.stop)
                p_a = a.params["p"]
                p_eff[win] = 1.0 - (1.0 - p_eff[win]) * (1.0 - p_a)
            if np.any(p_eff > 0.0):
                u = dropout_uniforms(seed, src, dst, n_steps + 1)
                kept = u >= p_eff
                drop_count += int((~kept & exists[:, dst, src]).sum())
            else:
                kept = np.ones(n_steps + 1, dtype=bool)

            cont = steps + shift
            clamped = (cont < 0) | (cont > steps)
            tsa_clamped += int((clamped & exists[:, dst, src] & kept).sum())
            cont = np.clip(cont, 0, steps)

            arrive = steps + delay
            ok = kept & exists[:, dst, src] & (arrive < n_steps)
            s_ok = steps[ok]
            # ascending send order: later assignment wins = newest packet
            deliver[arrive[ok], dst, src] = s_ok
            content[arrive[ok], dst, src] = cont[ok]

    # receiver only listens to current neighbors
    for k in range(n_steps):
        gone = ~exists[k]
        deliver[k][gone] = -1
        content[k][gone] = -1
    return DeliveryPlan(deliver_send=deliver, content_send=content,
                        drop_count=drop_count, tsa_clamped=tsa_clamped)


def _edges_of(spec: AttackSpec, n: int) -> set[tuple[int, int]]:
    """Directed (src, dst) edges a spec targets; 'all' targets everything."""
    if spec.targets == ("all",):
        return {(s, d) for s in range(n) for d in range(n) if s != d}
    edges = set()
    for tgt in spec.targets:
        if isinstance(tgt, tuple) and len(tgt) == 2:
            edges.add((int(tgt[0]), int(tgt[1])))
        else:  # agent id: all outgoing edges
            a = int(tgt)
            edges.update((a, d) for d in range(n) if d != a)
    return edges


def fdia_edge_alpha(n: int, attacks: list[AttackSpec], dt: float,
                    n_steps: int):
    """Per-attack additive corruption arrays for the stepping kernels.

    Returns (starts, stops, alphas) where alphas[a, dst, src, :] is added to
    the content agent dst receives from src while send step s satisfies
    starts[a] <= s < stops[a].
    """
    fdias = [a for a in attacks if a.kind == "fdia"]
    n_a = len(fdias)
    starts = np.zeros(n_a, dtype=np.int64)
    stops = np.zeros(n_a, dtype=np.int64)
    alphas = np.zeros((n_a, n, n, 3))
    for i, spec in enumerate(fdias):
        if spec.params.get("lambda_flag", 1) == 0:
            starts[i], stops[i] = 0, 0  # inert window
            continue
        starts[i] = _steps_ceil(spec.start, dt)
        stops[i] = (n_steps + 1 if math.isinf(spec.stop)
                    else _steps_ceil(spec.stop, dt))
        alpha = np.asarray(spec.params["alpha"], dtype=float)
        targets = list(spec.targets)
        if alpha.ndim == 1:
            alpha = np.repeat(alpha[None, :], len(targets), axis=0)
        if alpha.shape != (len(targets), 3):
            raise AttackSpecError(
                f"fdia alpha must be (targets, 3), got {alpha.shape}")
        for tgt, a_vec in zip(targets, alpha):
            for (src, dst) in _edges_of(
                    AttackSpec("fdia", (tgt,), spec.start, spec.stop,
                               dict(spec.params)), n):
                alphas[i, dst, src] += a_vec
    return starts, stops, alphas

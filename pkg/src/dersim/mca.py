"""Per-agent semantic sampling and compensation layer.

Downsamples the inner voltage-loop error, forms a prediction error against
the secondary consensus input, fires sample-and-hold reconstructions from an
event trigger with a decaying envelope, tracks freshness and relevance, and
feeds gain-scaled compensation back into the secondary controller.

The trigger/reconstruction machinery runs at the downsampled cadence (every
``d_factor`` engine steps); freshness, relevance and the feedback path update
every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import Zeta


@dataclass(frozen=True)
class McaParams:
    """Downsampling, trigger and feedback parameters.

    ``t_c`` holds the per-channel controller time constants K_p/K_i of the
    two secondary PI loops, used by the trigger envelope.  The default
    impulse is pure decimation; normalized averaging windows are supported.
    """

    d_factor: int = 10
    window: int = 1
    impulse: tuple = (1.0,)
    beta: float = 1.5
    t_c: tuple = (1e-3, 1e-2)       # s, (p-channel, q-channel)
    g1: float = 0.3
    g2: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        if self.d_factor < 1:
            raise ValueError("d_factor must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if len(self.impulse) != self.window:
            raise ValueError("impulse length must equal window")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if any(t <= 0 for t in self.t_c):
            raise ValueError("t_c must be > 0")


@dataclass
class McaState:
    """Semantic-layer state of one agent."""

    vc_history: list = field(default_factory=list)  # recent [d, q] samples
    history_len: int = 16
    held_recon: np.ndarray = field(default_factory=lambda: np.zeros(2))
    last_trigger: float = 0.0
    last_downsample: np.ndarray = field(default_factory=lambda: np.zeros(2))
    freshness: float = 0.0
    relevance: np.ndarray = field(
        default_factory=lambda: np.full(2, math.inf))  # nonzero sentinel
    last_packet_stamp: float = 0.0
    trigger_count: int = 0
    clock_skew_events: int = 0

    def push_history(self, vc_now: np.ndarray) -> None:
        self.vc_history.append(np.asarray(vc_now, dtype=float))
        if len(self.vc_history) > self.history_len:
            del self.vc_history[: len(self.vc_history) - self.history_len]


def semantic_downsample(hist, p: McaParams, step_index: int) -> np.ndarray:
    """Impulse-weighted decimation of the voltage-loop error history.

    ``hist`` is indexable by absolute step; entry ``step_index`` must be the
    newest sample.  Indices before the earliest available sample clamp to it.
    With the default unit impulse this is plain decimation hist[n*D].
    """
    out = np.zeros(2)
    n_avail = len(hist)
    first = step_index - (n_avail - 1)
    for w in range(p.window):
        idx = step_index - w
        idx = max(idx, first)
        out += p.impulse[w] * np.asarray(hist[idx - first], dtype=float)
    return out


def prediction_error(rho_d: np.ndarray, zeta: Zeta) -> np.ndarray:
    """Downsampled error minus the consensus input, per channel."""
    return np.array([rho_d[0] - zeta.p, rho_d[1] - zeta.q])


def trigger_condition(rho: np.ndarray, vc_now: np.ndarray, beta: float,
                      t_c, t_since_ref: float) -> bool:
    """Event trigger: prediction error above a decaying envelope.

    True iff ||rho|| > beta * ||exp(-t_since_ref / t_c) * vc_now|| with
    Euclidean norms; ``t_c`` may be a scalar or one value per channel.
    """
    if t_since_ref < 0:
        raise ValueError("t_since_ref must be >= 0")
    tc = np.broadcast_to(np.asarray(t_c, dtype=float), (2,))
    env = np.exp(-t_since_ref / tc) * np.asarray(vc_now, dtype=float)
    lhs = math.hypot(float(rho[0]), float(rho[1]))
    rhs = beta * math.hypot(float(env[0]), float(env[1]))
    return lhs > rhs


def reconstruct(ms: McaState, rho: np.ndarray, triggered: bool,
                t: float) -> np.ndarray:
    """Sample-and-hold: latch ``rho`` on a trigger, else keep holding."""
    if triggered:
        ms.held_recon = np.asarray(rho, dtype=float).copy()
        ms.last_trigger = t
        ms.trigger_count += 1
    return ms.held_recon


def update_semantics(ms: McaState, t: float, packet_arrived: bool,
                     stamp: float, rho: np.ndarray,
                     rho_r: np.ndarray) -> tuple[float, np.ndarray]:
    """Freshness and relevance bookkeeping.

    Freshness is the age of the newest packet; a stamp from the future is a
    clock-skew event surfaced in the counters, with freshness clamped at 0.
    Relevance is the current reconstruction error.
    """
    if packet_arrived:
        if stamp > t:
            ms.clock_skew_events += 1
            stamp = t
        ms.last_packet_stamp = max(ms.last_packet_stamp, stamp)
    ms.freshness = max(t - ms.last_packet_stamp, 0.0)
    ms.relevance = np.asarray(rho, dtype=float) - np.asarray(rho_r, dtype=float)
    return ms.freshness, ms.relevance


def feedback(rho_r: np.ndarray, g1: float, g2: float) -> np.ndarray:
    """Gain-scaled reconstruction fed back to the secondary controller."""
    return np.array([g1 * rho_r[0], g2 * rho_r[1]])


def compensate(zeta: Zeta, phi: np.ndarray) -> Zeta:
    """Final predictive inputs: consensus input plus compensation.

    Exact-zero compensation leaves the input bitwise untouched, so a
    gain-zero layer reproduces the disabled configuration exactly.
    """
    p = zeta.p + phi[0] if phi[0] != 0.0 else zeta.p
    q = zeta.q + phi[1] if phi[1] != 0.0 else zeta.q
    return Zeta(p=p, q=q)


def mca_step(ms: McaState, p: McaParams, t: float, step_index: int,
             vc_now: np.ndarray, zeta: Zeta, packet_arrived: bool,
             stamp: float) -> tuple[Zeta, bool]:
    """One semantic-layer pass for one agent at one engine step.

    Order: freshness update, semantic downsample, trigger evaluation (at the
    decimated cadence), conditional reconstruction, feedback, compensation,
    relevance update.  When the trigger evaluates false no reconstruction
    occurs and relevance is zeroed; the held value still feeds back.
    Returns the final consensus input and whether a trigger fired.
    """
    ms.push_history(vc_now)
    if packet_arrived:
        if stamp > t:
            ms.clock_skew_events += 1
            stamp = t
        ms.last_packet_stamp = max(ms.last_packet_stamp, stamp)
    ms.freshness = max(t - ms.last_packet_stamp, 0.0)

    evaluate = step_index % p.d_factor == 0
    if evaluate:
        ms.last_downsample = semantic_downsample(ms.vc_history, p, step_index)
    rho = prediction_error(ms.last_downsample, zeta)

    triggered = False
    if evaluate:
        # envelope on the impulse-aligned loop error (same scale as rho)
        vc_env = float(sum(p.impulse)) * np.asarray(vc_now, dtype=float)
        triggered = trigger_condition(rho, vc_env, p.beta, p.t_c,
                                      t - ms.last_trigger)
        reconstruct(ms, rho, triggered, t)
        ms.relevance = (rho - ms.held_recon if triggered
                        else np.zeros(2))
    else:
        ms.relevance = rho - ms.held_recon

    gains = (p.g1, p.g2) if p.enabled else (0.0, 0.0)
    phi = feedback(ms.held_recon, *gains)
    return compensate(zeta, phi), triggered


def replay_trigger_counts(rho_p, rho_q, vc_d, vc_q, times, p: McaParams,
                          t_a0: float = 0.0) -> int:
    """Re-run the trigger policy over recorded evaluation-instant signals.

    Inputs are aligned arrays sampled at the decimated cadence; the envelope
    sees the impulse-aligned loop error exactly as the engine does.  Useful
    for threshold sweeps on a frozen trace.
    """
    dc_gain = float(sum(p.impulse))
    t_a = t_a0
    count = 0
    for i in range(len(times)):
        rho = np.array([float(rho_p[i]), float(rho_q[i])])
        vc = dc_gain * np.array([float(vc_d[i]), float(vc_q[i])])
        if trigger_condition(rho, vc, p.beta, p.t_c, float(times[i]) - t_a):
            t_a = float(times[i])
            count += 1
    return count

"""Reduced-order physical model of each DER and the coupling network.

Frequency tracks its droop reference algebraically; the inner voltage loop
is a first-order lag with time constant T_v = kp_v / ki_v whose tracking
error is the signal the semantic layer consumes.  DER buses are coupled by a
lossless per-unitized susceptance network with bus-local loads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * np.pi


class PlantConfigError(ValueError):
    """Raised for physically inconsistent plant parameters."""


@dataclass(frozen=True)
class DroopParams:
    """Primary droop coefficients and nominal operating point."""

    m_p: float                      # rad/(W*s), active-power droop
    n_q: float                      # V/VAr, reactive-power droop
    omega_nom: float = TWO_PI * 60.0  # rad/s
    v_nom: float = 310.0            # V, d-axis magnitude

    def __post_init__(self):
        for name in ("m_p", "n_q", "omega_nom", "v_nom"):
            if getattr(self, name) <= 0:
                raise PlantConfigError(f"{name} must be > 0")


@dataclass(frozen=True)
class InnerLoopParams:
    """Voltage/current loop PI gains and the power-measurement cutoff.

    Current-loop gains are retained for configuration fidelity but the
    reduced-order model absorbs that loop; only kp_v/ki_v (through the lag
    time constant) and omega_c act dynamically.
    """

    kp_v: float
    ki_v: float
    kp_i: float
    ki_i: float
    omega_c: float = TWO_PI * 5.0   # rad/s

    def __post_init__(self):
        for name in ("kp_v", "ki_v", "kp_i", "ki_i", "omega_c"):
            if getattr(self, name) <= 0:
                raise PlantConfigError(f"{name} must be > 0")

    @property
    def t_v(self) -> float:
        """Time constant of the surrogate voltage-loop lag (s)."""
        return self.kp_v / self.ki_v


@dataclass
class DerState:
    """Per-agent physical and controller state."""

    theta: float = 0.0              # rad, relative to the nominal frame
    v_d: float = 310.0              # V
    v_q: float = 0.0                # V
    p_filt: float = 0.0             # W, filtered active power
    q_filt: float = 0.0             # VAr, filtered reactive power
    vc_error: np.ndarray = field(default_factory=lambda: np.zeros(2))
    sc_integrators: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def copy(self) -> "DerState":
        return replace(self, vc_error=self.vc_error.copy(),
                       sc_integrators=self.sc_integrators.copy())


@dataclass
class LoadSchedule:
    """Bus-local load with optional step changes (inclusive at each step)."""

    p: float = 0.0                  # W
    q: float = 0.0                  # VAr
    steps: list[tuple[float, float, float]] = field(default_factory=list)

    def at(self, t: float) -> tuple[float, float]:
        p, q = self.p, self.q
        for ts, ps, qs in self.steps:
            if t >= ts:
                p, q = ps, qs
        return p, q


@dataclass
class ElectricalNetwork:
    """Lossless susceptance coupling between DER buses plus local loads."""

    susceptance: np.ndarray         # n x n, symmetric, zero diagonal, >= 0
    loads: list[LoadSchedule]

    def __post_init__(self):
        b = np.asarray(self.susceptance, dtype=float)
        n = b.shape[0]
        if b.shape != (n, n):
            raise PlantConfigError("susceptance must be square")
        if not np.array_equal(b, b.T):
            raise PlantConfigError("susceptance must be symmetric")
        if np.any(np.diag(b) != 0.0):
            raise PlantConfigError("susceptance diagonal must be zero")
        if np.any(b < 0.0):
            raise PlantConfigError("susceptance entries must be >= 0")
        if len(self.loads) != n:
            raise PlantConfigError("one load schedule per bus required")
        self.susceptance = b

    @property
    def n_buses(self) -> int:
        return self.susceptance.shape[0]

    def loads_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        pq = np.array([ls.at(t) for ls in self.loads])
        return pq[:, 0], pq[:, 1]


def droop_references(s: DerState, dp: DroopParams, d_omega: float,
                     d_v: float) -> tuple[float, np.ndarray]:
    """Droop frequency/voltage references with secondary corrections.

    The q-axis voltage reference is identically zero.
    """
    omega_star = dp.omega_nom - dp.m_p * s.p_filt + d_omega
    v_star = np.array([dp.v_nom - dp.n_q * s.q_filt + d_v, 0.0])
    return omega_star, v_star


def vc_loop_step(s: DerState, v_star: np.ndarray, ilp: InnerLoopParams,
                 dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One step of the surrogate voltage loop.

    Returns ``(v_dq_new, vc_error)`` where the error is taken before the
    relaxation step; v_dq relaxes toward v_star as a first-order lag with
    time constant kp_v / ki_v.
    """
    if dt <= 0:
        raise PlantConfigError("dt must be > 0")
    v_dq = np.array([s.v_d, s.v_q])
    vc_error = np.asarray(v_star, dtype=float) - v_dq
    v_new = v_dq + (dt / ilp.t_v) * vc_error
    return v_new, vc_error


def measure_filter(raw: float, filt_prev: float, omega_c: float,
                   dt: float) -> float:
    """Explicit first-order low-pass update for the power measurement."""
    if dt * omega_c >= 1.0:
        raise PlantConfigError(
            f"dt*omega_c = {dt * omega_c:.3g} >= 1: explicit filter unstable")
    return filt_prev + dt * omega_c * (raw - filt_prev)


def network_powers(states: list[DerState], net: ElectricalNetwork,
                   t: float) -> tuple[np.ndarray, np.ndarray]:
    """Injected active/reactive power per DER at time ``t``.

    P_j sums the lossless line flows B_jm * v_j * v_m * sin(theta_j-theta_m)
    plus the bus-local load; Q_j uses the voltage-difference form.  Pairwise
    antisymmetry of the flow terms keeps the network lossless.
    """
    theta = np.array([s.theta for s in states])
    v = np.array([s.v_d for s in states])
    p_load, q_load = net.loads_at(t)
    b = net.susceptance
    ang = theta[:, None] - theta[None, :]
    p = (b * v[:, None] * v[None, :] * np.sin(ang)).sum(axis=1) + p_load
    q = v * (b * (v[:, None] - v[None, :] * np.cos(ang))).sum(axis=1) + q_load
    return p, q


def integrate_plant(states: list[DerState], omega_stars: np.ndarray,
                    net: ElectricalNetwork, dp: DroopParams,
                    ilp: InnerLoopParams, v_stars: np.ndarray, t_next: float,
                    dt: float) -> list[DerState]:
    """Advance angles, voltage lags and measurement filters one step.

    Frequency tracks its droop reference instantaneously at this model
    order; angles are stored relative to the nominal rotating frame.  Loads
    and coupling are evaluated at ``t_next``, the time of the new state.
    """
    if dt <= 0:
        raise PlantConfigError("dt must be > 0")
    out = []
    for j, s in enumerate(states):
        ns = s.copy()
        v_new, vc_err = vc_loop_step(s, v_stars[j], ilp, dt)
        ns.v_d, ns.v_q = float(v_new[0]), float(v_new[1])
        ns.vc_error = vc_err
        ns.theta = s.theta + dt * (float(omega_stars[j]) - dp.omega_nom)
        out.append(ns)
    p, q = network_powers(out, net, t_next)
    for j, ns in enumerate(out):
        ns.p_filt = measure_filter(p[j], states[j].p_filt, ilp.omega_c, dt)
        ns.q_filt = measure_filter(q[j], states[j].q_filt, ilp.omega_c, dt)
    return out

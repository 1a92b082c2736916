"""Per-agent distributed secondary controller.

Packs the consensus state vector, turns received neighbor packets into the
cooperative control input, and produces the frequency/voltage correction
terms through discrete PI dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import CyberGraph
from .plant import DerState, DroopParams


class ConsensusContractError(ValueError):
    """A received entry does not correspond to a neighbor edge."""


@dataclass(frozen=True)
class Psi:
    """Consensus state vector [omega, m_p*P, n_q*Q] exchanged on the graph."""

    omega: float                    # rad/s
    mp_p: float                     # rad/s, droop-scaled active power
    nq_q: float                     # V, droop-scaled reactive power

    def as_array(self) -> np.ndarray:
        return np.array([self.omega, self.mp_p, self.nq_q])

    @classmethod
    def from_array(cls, arr) -> "Psi":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class ScParams:
    """Convergence parameter and PI gains of both secondary channels."""

    c: float = 1.0
    kp_omega: float = 0.1
    ki_omega: float = 100.0
    kp_v: float = 0.1
    ki_v: float = 10.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("convergence parameter c must be > 0")
        # zero integral gains are permitted so the pure-droop diagnostic
        # configuration stays expressible
        if min(self.kp_omega, self.kp_v, self.ki_omega, self.ki_v) < 0:
            raise ValueError("secondary gains must be >= 0")


@dataclass(frozen=True)
class Zeta:
    """Local consensus control input (frequency/active, reactive channels)."""

    p: float                        # rad/s
    q: float                        # V


def pack_psi(s: DerState, omega_j: float, dp: DroopParams) -> Psi:
    """Consensus vector of agent j from its state and current frequency."""
    return Psi(omega=omega_j, mp_p=dp.m_p * s.p_filt, nq_q=dp.n_q * s.q_filt)


def consensus_input(own: Psi, received: list[tuple[int, Psi]], g: CyberGraph,
                    j: int, c: float) -> Zeta:
    """Weighted sum of neighbor disagreements.

    The frequency channel sums both the omega and the m_p*P disagreements;
    missing neighbors (dropped packets) simply contribute zero.  An entry
    for a non-neighbor violates the contract.
    """
    seen = set()
    zp = 0.0
    zq = 0.0
    for m, psi_m in received:
        w = g.weights[j, m]
        if w <= 0.0 or m == j:
            raise ConsensusContractError(
                f"received entry from {m}, not a neighbor of {j}")
        if m in seen:
            raise ConsensusContractError(f"duplicate entry for neighbor {m}")
        seen.add(m)
        zp += w * ((psi_m.omega - own.omega) + (psi_m.mp_p - own.mp_p))
        zq += w * (psi_m.nq_q - own.nq_q)
    return Zeta(p=c * zp, q=c * zq)


def frequency_correction(zeta_p: float, omega_j: float, omega_nom: float,
                         params: ScParams, dt: float,
                         integ: float) -> tuple[float, float]:
    """PI on the restoration-plus-consensus input of the frequency channel.

    Sign convention: positive input raises the correction (negative
    feedback in the closed loop).  The integrator is advanced before the
    output is formed.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    u = (omega_nom - omega_j) + zeta_p
    integ_new = integ + params.ki_omega * u * dt
    d_omega = params.kp_omega * u + integ_new
    return d_omega, integ_new


def voltage_correction(zeta_q: float, params: ScParams, dt: float,
                       integ: float) -> tuple[float, float]:
    """PI on the reactive-sharing consensus input, same convention."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    u = zeta_q
    integ_new = integ + params.ki_v * u * dt
    d_v = params.kp_v * u + integ_new
    return d_v, integ_new

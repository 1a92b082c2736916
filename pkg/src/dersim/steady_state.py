"""Attack-free equilibrium of the coupled plant/controller system.

At the secondary-control equilibrium every frequency sits at nominal, all
droop-scaled active powers are equal (lossless network: each DER injects the
mean load) and all droop-scaled reactive powers are equal.  Angles, the
voltage profile and the common reactive level solving the flow equations are
found by a damped Newton iteration; controller integrators are then set so
the state is an exact fixed point.
"""

from __future__ import annotations

import numpy as np


class EquilibriumError(RuntimeError):
    """The power-flow Newton iteration failed to converge."""


def _powers(theta, v, b, p_load, q_load):
    ang = theta[:, None] - theta[None, :]
    p = (b * v[:, None] * v[None, :] * np.sin(ang)).sum(axis=1) + p_load
    q = v * (b * (v[:, None] - v[None, :] * np.cos(ang))).sum(axis=1) + q_load
    return p, q


def solve_equilibrium(b: np.ndarray, p_load: np.ndarray, q_load: np.ndarray,
                      v_nom: float, tol: float = 1e-9,
                      max_iter: int = 60):
    """Solve for (theta, v, p_bar, q_bar) with equal injections.

    Gauge: theta[0] = 0, v[0] = v_nom.  Returns the angle/voltage profiles
    and the common active/reactive injections.
    """
    n = b.shape[0]
    p_bar = float(p_load.sum()) / n
    if n == 1:
        return np.zeros(1), np.full(1, v_nom), p_bar, float(q_load[0])

    scale_p = max(abs(p_bar), 1.0)
    scale_q = max(abs(q_load).max(), abs(p_bar), 1.0)

    def unpack(x):
        theta = np.concatenate(([0.0], x[:n - 1]))
        v = np.concatenate(([v_nom], x[n - 1:2 * n - 2]))
        q_bar = x[2 * n - 2]
        return theta, v, q_bar

    def residual(x):
        theta, v, q_bar = unpack(x)
        p, q = _powers(theta, v, b, p_load, q_load)
        return np.concatenate(((p[1:] - p_bar) / scale_p,
                               (q - q_bar) / scale_q))

    x = np.zeros(2 * n - 1)
    x[n - 1:2 * n - 2] = v_nom
    x[-1] = float(q_load.mean())
    r = residual(x)
    for _ in range(max_iter):
        if np.abs(r).max() < tol:
            break
        jac = np.empty((2 * n - 1, 2 * n - 1))
        for i in range(2 * n - 1):
            h = 1e-6 * max(abs(x[i]), 1.0)
            xp = x.copy()
            xp[i] += h
            jac[:, i] = (residual(xp) - r) / h
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise EquilibriumError(f"singular power-flow Jacobian: {exc}")
        lam = 1.0
        best = np.abs(r).max()
        for _ in range(30):
            r_new = residual(x + lam * step)
            if np.abs(r_new).max() < best:
                x = x + lam * step
                r = r_new
                break
            lam *= 0.5
        else:
            raise EquilibriumError("power-flow line search stalled")
    else:
        raise EquilibriumError(
            f"no equilibrium within {max_iter} iterations "
            f"(residual {np.abs(r).max():.3e})")
    theta, v, q_bar = unpack(x)
    return theta, v, p_bar, q_bar


def equilibrium_state(cfg):
    """Initial state arrays placing a scenario at its exact fixed point.

    Returns a dict of arrays keyed like the engine state (theta, vd, vq,
    pf, qf, omega, integ_p, integ_q).
    """
    net = cfg.network
    p_load, q_load = net.loads_at(0.0)
    theta, v, p_bar, q_bar = solve_equilibrium(
        net.susceptance, p_load, q_load, cfg.droop.v_nom)
    n = len(theta)
    dp = cfg.droop
    return {
        "theta": theta,
        "vd": v.copy(),
        "vq": np.zeros(n),
        "pf": np.full(n, p_bar),
        "qf": np.full(n, q_bar),
        "omega": np.full(n, dp.omega_nom),
        # u = 0 at the fixed point, so the integrators carry the corrections
        "integ_p": np.full(n, dp.m_p * p_bar),
        "integ_q": v - dp.v_nom + dp.n_q * q_bar,
    }

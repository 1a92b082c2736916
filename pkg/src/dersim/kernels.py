"""Hot stepping kernels for the simulation engine.

Two implementations of the same per-step semantics: an explicit-loop version
compiled with numba ``@njit`` and a vectorized pure-numpy fallback.  The
backend module selects the default; :func:`get_full_loop` and
:func:`get_abstract_loop` hand out either on demand (the benchmark times
both).  Trace column layout is defined here and frozen per major version.
"""

from __future__ import annotations

import math

import numpy as np

from . import backend

TRACE_COLUMNS = (
    "omega", "p_filt", "q_filt", "mp_p", "nq_q", "v_d", "v_q",
    "zeta_p", "zeta_q", "zeta_pf", "zeta_qf", "d_omega", "d_v",
    "vc_d", "vc_q", "rho_p", "rho_q", "recon_p", "recon_q",
    "triggered", "freshness", "relevance_p", "relevance_q",
)
ABSTRACT_COLUMNS = ("psi_omega", "psi_p", "psi_q")

N_COLS = len(TRACE_COLUMNS)
_COL = {name: i for i, name in enumerate(TRACE_COLUMNS)}


def _full_loop_impl(n_steps, n, dt, omega_nom, v_nom, omega_c, t_v,
                    kp_w, ki_w, kp_v, ki_v,
                    d_factor, beta, tc_p, tc_q, g1, g2,
                    m_p, n_q, c_arr, impulse,
                    wseg_idx, weights_seg,
                    lseg_idx, pload_seg, qload_seg,
                    bseg_idx, bmat_seg,
                    deliver_send, content_send,
                    fdia_start, fdia_stop, fdia_alpha,
                    theta, vd, vq, pf, qf, omega, integ_p, integ_q,
                    vc_hist, psi_hist,
                    held, last_trig_t, last_ds, stamp_s, trig_count,
                    trace):
    window = impulse.shape[0]
    n_fdia = fdia_start.shape[0]
    dc_gain = 0.0
    for wi in range(window):
        dc_gain += impulse[wi]
    for k in range(n_steps):
        t = k * dt
        w = weights_seg[wseg_idx[k]]
        evaluate = (k % d_factor) == 0

        for j in range(n):
            om0 = omega[j]
            pf0 = pf[j]
            qf0 = qf[j]
            vd0 = vd[j]
            vq0 = vq[j]
            mpp = m_p[j] * pf0
            nqq = n_q[j] * qf0

            # deliveries and consensus input (snapshot of step-k data)
            zp = 0.0
            zq = 0.0
            newest = -1
            for m in range(n):
                s = deliver_send[k, j, m]
                if s < 0:
                    continue
                ci = content_send[k, j, m]
                r0 = psi_hist[ci, m, 0]
                r1 = psi_hist[ci, m, 1]
                r2 = psi_hist[ci, m, 2]
                for a in range(n_fdia):
                    if fdia_start[a] <= s < fdia_stop[a]:
                        r0 += fdia_alpha[a, j, m, 0]
                        r1 += fdia_alpha[a, j, m, 1]
                        r2 += fdia_alpha[a, j, m, 2]
                wjm = w[j, m]
                zp += wjm * ((r0 - om0) + (r1 - mpp))
                zq += wjm * (r2 - nqq)
                if s > newest:
                    newest = s
            zp *= c_arr[j]
            zq *= c_arr[j]

            # semantic layer: freshness, downsample, trigger, feedback
            if newest >= 0:
                st = newest * dt
                if st > stamp_s[j]:
                    stamp_s[j] = st
            fresh = t - stamp_s[j]
            if fresh < 0.0:
                fresh = 0.0
            if evaluate:
                dsd = 0.0
                dsq = 0.0
                for wi in range(window):
                    idx = k - wi
                    if idx < 0:
                        idx = 0
                    dsd += impulse[wi] * vc_hist[idx, j, 0]
                    dsq += impulse[wi] * vc_hist[idx, j, 1]
                last_ds[j, 0] = dsd
                last_ds[j, 1] = dsq
            rho_p = last_ds[j, 0] - zp
            rho_q = last_ds[j, 1] - zq
            trig = 0.0
            if evaluate:
                # envelope on the impulse-aligned loop error, same scale
                # as the downsampled prediction-error path
                dt_ref = t - last_trig_t[j]
                env_p = math.exp(-dt_ref / tc_p) * dc_gain * vc_hist[k, j, 0]
                env_q = math.exp(-dt_ref / tc_q) * dc_gain * vc_hist[k, j, 1]
                lhs = math.sqrt(rho_p * rho_p + rho_q * rho_q)
                rhs = beta * math.sqrt(env_p * env_p + env_q * env_q)
                if lhs > rhs:
                    held[j, 0] = rho_p
                    held[j, 1] = rho_q
                    last_trig_t[j] = t
                    trig_count[j] += 1
                    trig = 1.0
                rel_p = 0.0
                rel_q = 0.0
            else:
                rel_p = rho_p - held[j, 0]
                rel_q = rho_q - held[j, 1]
            phi_p = g1 * held[j, 0]
            phi_q = g2 * held[j, 1]
            zpf = zp + phi_p if phi_p != 0.0 else zp
            zqf = zq + phi_q if phi_q != 0.0 else zq

            # secondary PI corrections
            u_p = (omega_nom - om0) + zpf
            integ_p[j] += ki_w * u_p * dt
            d_om = kp_w * u_p + integ_p[j]
            u_q = zqf
            integ_q[j] += ki_v * u_q * dt
            d_vj = kp_v * u_q + integ_q[j]

            # droop references and voltage-loop lag
            om_star = omega_nom - m_p[j] * pf0 + d_om
            vstar_d = v_nom - n_q[j] * qf0 + d_vj
            vc_d_new = vstar_d - vd0
            vc_q_new = -vq0
            vc_hist[k + 1, j, 0] = vc_d_new
            vc_hist[k + 1, j, 1] = vc_q_new
            vd[j] = vd0 + (dt / t_v) * vc_d_new
            vq[j] = vq0 + (dt / t_v) * vc_q_new
            theta[j] = theta[j] + dt * (om_star - omega_nom)
            omega[j] = om_star

            trace[k, j, 0] = om0
            trace[k, j, 1] = pf0
            trace[k, j, 2] = qf0
            trace[k, j, 3] = mpp
            trace[k, j, 4] = nqq
            trace[k, j, 5] = vd0
            trace[k, j, 6] = vq0
            trace[k, j, 7] = zp
            trace[k, j, 8] = zq
            trace[k, j, 9] = zpf
            trace[k, j, 10] = zqf
            trace[k, j, 11] = d_om
            trace[k, j, 12] = d_vj
            trace[k, j, 13] = vc_hist[k, j, 0]
            trace[k, j, 14] = vc_hist[k, j, 1]
            trace[k, j, 15] = rho_p
            trace[k, j, 16] = rho_q
            trace[k, j, 17] = held[j, 0]
            trace[k, j, 18] = held[j, 1]
            trace[k, j, 19] = trig
            trace[k, j, 20] = fresh
            trace[k, j, 21] = rel_p
            trace[k, j, 22] = rel_q

        # lossless network powers at the new state; loads at (k+1)*dt
        b = bmat_seg[bseg_idx[k]]
        pl = pload_seg[lseg_idx[k]]
        ql = qload_seg[lseg_idx[k]]
        for j in range(n):
            psum = 0.0
            qsum = 0.0
            for m in range(n):
                bjm = b[j, m]
                if bjm == 0.0:
                    continue
                ang = theta[j] - theta[m]
                psum += bjm * vd[j] * vd[m] * math.sin(ang)
                qsum += bjm * (vd[j] - vd[m] * math.cos(ang))
            p_j = psum + pl[j]
            q_j = vd[j] * qsum + ql[j]
            pf[j] = pf[j] + dt * omega_c * (p_j - pf[j])
            qf[j] = qf[j] + dt * omega_c * (q_j - qf[j])

        for j in range(n):
            psi_hist[k + 1, j, 0] = omega[j]
            psi_hist[k + 1, j, 1] = m_p[j] * pf[j]
            psi_hist[k + 1, j, 2] = n_q[j] * qf[j]
            ok = (math.isfinite(omega[j]) and math.isfinite(vd[j])
                  and math.isfinite(pf[j]) and math.isfinite(theta[j])
                  and math.isfinite(qf[j]))
            if not ok:
                return k * n + j + 1
    return 0


def _full_loop_numpy(n_steps, n, dt, omega_nom, v_nom, omega_c, t_v,
                     kp_w, ki_w, kp_v, ki_v,
                     d_factor, beta, tc_p, tc_q, g1, g2,
                     m_p, n_q, c_arr, impulse,
                     wseg_idx, weights_seg,
                     lseg_idx, pload_seg, qload_seg,
                     bseg_idx, bmat_seg,
                     deliver_send, content_send,
                     fdia_start, fdia_stop, fdia_alpha,
                     theta, vd, vq, pf, qf, omega, integ_p, integ_q,
                     vc_hist, psi_hist,
                     held, last_trig_t, last_ds, stamp_s, trig_count,
                     trace):
    window = impulse.shape[0]
    n_fdia = fdia_start.shape[0]
    dc_gain = float(impulse.sum())
    m_idx = np.broadcast_to(np.arange(n)[None, :], (n, n))
    tc = np.array([tc_p, tc_q])
    gains = np.array([g1, g2])
    for k in range(n_steps):
        t = k * dt
        w = weights_seg[wseg_idx[k]]
        evaluate = (k % d_factor) == 0

        om0 = omega.copy()
        pf0 = pf.copy()
        qf0 = qf.copy()
        vd0 = vd.copy()
        vq0 = vq.copy()
        mpp = m_p * pf0
        nqq = n_q * qf0

        s_idx = deliver_send[k]
        valid = s_idx >= 0
        c_idx = np.where(valid, content_send[k], 0)
        psi_r = psi_hist[c_idx, m_idx, :]
        for a in range(n_fdia):
            act = valid & (s_idx >= fdia_start[a]) & (s_idx < fdia_stop[a])
            if act.any():
                psi_r = psi_r + np.where(act[:, :, None], fdia_alpha[a], 0.0)
        wv = np.where(valid, w, 0.0)
        zp = c_arr * ((wv * ((psi_r[:, :, 0] - om0[:, None])
                             + (psi_r[:, :, 1] - mpp[:, None]))).sum(axis=1))
        zq = c_arr * ((wv * (psi_r[:, :, 2] - nqq[:, None])).sum(axis=1))

        newest = np.where(valid, s_idx, -1).max(axis=1)
        got = newest >= 0
        stamp_s[got] = np.maximum(stamp_s[got], newest[got] * dt)
        fresh = np.maximum(t - stamp_s, 0.0)

        if evaluate:
            ds = np.zeros((n, 2))
            for wi in range(window):
                ds += impulse[wi] * vc_hist[max(k - wi, 0)]
            last_ds[:] = ds
        rho = last_ds - np.stack([zp, zq], axis=1)
        if evaluate:
            env = np.exp(-(t - last_trig_t)[:, None] / tc) * dc_gain * vc_hist[k]
            lhs = np.sqrt((rho * rho).sum(axis=1))
            rhs = beta * np.sqrt((env * env).sum(axis=1))
            trig = lhs > rhs
            held[trig] = rho[trig]
            last_trig_t[trig] = t
            trig_count[trig] += 1
            rel = np.zeros((n, 2))
        else:
            trig = np.zeros(n, dtype=bool)
            rel = rho - held
        phi = gains * held
        zpf = np.where(phi[:, 0] != 0.0, zp + phi[:, 0], zp)
        zqf = np.where(phi[:, 1] != 0.0, zq + phi[:, 1], zq)

        u_p = (omega_nom - om0) + zpf
        integ_p += ki_w * u_p * dt
        d_om = kp_w * u_p + integ_p
        u_q = zqf
        integ_q += ki_v * u_q * dt
        d_vj = kp_v * u_q + integ_q

        om_star = omega_nom - m_p * pf0 + d_om
        vstar_d = v_nom - n_q * qf0 + d_vj
        vc_new = np.stack([vstar_d - vd0, -vq0], axis=1)
        vc_hist[k + 1] = vc_new
        vd += (dt / t_v) * vc_new[:, 0]
        vq += (dt / t_v) * vc_new[:, 1]
        theta += dt * (om_star - omega_nom)
        omega[:] = om_star

        b = bmat_seg[bseg_idx[k]]
        ang = theta[:, None] - theta[None, :]
        p_inst = ((b * vd[:, None] * vd[None, :] * np.sin(ang)).sum(axis=1)
                  + pload_seg[lseg_idx[k]])
        q_inst = (vd * (b * (vd[:, None] - vd[None, :] * np.cos(ang))).sum(axis=1)
                  + qload_seg[lseg_idx[k]])
        pf += dt * omega_c * (p_inst - pf)
        qf += dt * omega_c * (q_inst - qf)

        psi_hist[k + 1, :, 0] = omega
        psi_hist[k + 1, :, 1] = m_p * pf
        psi_hist[k + 1, :, 2] = n_q * qf

        tr = trace[k]
        tr[:, 0] = om0
        tr[:, 1] = pf0
        tr[:, 2] = qf0
        tr[:, 3] = mpp
        tr[:, 4] = nqq
        tr[:, 5] = vd0
        tr[:, 6] = vq0
        tr[:, 7] = zp
        tr[:, 8] = zq
        tr[:, 9] = zpf
        tr[:, 10] = zqf
        tr[:, 11] = d_om
        tr[:, 12] = d_vj
        tr[:, 13] = vc_hist[k, :, 0]
        tr[:, 14] = vc_hist[k, :, 1]
        tr[:, 15] = rho[:, 0]
        tr[:, 16] = rho[:, 1]
        tr[:, 17] = held[:, 0]
        tr[:, 18] = held[:, 1]
        tr[:, 19] = trig
        tr[:, 20] = fresh
        tr[:, 21] = rel[:, 0]
        tr[:, 22] = rel[:, 1]

        finite = (np.isfinite(omega) & np.isfinite(vd) & np.isfinite(pf)
                  & np.isfinite(theta) & np.isfinite(qf))
        if not finite.all():
            j = int(np.flatnonzero(~finite)[0])
            return k * n + j + 1
    return 0


def _abstract_loop_impl(n_steps, n, dt, d_steps, lap, psi_a, trace):
    for k in range(n_steps):
        idx = k - d_steps
        if idx < 0:
            idx = 0
        for j in range(n):
            for ch in range(3):
                acc = 0.0
                for m in range(n):
                    acc += lap[j, m] * psi_a[idx, m, ch]
                psi_a[k + 1, j, ch] = psi_a[k, j, ch] - dt * acc
                trace[k, j, ch] = psi_a[k, j, ch]
        for j in range(n):
            for ch in range(3):
                if not math.isfinite(psi_a[k + 1, j, ch]):
                    return k * n + j + 1
    return 0


def _abstract_loop_numpy(n_steps, n, dt, d_steps, lap, psi_a, trace):
    for k in range(n_steps):
        idx = max(k - d_steps, 0)
        trace[k] = psi_a[k]
        psi_a[k + 1] = psi_a[k] - dt * (lap @ psi_a[idx])
        if not np.isfinite(psi_a[k + 1]).all():
            bad = ~np.isfinite(psi_a[k + 1]).all(axis=1)
            return k * n + int(np.flatnonzero(bad)[0]) + 1
    return 0


_compiled: dict = {}


def get_full_loop(which: str | None = None):
    which = which or backend.DEFAULT_BACKEND
    if which == "numpy":
        return _full_loop_numpy
    if "full" not in _compiled:
        _compiled["full"] = backend.jit_compile(_full_loop_impl)
    return _compiled["full"]


def get_abstract_loop(which: str | None = None):
    which = which or backend.DEFAULT_BACKEND
    if which == "numpy":
        return _abstract_loop_numpy
    if "abstract" not in _compiled:
        _compiled["abstract"] = backend.jit_compile(_abstract_loop_impl)
    return _compiled["abstract"]

"""Convergence classification, phase portraits and file emission.

The secondary-control objectives are judged jointly: frequency within
``tol_freq`` of nominal and the droop-scaled active/reactive power spreads
within ``tol_share`` of their means, all holding continuously for a dwell
window.  Floats are serialized with 17 significant digits so emitted files
round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .engine import PACKET_LOG_COLUMNS, Trace

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class ConvergenceReport:
    """Outcome of the SC-objective classifier for one trace."""

    converged: bool
    conv_time: float | None         # s after the disturbance; None if not
    freq_error_final: float         # rad/s
    p_share_spread_final: float     # fraction of the mean
    q_share_spread_final: float     # fraction of the mean


@dataclass(frozen=True)
class PhasePortrait:
    """Ordered (m_p*P, n_q*Q) samples of one agent."""

    agent: int
    points: np.ndarray              # (k, 2)


def _rel_spread(values: np.ndarray) -> np.ndarray:
    """Per-row (max - min) / |mean| with a tiny-denominator guard."""
    spread = values.max(axis=1) - values.min(axis=1)
    mean = np.abs(values.mean(axis=1))
    return spread / np.maximum(mean, 1e-300)


def convergence_report(trace: Trace, disturbance_t: float,
                       tol_freq: float = 1e-3, tol_share: float = 0.01,
                       dwell: float = 0.5,
                       omega_nom: float | None = None) -> ConvergenceReport:
    """Classify a full-plant trace against the SC objectives.

    Converged iff some t* >= disturbance_t exists from which all criteria
    hold continuously for ``dwell`` seconds; conv_time is t* minus the
    disturbance time.
    """
    if omega_nom is None:
        omega_nom = trace.meta["omega_nom"]
    t = trace.t
    dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
    if t[-1] < disturbance_t + dwell - 1e-12:
        raise ValueError("trace too short: must cover disturbance_t + dwell")

    freq_err = np.abs(trace.column("omega") - omega_nom).max(axis=1)
    p_spread = _rel_spread(trace.column("mp_p"))
    q_spread = _rel_spread(trace.column("nq_q"))
    ok = (freq_err <= tol_freq) & (p_spread <= tol_share) & (q_spread <= tol_share)

    i0 = int(np.searchsorted(t, disturbance_t - 1e-12))
    dwell_steps = max(int(round(dwell / dt)), 1)
    ok_post = ok[i0:]
    # first index where ok holds for dwell_steps consecutive rows
    run = np.zeros(len(ok_post) + 1, dtype=np.int64)
    for i in range(len(ok_post) - 1, -1, -1):
        run[i] = run[i + 1] + 1 if ok_post[i] else 0
    hits = np.flatnonzero(run[:-1] >= dwell_steps)
    converged = hits.size > 0
    conv_time = float(t[i0 + hits[0]] - disturbance_t) if converged else None
    return ConvergenceReport(
        converged=bool(converged), conv_time=conv_time,
        freq_error_final=float(freq_err[-1]),
        p_share_spread_final=float(p_spread[-1]),
        q_share_spread_final=float(q_spread[-1]))


def consensus_settle(trace: Trace, shrink: float = 0.5,
                     window_frac: float = 0.1):
    """Decay classifier for abstract consensus traces.

    Measures the worst per-channel disagreement from the channel mean;
    converged iff the tail-window envelope shrinks below ``shrink`` times
    the head-window envelope (and the run did not diverge).  Returns
    (converged, settle_time).
    """
    data = trace.data
    if trace.meta.get("diverged") or data.shape[0] < 10:
        return False, None
    dev = np.abs(data - data.mean(axis=1, keepdims=True))
    disagreement = dev.max(axis=(1, 2))
    k = max(int(len(disagreement) * window_frac), 1)
    head = disagreement[:k].max()
    tail = disagreement[-k:].max()
    if head == 0.0:
        return True, 0.0
    if tail >= shrink * head:
        return False, None
    # earliest time after which the envelope never exceeds the threshold
    suffix_max = np.maximum.accumulate(disagreement[::-1])[::-1]
    idx = int(np.argmax(suffix_max <= shrink * head))
    return True, float(trace.t[idx])


def phase_portrait(trace: Trace, agent: int, stride: int = 1) -> PhasePortrait:
    """Extract the (m_p*P, n_q*Q) trajectory of one agent."""
    if not 0 <= agent < trace.n_agents:
        raise ValueError(f"agent {agent} not in trace")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    x = trace.column("mp_p")[::stride, agent]
    y = trace.column("nq_q")[::stride, agent]
    return PhasePortrait(agent=agent, points=np.stack([x, y], axis=1))


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return FLOAT_FMT % float(x)


def trace_csv_header(trace: Trace) -> list[str]:
    cols = ["step", "t"]
    for name in trace.columns:
        cols.extend(f"{name}_{j}" for j in range(trace.n_agents))
    return cols


def emit(obj, path: str, fmt: str = "csv") -> None:
    """Write a trace, report, portrait or packet log to ``path``.

    CSV files carry a documented header row; JSON files keep stable field
    ordering.  Floats round-trip exactly at 17 significant digits.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    try:
        if isinstance(obj, Trace):
            _emit_trace(obj, path, fmt)
        elif isinstance(obj, ConvergenceReport):
            _emit_report(obj, path, fmt)
        elif isinstance(obj, PhasePortrait):
            _emit_portrait(obj, path, fmt)
        elif isinstance(obj, np.ndarray) and obj.ndim == 2 and obj.shape[1] == 9:
            _emit_packets(obj, path, fmt)
        else:
            raise TypeError(f"cannot emit object of type {type(obj).__name__}")
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def _emit_trace(trace: Trace, path: str, fmt: str) -> None:
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(trace_csv_header(trace))
            n, cols = trace.n_agents, trace.data.shape[2]
            flat = trace.data.transpose(0, 2, 1).reshape(len(trace.t), n * cols)
            for k in range(len(trace.t)):
                w.writerow([str(k), _fmt(trace.t[k])]
                           + [_fmt(v) for v in flat[k]])
    else:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "columns": list(trace.columns),
            "t": [float(x) for x in trace.t],
            "data": trace.data.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)


def _emit_report(rep: ConvergenceReport, path: str, fmt: str) -> None:
    d = asdict(rep)
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION, **d}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(d.keys())
            w.writerow([d["converged"]]
                       + [_fmt(v) if isinstance(v, float) else v
                          for v in list(d.values())[1:]])


def _emit_portrait(pp: PhasePortrait, path: str, fmt: str) -> None:
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["mp_p", "nq_q"])
            for x, y in pp.points:
                w.writerow([_fmt(x), _fmt(y)])
    else:
        doc = {"schema_version": SCHEMA_VERSION, "agent": pp.agent,
               "points": pp.points.tolist()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)


def _emit_packets(log: np.ndarray, path: str, fmt: str) -> None:
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(PACKET_LOG_COLUMNS)
            for row in log:
                w.writerow([str(int(row[0])), _fmt(row[1]), str(int(row[2])),
                            str(int(row[3]))]
                           + [_fmt(v) for v in row[4:8]]
                           + [str(int(row[8]))])
    else:
        doc = {"schema_version": SCHEMA_VERSION,
               "columns": list(PACKET_LOG_COLUMNS),
               "rows": log.tolist()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)


def build_summary(trace: Trace, report: ConvergenceReport | None) -> dict:
    """Stable-ordered run summary for the JSON sidecar."""
    meta = trace.meta
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenario": meta.get("scenario"),
        "mode": meta.get("mode"),
        "seed": meta.get("seed"),
        "backend": meta.get("backend"),
        "steps": int(trace.n_steps),
        "dt": meta.get("dt"),
    }
    if report is not None:
        doc.update({
            "converged": report.converged,
            "conv_time": report.conv_time,
            "freq_error_final": report.freq_error_final,
            "p_share_spread_final": report.p_share_spread_final,
            "q_share_spread_final": report.q_share_spread_final,
        })
    if meta.get("mode") == "full":
        doc.update({
            "mca_enabled": meta.get("mca_enabled"),
            "trigger_count": meta.get("trigger_count"),
            "dropped_packets": meta.get("dropped_packets"),
            "tsa_clamped_samples": meta.get("tsa_clamped_samples"),
            "clock_skew_events": meta.get("clock_skew_events"),
        })
    else:
        doc["tau"] = meta.get("tau")
        doc["diverged"] = bool(meta.get("diverged"))
    return doc


def parse_trace_csv(path: str) -> tuple[list[str], np.ndarray]:
    """Load an emitted trace CSV back into (header, values)."""
    with open(path, "r", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(x) for x in row] for row in r]
    return header, np.array(rows) if rows else np.zeros((0, len(header)))

"""Deterministic simulator of networked DER agents under distributed
secondary consensus control, with injectable cyber attacks (latency,
dropout, time-synchronization, false-data injection) and a per-agent
semantic sampling / compensation layer."""

from .attacks import (AttackSpec, Channel, Packet, apply_dropout, apply_fdia,
                      apply_latency, apply_tsa, classify_fdia, make_fdia)
from .config import ConfigError, ReportSettings, ScenarioConfig, load_config, \
    load_config_file
from .control import (Psi, ScParams, Zeta, consensus_input,
                      frequency_correction, pack_psi, voltage_correction)
from .engine import SimulationDiverged, Trace, abstract_consensus_mode, \
    run_scenario, sweep_delay
from .graph import (CyberGraph, DisconnectedGraphWarning, LaplacianView,
                    TopologySchedule, build_graph, chain_graph,
                    complete_graph, delay_stability_bound, graph_at,
                    laplacian, max_laplacian_eigenvalue)
from .mca import (McaParams, McaState, compensate, feedback, mca_step,
                  prediction_error, reconstruct, replay_trigger_counts,
                  semantic_downsample, trigger_condition, update_semantics)
from .metrics import (ConvergenceReport, PhasePortrait, build_summary,
                      consensus_settle, convergence_report, emit,
                      phase_portrait)
from .plant import (DerState, DroopParams, ElectricalNetwork, InnerLoopParams,
                    LoadSchedule, droop_references, integrate_plant,
                    measure_filter, network_powers, vc_loop_step)
from .scenarios import get_scenario, get_scenario_doc, scenario_names

__version__ = "0.1.0"

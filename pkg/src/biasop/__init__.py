"""Simulation and analysis of biased-assimilation opinion dynamics on networks."""

from .bounds import (EnvelopeParams, Side, check_envelope, compute_alpha, compute_alpha_star,
                     compute_beta, compute_beta_star, envelope_params, envelope_sweep)
from .dynamics import (Drift, Trajectory, drift_sign, drift_signs, external_evidence, invariance_potential,
                       simulate, step_static, step_switching)
from .equilibria import (Family, enumerate_vertices, family_member, is_equilibrium,
                         numeric_search, residual)
from .graph import (GraphKind, Snapshot, SwitchingSchedule, WeightedGraph, make_graph,
                    round_robin_schedule, validate_schedule)
from .stability import (StabilityProtocol, Verdict, fd_jacobian, randomized_stability_test,
                        spectral_radius, vertex_scan)

__all__ = [
    "check_envelope",
    "compute_alpha",
    "compute_alpha_star",
    "compute_beta",
    "compute_beta_star",
    "Drift",
    "drift_sign",
    "drift_signs",
    "enumerate_vertices",
    "envelope_params",
    "envelope_sweep",
    "EnvelopeParams",
    "external_evidence",
    "Family",
    "family_member",
    "fd_jacobian",
    "GraphKind",
    "invariance_potential",
    "is_equilibrium",
    "make_graph",
    "numeric_search",
    "randomized_stability_test",
    "residual",
    "round_robin_schedule",
    "Side",
    "simulate",
    "Snapshot",
    "spectral_radius",
    "StabilityProtocol",
    "step_static",
    "step_switching",
    "SwitchingSchedule",
    "Trajectory",
    "validate_schedule",
    "Verdict",
    "vertex_scan",
    "WeightedGraph",
]

__version__ = "0.1.0"

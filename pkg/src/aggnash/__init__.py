"""Distributed Nash and generalized Nash equilibrium seeking in aggregative games."""

from .exceptions import (AggNashError, AssumptionViolationError, ConfigError, DimensionError,
                         DivergenceError, InfeasibleSetError, NoConvergenceError,
                         SafeguardViolationError, UnsupportedOperationError)
from .experiments import ExperimentConfig, emit_plot_script, run_monte_carlo
from .game import (AgentSpec, AggregativeGame, DemandResponseGame, DeviationTrackingGame,
                   QuadraticAggregativeGame, coupling_residual, estimate_monotonicity, f_tilde,
                   game_from_dict, pseudo_gradient, sigma)
from .network import (CommNetwork, build_complete, build_erdos_renyi, build_metropolis,
                      build_ring, from_weights, network_from_dict, validate)
from .oracles import (KktReport, RateFit, fit_qlinear_rate, kkt_residual, solve_ne, solve_vgne,
                      sp_diagnostics)
from .profile import RaggedLayout
from .projections import (AffineEquality, Ball, Box, DemandResponseLoad, Free, Halfspace,
                          Intersection, NonnegativeOrthant, ProjectionOperator, project,
                          project_feasible_demand_response)
from .trades import TRADES, TradesState, reduced_step
from .trades_c import TRADESC, TradesCState, centralized_pd_step, g_lambda, g_x, grad_h, h_penalty

__version__ = "0.1.0"

__all__ = [
    "AffineEquality", "AgentSpec", "AggNashError", "AggregativeGame", "AssumptionViolationError",
    "Ball", "Box", "CommNetwork", "ConfigError", "DemandResponseGame", "DemandResponseLoad",
    "DeviationTrackingGame", "DimensionError", "DivergenceError", "ExperimentConfig", "Free",
    "Halfspace",
    "InfeasibleSetError", "Intersection", "KktReport", "NoConvergenceError", "NonnegativeOrthant",
    "ProjectionOperator", "QuadraticAggregativeGame", "RaggedLayout", "RateFit",
    "SafeguardViolationError", "TRADES", "TRADESC", "TradesCState", "TradesState",
    "UnsupportedOperationError", "build_complete", "build_erdos_renyi", "build_metropolis",
    "build_ring", "centralized_pd_step", "coupling_residual", "emit_plot_script",
    "estimate_monotonicity", "f_tilde",
    "fit_qlinear_rate", "from_weights", "g_lambda", "g_x", "game_from_dict", "grad_h",
    "h_penalty", "kkt_residual", "network_from_dict", "project",
    "project_feasible_demand_response", "pseudo_gradient", "reduced_step", "run_monte_carlo",
    "sigma",
    "solve_ne", "solve_vgne", "sp_diagnostics", "validate",
]

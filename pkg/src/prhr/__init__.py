"""Stochastic p-robust hub location with regret-based sustainability risk."""
from .lp import LinearProgram, LpSolution, check_certificate, solve_lp
from .mip import MixedIntegerProgram, MipSolution, enumerate_binary_optimum, solve_mip
from .model import (BestRisk, Instance, NetworkDesign, RiskScale, ScalingBounds, build_linearized_milp,
                    chance_probability, compute_best_risk, estimate_scaling_bounds, evaluate_objective,
                    risk_regret)

__version__ = "0.1.0"

__all__ = ["LinearProgram", "LpSolution", "check_certificate", "solve_lp", "MixedIntegerProgram", "MipSolution",
           "enumerate_binary_optimum", "solve_mip", "BestRisk", "Instance", "NetworkDesign", "RiskScale",
           "ScalingBounds", "build_linearized_milp", "chance_probability", "compute_best_risk",
           "estimate_scaling_bounds", "evaluate_objective", "risk_regret"]

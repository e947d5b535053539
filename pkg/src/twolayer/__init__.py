"""Two-layer (refraction plus reflection) dividend strategies for spectrally positive Levy surplus."""
from .errors import TwoLayerError
from .levy_model import LevyModel, PhaseType, build_model, negative_roots, positive_root, psi, psi_derivative
from .mc_oracle import McEstimate, SimConfig, simulate_path_trace, simulate_value
from .optimizer import Case, Solution, solve, verify_smooth_fit
from .scale_kit import ScaleSet, build_scales
from .valuation import InjectionProblem, Problem, Strategy, capital_injection_value, value

__all__ = [
    "TwoLayerError", "LevyModel", "PhaseType", "build_model", "negative_roots", "positive_root", "psi",
    "psi_derivative", "McEstimate", "SimConfig", "simulate_path_trace", "simulate_value", "Case", "Solution",
    "solve", "verify_smooth_fit", "ScaleSet", "build_scales", "InjectionProblem", "Problem", "Strategy",
    "capital_injection_value", "value",
]

"""Value of the optimal strategy against perturbed (a, b) pairs for the two reference cases."""
from pathlib import Path

import numpy as np

from twolayer.experiments import load_config, perturbed_strategies
from twolayer import solve, value

configs = Path(__file__).resolve().parent.parent / "configs"
xs = np.linspace(0.0, 10.0, 200)

for name in ("fig1_case1.toml", "fig1_case2.toml"):
    problem = load_config(configs / name).problem()
    sol = solve(problem)
    best = value(problem, sol.strategy, xs)
    print(f"{name}: {sol.case.value}, a* = {sol.a_star:.4f}, b* = {sol.b_star:.4f}")
    for s in perturbed_strategies(sol):
        excess = np.max(value(problem, s, xs) - best)
        print(f"  (a, b) = ({s.a:.3f}, {s.b:.3f})  max excess over optimum {excess: .2e}")

"""Barrier dividends with capped capital injections, solved through the drift shift."""
import numpy as np

from twolayer import InjectionProblem, PhaseType, build_model, capital_injection_value, solve

# surplus drift 1.1 before the shift; injections at rate up to 0.1 cost beta_A per unit
model_hat = build_model(1.1, 0.0, 4.0, PhaseType.exponential(2.0), 0.1)
hat = InjectionProblem(model_hat, q=0.2, beta_A=1.0, beta_S=0.6, rho_hat=-0.5)

sol = solve(hat.transformed())
print("levels in the shifted problem:", sol.case.value, round(sol.a_star, 4), round(sol.b_star, 4))

xs = np.linspace(0.0, 3.0, 7)
for x, v in zip(xs, capital_injection_value(hat, xs)):
    print(f"V({x:.1f}) = {v:.6f}")

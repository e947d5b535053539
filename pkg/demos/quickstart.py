"""Solve the exponential-jump problem and look at the value function."""
import numpy as np

from twolayer import PhaseType, Problem, build_model, solve, value, verify_smooth_fit

# drift c_Y = 1 paid out as premium, exponential claims of mean 1/2 at rate 4, cap delta = 0.1
model = build_model(1.0, 0.0, 4.0, PhaseType.exponential(2.0), 0.1)
problem = Problem.normalized(model, q=0.2, beta=0.6, rho=0.0)

sol = solve(problem)
print(sol.case.value, "a* =", round(sol.a_star, 6), "b* =", round(sol.b_star, 6))

# smooth fit: derivative gaps at the two levels should be round-off
for k, v in verify_smooth_fit(problem, sol).items():
    print(f"{k:>16} {v: .2e}")

xs = np.linspace(0.0, 4.0, 9)
for x, v in zip(xs, value(problem, sol.strategy, xs)):
    print(f"v({x:.1f}) = {v:.6f}")

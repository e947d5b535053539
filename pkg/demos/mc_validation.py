"""Compare the closed-form value with the Monte Carlo oracle on a few cells."""
from twolayer import PhaseType, Problem, SimConfig, Strategy, build_model, simulate_value, value

model = build_model(1.0, 0.0, 4.0, PhaseType.exponential(2.0), 0.1)
problem = Problem.normalized(model, q=0.2, beta=0.6, rho=1.0)

for a, b in ((0.5, 2.0), (1.0, 3.0), (1.5, 4.0)):
    s = Strategy(a, b)
    for x0 in (0.5, 2.0, 5.0):
        est = simulate_value(problem, s, x0, SimConfig(n_paths=20_000, seed=7))
        exact = value(problem, s, x0)
        z = (est.mean - exact) / est.stderr
        print(f"a={a} b={b} x={x0}: exact {exact:.5f}  mc {est.mean:.5f} +- {est.stderr:.5f}  z {z:+.2f}")

"""Adaptive refinement on the L-shaped domain.

The exact solution r^(2/3) sin(2θ/3) has a singular gradient at the re-entrant
corner. Uniform refinement then converges like N_dof^(-1/3) whatever the degree.
Dörfler marking combined with newest-vertex bisection restores the optimal
slope, -(k+1)/2. The run prints both error histories and the estimator's
effectivity index.

    python demos/adaptive_lshape.py
"""
from hho.estimators import adapt_loop, lshape_problem, ndof_slope, uniform_loop

for k in (0, 1):
    adaptive = adapt_loop(lshape_problem(1), k, theta=0.5, max_iter=40, max_ndof=2500)
    uniform = uniform_loop(lshape_problem(1), k, 5)
    print(f"\nk = {k}: adaptive")
    print(f"{'iter':>4} {'ndof':>6} {'error':>11} {'estimate':>11} {'eff':>6}")
    for s in adaptive:
        print(f"{s.iteration:4d} {s.ndof:6d} {s.error:11.3e} {s.estimator.bound:11.3e} {s.estimator.effectivity:6.2f}")
    print(f"slope vs N_dof: adaptive {ndof_slope(adaptive):.2f}, uniform {ndof_slope(uniform, 3):.2f}, "
          f"optimal {-(k + 1) / 2:.2f}")

"""p-Laplace with Newton's method.

The benchmark u = exp(x + πy) is solved for p = 7/4 and p = 4 with Dirichlet
data g = u. The script prints the Newton iteration counts and the error in the
discrete W^{1,p} norm for each mesh level. For p < 2 the predicted order is
(k+1)(p-1). For p > 2 it is (k+1)/(p-1). Because the benchmark's gradient never
vanishes, p = 7/4 converges faster than predicted, at about k+1. For p = 4 the
stabilization term keeps the error at the predicted rate.

    python demos/plaplace_newton.py
"""
from hho.mesh import generate_mesh
from hho.plaplace import exp_benchmark, newton_solve, plap_errors
from hho.poisson import eoc

for p in (1.75, 4.0):
    u, grad_u, f = exp_benchmark(p)
    for k in (0, 1):
        print(f"\np = {p}, k = {k}")
        h, err = [], []
        for n in (4, 8, 16, 32):
            mesh = generate_mesh("triangular", n)
            res = newton_solve(mesh, k, f, p, g=u)
            h.append(mesh.h)
            err.append(plap_errors(res.u, u, grad_u, p).discrete)
            print(f"  n = {n:2d}: {res.iterations:2d} Newton steps, residual {res.final_residual:.1e}, "
                  f"error {err[-1]:.3e}")
        print("  observed orders:", " ".join(f"{r:.2f}" for r in eoc(h, err)[1:]))

"""Poisson on three mesh families: error tables, flux balance and condensation.

Solves -Δu = f with u = sin(πx)sin(πy) on the unit square for k = 0..2 and
prints the energy and L2 errors against h together with the observed orders.
The energy error should decay like h^(k+1) and the L2 error like h^(k+2).

    python demos/poisson_convergence.py
"""
import numpy as np

from hho.mesh import generate_mesh
from hho.poisson import compute_errors, eoc, fluxes_and_balance, sinsin, solve_poisson

u, grad_u, f = sinsin()

for kind in ("triangular", "cartesian", "voronoi_polygonal"):
    for k in (0, 1, 2):
        print(f"\n{kind}, k = {k}")
        print(f"{'h':>9} {'ndof':>7} {'energy':>11} {'eoc':>6} {'L2':>11} {'eoc':>6} {'balance':>9}")
        rows = []
        for n in (4, 8, 16, 32):
            mesh = generate_mesh(kind, n)
            uh = solve_poisson(mesh, k, f)
            err = compute_errors(uh, u, grad_u)
            flux = fluxes_and_balance(uh, f)
            rows.append((err.h, err.ndof, err.energy, err.l2_element, flux.max_balance))
        h, ndof, en, l2, bal = map(np.array, zip(*rows))
        for i in range(len(h)):
            e1, e2 = eoc(h, en)[i], eoc(h, l2)[i]
            print(f"{h[i]:9.4f} {ndof[i]:7d} {en[i]:11.3e} {e1:6.2f} {l2[i]:11.3e} {e2:6.2f} {bal[i]:9.1e}")

"""Diffusion-advection-reaction across Péclet regimes.

A rotating velocity field advects u = sin(πx)sin(πy), with reaction μ = 1 and
diffusion κ in {1, 1e-3, 0}. The error is measured in the sharp norm, which
combines diffusion, upwinding and the advective derivative. Its order moves
from k+1 (diffusion-dominated, small Péclet numbers) to k+1/2 (pure advection).

    python demos/advection_regimes.py
"""
import numpy as np

from hho.adr import AdrDiscretization, peclet_and_norms, rotating_benchmark, sharp_error
from hho.mesh import generate_mesh
from hho.poisson import eoc

for kappa in (1.0, 1e-3, 0.0):
    data, u, _ = rotating_benchmark(kappa)
    for k in (0, 1):
        h, err, pe = [], [], []
        for n in (4, 8, 16, 32):
            mesh = generate_mesh("triangular", n)
            disc = AdrDiscretization(mesh, k, data)
            uh = disc.solve()
            h.append(mesh.h)
            err.append(sharp_error(disc, uh, u))
            pe.append(np.max(peclet_and_norms(disc, uh).peclet))
        rates = " ".join(f"{r:.2f}" for r in eoc(h, err)[1:])
        print(f"kappa = {kappa:<6g} k = {k}: errors {' '.join(f'{e:.2e}' for e in err)}; orders {rates}; "
              f"max Pe_T on finest mesh {pe[-1]:.3g}")

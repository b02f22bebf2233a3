"""A short walk through the library API on a small massive free field."""
import numpy as np

from glx import (BoxDomain, CellSpec, GaussianSampler, ModelSpec, build_family, compute_bounds,
                 finite_green, kallenberg_check, kappa, ks_distance, gumbel_cdf, scaling_constants,
                 simulate_maxima)
from glx.green import InfiniteGreen

model = ModelSpec.massive(d=2, theta=0.3)
dom = BoxDomain(2, 24, delta=0.1)
G = finite_green(model, dom)
g0 = InfiniteGreen(model).at_zero()
print(f"g(0) = {g0:.6f}, kappa = {kappa(model).kappa:.4f}")

fam = build_family(model, dom, z=0.0, s_N=np.log(dom.N), green=G)
rep = compute_bounds(fam)
print(f"lambda = {rep.lam:.4f}  b1 = {rep.b1:.3e}  b2 = {rep.b2:.3e}  b3 = {rep.b3:.3e}")
print(f"|P(W=0) - exp(-lambda)| <= {rep.void_gap_bound:.3e}")

sampler = GaussianSampler(G.matrix)
ms = simulate_maxima(sampler, dom, "full", 2000, seed=1, g0=g0)
print(f"KS distance of box maxima to the Gumbel law: {ks_distance(ms, gumbel_cdf):.4f}")

cells = [CellSpec((0.0, 0.0), (0.5, 1.0), ((-1.0, np.inf),)),
         CellSpec((0.5, 0.0), (1.0, 1.0), ((-1.0, np.inf),))]
kr = kallenberg_check(sampler, dom, cells, 2000, seed=2, scaling=scaling_constants(g0, dom.N))
for j, c in enumerate(cells):
    print(f"cell {j}: mean {kr.mean[j]:.3f} +- {kr.se[j]:.3f}, intensity {kr.intensity[j]:.3f}")

"""
Kinetic equation with initial correlations
===========================================

The one-particle function can be computed three ways: by the iterated series,
by the truncated Vlasov hierarchy and by the kinetic equation with a dressed
collision term.  For chaotic data the three agree as the truncation grows.
With interacting correlated data the hierarchy also sees three-body
correlations that the kinetic equation cannot, and a gap remains.
"""

import numpy as np

from bbgky import EntitySpace, JumpModel, random_kernels
from bbgky.meanfield import (CorrelatedInitialState, adjudicate_dressing, f1_series,
                             state_vlasov_hierarchy_evolve, vlasov_solve)

space = EntitySpace(1, (0.0, 1.0), max_order=10)
model = JumpModel(space, random_kernels(space, np.random.default_rng(5)))
f1 = np.array([0.7, 1.3])
t = 1.0

###############################################################################
# Chaotic data: the hierarchy converges to the kinetic solution

chaos = CorrelatedInitialState.chaotic(f1, 9, space)
kin = vlasov_solve(chaos, [0.0, t], model).values[-1]
for N in (3, 5, 7, 9):
    hier = state_vlasov_hierarchy_evolve(chaos.assemble(N), t, model)[1]
    print(f"N={N}: |hierarchy - kinetic| = {np.max(np.abs(hier - kin)):.1e}")

###############################################################################
# Correlated data: series and hierarchy agree, the kinetic equation does not

a = np.array([1.3, -0.7])
g2 = 1 + 0.5 * np.outer(a, a)
init = CorrelatedInitialState.from_pair_correlation(f1, g2, 4, space)
series, terms, tail = f1_series(init, t, model, 3)
hier = state_vlasov_hierarchy_evolve(init.assemble(4), t, model)[1]
kin = vlasov_solve(init, [0.0, t], model).values[-1]
print("series vs hierarchy:", np.max(np.abs(series - hier)))
print("kinetic vs hierarchy:", np.max(np.abs(kin - hier)))

###############################################################################
# Same f1 and g2, different g3: only the hierarchy notices

g = [np.array(x, copy=True) for x in init.g]
g[3] = g[3] + 0.2 * np.einsum("i,j,k->ijk", a, a, a)
other = CorrelatedInitialState(f1, g, space)
hier2 = state_vlasov_hierarchy_evolve(other.assemble(4), t, model)[1]
kin2 = vlasov_solve(other, [0.0, t], model).values[-1]
print("hierarchy shift:", np.max(np.abs(hier2 - hier)), " kinetic shift:",
      np.max(np.abs(kin2 - kin)))

###############################################################################
# Without interaction only one reading of the dressing is exact

free = JumpModel(space, model.kernels.without_interaction())
adj = adjudicate_dressing(init, t, free)
print("residuals:", adj["residuals"], "->", adj["adjudicated"])

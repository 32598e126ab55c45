"""
Mean-field scaling of the dual hierarchy
=========================================

With the interaction rate scaled by eps, the scaled cumulant expansion of the
dual group tends to the limit expansion as eps goes to zero.  We scan eps
and fit the convergence order on a log-log scale.
"""

import numpy as np

from bbgky import EntitySpace, JumpModel, random_kernels
from bbgky.meanfield import (dual_vlasov_evolve, fit_loglog_slope, limit_expansion,
                             one_body_limit_error, scaled_expansion_error)
from bbgky.state_space import SequenceVector, symmetrize

rng = np.random.default_rng(2)
space = EntitySpace.uniform(3)
model = JumpModel(space, random_kernels(space, rng))
b = SequenceVector([np.asarray(0.0)] + [symmetrize(rng.uniform(-1, 1, (3,) * s))
                                        for s in (1, 2, 3)])

###############################################################################
# The limit expansion solves the dual Vlasov hierarchy

t = 0.5
lim = limit_expansion(b, t, model)
print("dual Vlasov vs limit expansion:", (dual_vlasov_evolve(b, t, model) - lim).max_abs())

###############################################################################
# Error scan; both columns should shrink roughly linearly in eps

eps = [0.2, 0.1, 0.05, 0.025]
full = [scaled_expansion_error(b, t, e, 3, model, limit=lim) for e in eps]
one = [one_body_limit_error(b[3], t, e, model) for e in eps]
print("  eps    scaled expansion   one-body semigroup")
for row in zip(eps, full, one):
    print("{:6.3f}   {:.3e}          {:.3e}".format(*row))
print(f"fitted slopes: {fit_loglog_slope(eps, full):.3f}, {fit_loglog_slope(eps, one):.3f}")

###############################################################################
# At later times the O(eps^2) term is larger and bends the fit at coarse eps

t = 1.0
lim = limit_expansion(b, t, model)
full = [scaled_expansion_error(b, t, e, 3, model, limit=lim) for e in eps]
print(f"t=1 slope {fit_loglog_slope(eps, full):.3f}, "
      f"fine-eps slope {fit_loglog_slope(eps[1:], full[1:]):.3f}")

"""
Observables, states and the hierarchy groups
=============================================

A few entities jump on a three-point grid.  Observables evolve through the
dual hierarchy, states through the hierarchy of marginals, and the pairing
between the two is conserved.
"""

import math

import numpy as np

from bbgky import EntitySpace, JumpModel, pair, random_kernels
from bbgky.hierarchies import bbgky_evolve, cumulant, dual_bbgky_evolve, observable_cluster
from bbgky.state_space import SequenceVector, c_gamma_norm, symmetrize

rng = np.random.default_rng(1)
space = EntitySpace.uniform(3)
model = JumpModel(space, random_kernels(space, rng))

###############################################################################
# Sequences of symmetric functions up to three entities

b = SequenceVector([np.asarray(0.0)] + [symmetrize(rng.uniform(-1, 1, (3,) * s))
                                        for s in (1, 2, 3)])
f = SequenceVector([np.asarray(1.0)] + [symmetrize(rng.uniform(0, 1, (3,) * s))
                                        for s in (1, 2, 3)], "state")

###############################################################################
# Both sides of the pairing agree to rounding at every time

print(" t     <U b, f>            <b, U* f>           rel. gap")
for t in (0.1, 0.5, 1.0):
    lhs = pair(dual_bbgky_evolve(b, t, model), f, space)
    rhs = pair(b, bbgky_evolve(f, t, model), space)
    print(f"{t:4.1f}  {lhs: .15f}  {rhs: .15f}  {abs(lhs - rhs) / abs(lhs):.1e}")

###############################################################################
# The dual group stays inside its norm bound

gamma = b.norm_param
bound = math.e ** 2 / (1 - gamma * math.e)
for t in (0.5, 1.0):
    ratio = c_gamma_norm(dual_bbgky_evolve(b, t, model)) / c_gamma_norm(b)
    print(f"t={t}: norm growth {ratio:.3f} vs bound {bound:.3f}")

###############################################################################
# Cumulants of order 1 + n are O(t^n) for small t

b4 = rng.uniform(-1, 1, (3,) * 4)
for n in (1, 2, 3):
    X = tuple(range(4 - n, 4))
    sizes = [np.max(np.abs(cumulant(t, observable_cluster(4, X), model) @ b4))
             for t in (1e-2, 1e-3)]
    print(f"order {1 + n}: shrink over one decade in t = {sizes[0] / sizes[1]:.1f}")

"""
Monte Carlo check of the marginal evolution
============================================

Sample two-entity trajectories with the Gillespie algorithm and compare the
empirical two-particle marginal with the exact adjoint semigroup.
"""

import os
import time

import numpy as np

from bbgky import EntitySpace, JumpModel, random_kernels
from bbgky.dynamics import empirical_marginal, gillespie_ensemble
from bbgky.state_space import product_weights

rng = np.random.default_rng(8)
space = EntitySpace(1, (0.0, 1.0))
kernels = random_kernels(space, rng)
model = JumpModel(space, kernels)

f1 = np.array([0.6, 1.4])
f0 = np.outer(f1, f1)
t, R = 1.0, 100_000

start = time.perf_counter()
final = gillespie_ensemble(kernels, space, f0, 1.0, t, R, seed=8, workers=os.cpu_count() or 1)
print(f"{R} replicas in {time.perf_counter() - start:.1f} s")

###############################################################################
# Probabilities of the four joint states

W = product_weights(space, 2)
exact = (model.semigroup(2, t, 1.0, "state") @ f0.reshape(-1)).reshape(2, 2)
p = (W * exact).reshape(-1)
q = (W * empirical_marginal(final, [0, 1], space).values).reshape(-1)
for k, (pk, qk) in enumerate(zip(p, q)):
    print(f"state {k}: exact {pk:.4f}  sampled {qk:.4f}")

tv = 0.5 * np.abs(p - q).sum()
band = 0.5 * np.sum(3 * np.sqrt(p * (1 - p) / R))
print(f"total variation {tv:.4f}, 3 sigma band {band:.4f}")

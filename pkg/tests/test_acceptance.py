"""Acceptance criteria 1-8, each at its stated tolerance.

Every test appends one pass/fail line to the "acceptance criteria" section of
the terminal summary before asserting.
"""
import math
import os
import time

import numpy as np
import pytest

from bbgky.combinatorics import partition_weight_sum
from bbgky.dynamics import (JumpModel, catalog, empirical_marginal, gillespie_ensemble,
                            random_kernels)
from bbgky.hierarchies import (annihilation_op, apply_lambda, apply_lambda_star, bbgky_evolve,
                               commutator, creation_op, cumulant, dual_bbgky_evolve,
                               exp_annihilation, exp_creation, generator_B, generator_Bstar,
                               observable_cluster)
from bbgky.meanfield import (INVERSE_DRESSED, CorrelatedInitialState, adjudicate_dressing,
                             correlations_propagation_check, f1_series, fit_loglog_slope,
                             limit_expansion, one_body_limit_error, scaled_expansion_error,
                             state_vlasov_hierarchy_evolve, vlasov_solve)
from bbgky.state_space import (EntitySpace, apply, c_gamma_norm, lift_operator, pair,
                               product_weights, symmetrize)

from conftest import ACCEPTANCE_LINES, random_observables, random_states


def report(number, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")


def standard_scenario(max_order=4):
    """Two-state space, uniform redistribution kernels, random pair correlation."""
    space = EntitySpace(1, (0.0, 1.0), max_order=10)
    model = JumpModel(space, catalog("uniform-redistribution", space))
    rng = np.random.default_rng(11)
    f1 = rng.uniform(0.5, 1.5, 2)
    f1 /= space.weights @ f1
    g2 = 1 + 0.3 * symmetrize(rng.uniform(-1, 1, (2, 2)))
    init = CorrelatedInitialState.from_pair_correlation(f1, g2, max_order, space)
    return space, model, init, rng


def test_criterion_1_duality():
    start = time.perf_counter()
    space = EntitySpace.uniform(3)
    rng = np.random.default_rng(101)
    model = JumpModel(space, random_kernels(space, rng))
    worst = 0.0
    for _ in range(3):
        b, f = random_observables(rng, 3, 3), random_states(rng, 3, 3)
        for eps in (0.1, 1.0):
            for t in (0.1, 0.5, 1.0):
                lhs = pair(dual_bbgky_evolve(b, t, model, eps), f, space)
                rhs = pair(b, bbgky_evolve(f, t, model, eps), space)
                worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    wall = time.perf_counter() - start
    ok = worst <= 1e-9 and wall < 60
    report(1, ok, f"duality relative residual {worst:.2e} (<= 1e-9), {wall:.1f} s (< 60 s)")
    assert ok


def rate_residuals(model, b, t, eps=1.0):
    s, K = b.ndim, model.K
    j = s - 1
    # order 1: (A1(t) b - b)/t -> Lambda b
    A1 = cumulant(t, observable_cluster(s), model, eps)
    r1 = np.max(np.abs((A1 @ b - b) / t - apply(model.generator(s, eps), b)))
    # order 2 on a function lifted constant in the removed slot
    const = np.broadcast_to(b.mean(axis=j, keepdims=True), b.shape).copy()
    A2 = cumulant(t, observable_cluster(s, (j,)), model, eps)
    rate = sum(eps * apply(lift_operator(model.L2, [i, j], s, K), const) for i in range(j))
    r2 = np.max(np.abs(A2 @ const / t - rate))
    higher = [np.max(np.abs(cumulant(t, observable_cluster(s, tuple(range(s - n, s))),
                                     model, eps) @ b)) / t for n in (2, 3)]
    return r1, r2, higher


def test_criterion_2_cumulant_rates():
    space = EntitySpace.uniform(3)
    rng = np.random.default_rng(202)
    model = JumpModel(space, random_kernels(space, rng))
    b = rng.uniform(-1, 1, (3,) * 4)
    coarse, fine = rate_residuals(model, b, 1e-2), rate_residuals(model, b, 1e-3)
    shrink = [coarse[0] / fine[0], coarse[1] / fine[1]]
    shrink += [c / f for c, f in zip(coarse[2], fine[2])]
    ok = min(shrink) >= 5
    report(2, ok, "shrink factors order1 {:.2f}, order2 {:.2f}, n=2 {:.2f}, n=3 {:.2f} (>= 5)"
           .format(*shrink))
    assert ok


def test_criterion_3_norm_bounds():
    space = EntitySpace.uniform(3)
    rng = np.random.default_rng(303)
    model = JumpModel(space, random_kernels(space, rng))
    s = 4
    ratio = 0.0
    for n in range(4):
        assert partition_weight_sum(n + 1) <= math.factorial(n) * math.e ** (n + 2)
        for t in (0.1, 0.5, 1.0):
            op = cumulant(t, observable_cluster(s, tuple(range(s - n, s))), model).matrix
            norm = np.max(np.sum(np.abs(op), axis=1))
            ratio = max(ratio, norm / (math.factorial(n) * math.e ** (n + 2)))
    gamma = 0.3
    group = 0.0
    for case in range(100):
        m = model if case % 2 else JumpModel(space, random_kernels(space, rng))
        b = random_observables(rng, 3, 3)
        b.norm_param = gamma
        t = rng.uniform(0.05, 1.0)
        Ub = dual_bbgky_evolve(b, t, m)
        group = max(group, c_gamma_norm(Ub, gamma)
                    / (math.e ** 2 / (1 - gamma * math.e) * c_gamma_norm(b, gamma)))
    ok = ratio <= 1 and group <= 1
    report(3, ok, f"cumulant norm / n! e^(n+2) max {ratio:.3f}, dual group bound ratio "
                  f"max {group:.3f} over 100 cases (<= 1)")
    assert ok


def test_criterion_4_conjugations():
    space = EntitySpace.uniform(3)
    rng = np.random.default_rng(404)
    model = JumpModel(space, random_kernels(space, rng))
    worst = 0.0
    for eps in (0.2, 1.0):
        b, f = random_observables(rng, 3, 3), random_states(rng, 3, 3)
        B = exp_creation(apply_lambda(exp_creation(b, 1.0), model, eps), -1.0)
        worst = max(worst, (generator_B(b, model, eps) - B).max_abs())
        Bs = exp_annihilation(apply_lambda_star(exp_annihilation(f, space, -1.0), model, eps),
                              space, 1.0)
        worst = max(worst, (generator_Bstar(f, model, eps) - Bs).max_abs())
        lam = lambda x: apply_lambda(x, model, eps)
        lam_s = lambda x: apply_lambda_star(x, model, eps)
        ann = lambda x: annihilation_op(x, space)
        worst = max(worst, commutator(commutator(lam, creation_op), creation_op)(b).max_abs(),
                    commutator(ann, commutator(ann, lam_s))(f).max_abs())
    ok = worst <= 1e-10
    report(4, ok, f"conjugations and double commutators max residual {worst:.2e} (<= 1e-10)")
    assert ok


def test_criterion_5_meanfield_slopes():
    # K = 3, random kernels and observables from a fixed seed, t = 0.5
    start = time.perf_counter()
    space = EntitySpace.uniform(3)
    rng = np.random.default_rng(505)
    model = JumpModel(space, random_kernels(space, rng))
    b = random_observables(rng, 3, 3)
    eps = [0.2, 0.1, 0.05, 0.025]
    slopes = {}
    for t in (0.5, 1.0):
        lim = limit_expansion(b, t, model)
        err = [scaled_expansion_error(b, t, e, 3, model, limit=lim) for e in eps]
        kato = [one_body_limit_error(b[3], t, e, model) for e in eps]
        slopes[t] = (fit_loglog_slope(eps, err), fit_loglog_slope(eps, kato))
    wall = time.perf_counter() - start
    full, one = slopes[0.5]
    ok = full >= 0.9 and one >= 0.9 and wall < 300
    report(5, ok, f"t=0.5 slopes: scaled expansion {full:.3f}, one-body {one:.3f} (>= 0.9), "
                  f"{wall:.1f} s; t=1 for reference {slopes[1.0][0]:.3f}, {slopes[1.0][1]:.3f}")
    assert ok


def test_criterion_6_kinetic_consistency():
    space, model, init, _ = standard_scenario()
    times = [0.25, 0.5, 0.75, 1.0]
    sol = vlasov_solve(init, [0.0] + times, model, INVERSE_DRESSED)
    gaps = {"series-hierarchy": 0.0, "kinetic-series": 0.0, "kinetic-hierarchy": 0.0}
    mass = sol.info["max_mass_defect"]
    for t, kin in zip(times, sol.values[1:]):
        series, _, _ = f1_series(init, t, model, 3)
        hier = state_vlasov_hierarchy_evolve(init.assemble(4), t, model)[1]
        gaps["series-hierarchy"] = max(gaps["series-hierarchy"], np.max(np.abs(series - hier)))
        gaps["kinetic-series"] = max(gaps["kinetic-series"], np.max(np.abs(kin - series)))
        gaps["kinetic-hierarchy"] = max(gaps["kinetic-hierarchy"], np.max(np.abs(kin - hier)))
        mass = max(mass, abs(space.weights @ hier - 1), abs(space.weights @ series - 1))
    ok = max(gaps.values()) <= 1e-6 and mass <= 1e-10
    detail = ", ".join(f"{k} {v:.2e}" for k, v in gaps.items())
    report(6, ok, f"{detail} (<= 1e-6); mass defect {mass:.2e} (<= 1e-10)")
    assert ok


def test_criterion_7_propagation():
    space, model, init, rng = standard_scenario(max_order=7)
    b1 = rng.uniform(-1, 1, 2)
    b2 = symmetrize(rng.uniform(-1, 1, (2, 2)))
    k1 = max(correlations_propagation_check(1, b1, init, t, model)[2] for t in (0.5, 1.0))
    k2 = correlations_propagation_check(2, b2, init, 0.5, model)[2]
    chaos = CorrelatedInitialState.chaotic(init.f1, 9, space)
    k2_chaos = correlations_propagation_check(2, b2, chaos, 0.5, model)[2]
    free = JumpModel(space, model.kernels.without_interaction())
    adj = adjudicate_dressing(init, 1.0, free, b2)
    free_res = adj["residuals"][adj["adjudicated"]]
    ok = max(k1, k2, k2_chaos) <= 1e-6 and free_res <= 1e-9
    report(7, ok, f"k=1 {k1:.2e}, k=2 correlated {k2:.2e}, k=2 chaotic {k2_chaos:.2e} "
                  f"(<= 1e-6); interaction-free {free_res:.2e} (<= 1e-9) "
                  f"passed by '{adj['adjudicated']}'")
    assert ok


def test_criterion_8_gillespie():
    start = time.perf_counter()
    space = EntitySpace(1, (0.0, 1.0))
    rng = np.random.default_rng(808)
    kernels = random_kernels(space, rng)
    model = JumpModel(space, kernels)
    f1 = rng.uniform(0.5, 1.5, 2)
    f0 = np.outer(f1, f1) / (space.weights @ f1) ** 2
    R, t = 100_000, 1.0
    final = gillespie_ensemble(kernels, space, f0, 1.0, t, R, seed=808,
                               workers=os.cpu_count() or 1)
    exact = (model.semigroup(2, t, 1.0, "state") @ f0.reshape(-1)).reshape(2, 2)
    W = product_weights(space, 2)
    p = (W * exact).reshape(-1)
    q = (W * empirical_marginal(final, [0, 1], space).values).reshape(-1)
    tv = 0.5 * np.abs(q - p).sum()
    band = 0.5 * np.sum(3 * np.sqrt(p * (1 - p) / R))
    wall = time.perf_counter() - start
    ok = tv <= band and wall < 120
    report(8, ok, f"TV {tv:.4f} within 3 sigma band {band:.4f}, {R} replicas, {wall:.1f} s")
    assert ok

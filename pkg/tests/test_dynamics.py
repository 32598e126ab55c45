import math

import numpy as np
import pytest

from bbgky.combinatorics import ResourceCapError
from bbgky.dynamics import (CATALOG_NAMES, JumpModel, KernelSet, adjoint_generator, build_lambda,
                            catalog, empirical_marginal, evolve, gillespie_ensemble,
                            gillespie_sample, one_body_matrix, random_kernels, replica_rng,
                            validate_kernels)
from bbgky.state_space import EntitySpace, product_weights


def two_state_kernels(rate2=0.0):
    # with unit weights the uniform destination density is 1/2
    sp = EntitySpace(1, (0.0, 1.0), weights=[1.0, 1.0])
    k = KernelSet(np.ones(2), np.full((2, 2), 0.5), np.full((2, 2), rate2),
                  np.full((2, 2, 2), 0.5))
    return sp, k


def test_two_state_generator():
    sp, k = two_state_kernels()
    L = build_lambda(k, sp, 1).matrix
    np.testing.assert_allclose(L @ [1.0, -1.0], [-1.0, 1.0])
    U = evolve(build_lambda(k, sp, 1), math.log(2))
    np.testing.assert_allclose(U @ [1.0, -1.0], [0.5, -0.5], atol=1e-14)


def test_evolve_against_eigendecomposition(model3):
    L = model3.generator(1, 0.0)
    vals, vecs = np.linalg.eig(L)
    for t in (0.3, 1.0):
        oracle = (vecs @ np.diag(np.exp(t * vals)) @ np.linalg.inv(vecs)).real
        np.testing.assert_allclose(model3.semigroup(1, t, 0.0), oracle, atol=1e-12)


def test_validate_kernels(space3, rng):
    k = catalog("uniform-redistribution", space3)
    d = validate_kernels(k, space3)
    assert d.passed and d.defect_A1 == 0.0
    A1 = np.array(k.A1)
    A1[:, 1] *= 1.01
    bad = KernelSet(k.a1, A1, k.a2, k.A2)
    d = validate_kernels(bad, space3)
    assert not d.passed
    assert d.defect_A1 == pytest.approx(0.01)
    with pytest.raises(ValueError, match="validation"):
        JumpModel(space3, bad)
    assert validate_kernels(random_kernels(space3, rng), space3).passed
    neg = KernelSet(-k.a1, k.A1, k.a2, k.A2, a1_star=1.0)
    assert validate_kernels(neg, space3).rate_violations == 3
    with pytest.raises(ValueError):
        KernelSet(k.a1, k.A1[:2], k.a2, k.A2)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_catalog_valid(name):
    sp = EntitySpace(2, (0.0, 0.5, 1.0))
    k = catalog(name, sp, 1.0, 0.5)
    assert validate_kernels(k, sp).passed
    with pytest.raises(KeyError):
        catalog("nope", sp)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_generator_properties(model3, rng, n):
    K = model3.K
    for eps in (0.0, 0.4):
        L = model3.generator(n, eps)
        np.testing.assert_allclose(L @ np.ones(K ** n), 0.0, atol=1e-13)
        Ls = model3.generator(n, eps, "state")
        w = product_weights(model3.space, n).reshape(-1)
        np.testing.assert_allclose(w @ Ls, 0.0, atol=1e-13)
        # weighted-transpose oracle
        W = np.diag(w)
        np.testing.assert_allclose(Ls, np.linalg.inv(W) @ L.T @ W, atol=1e-13)
        b, f = rng.normal(size=K ** n), rng.normal(size=K ** n)
        assert abs(np.sum(w * (L @ b) * f) - np.sum(w * b * (Ls @ f))) < 1e-12
    free = model3.generator(n, 0.0)
    np.testing.assert_allclose(free, model3.generator(n, 1.0, mask="one-body"))


def test_zero_rates_give_zero_generator(space3):
    k = KernelSet(np.zeros(3), catalog("uniform-redistribution", space3).A1, np.zeros((3, 3)),
                  catalog("uniform-redistribution", space3).A2)
    assert np.all(adjoint_generator(k, space3, 2, 0.0).matrix == 0)
    with pytest.raises(ValueError):
        one_body_matrix(k, space3, "sideways")


def test_semigroup_law_and_cache(model3):
    U1, U2 = model3.semigroup(2, 0.3, 0.5), model3.semigroup(2, 0.4, 0.5)
    np.testing.assert_allclose(U1 @ U2, model3.semigroup(2, 0.7, 0.5), atol=1e-10)
    np.testing.assert_array_equal(model3.semigroup(2, 0.0), np.eye(9))
    hits = model3.hits
    assert model3.semigroup(2, 0.3, 0.5) is U1
    assert model3.hits == hits + 1
    assert not U1.flags.writeable
    model3.clear_cache()
    assert model3.semigroup(2, 0.3, 0.5) is not U1


def test_semigroup_is_stochastic(model3):
    U = model3.semigroup(3, 0.8, 1.0)
    assert U.min() >= -1e-14
    np.testing.assert_allclose(U.sum(axis=1), 1.0, atol=1e-12)


def test_order_cap(model3):
    with pytest.raises(ResourceCapError):
        model3.generator(6)


def test_gillespie_zero_rates():
    sp = EntitySpace.uniform(2)
    k = KernelSet(np.zeros(2), np.ones((2, 2)), np.zeros((2, 2)), np.ones((2, 2, 2)))
    tr = gillespie_sample(k, sp, [0, 1], 1.0, 5.0, seed=1)
    assert tr.n_jumps == 0
    np.testing.assert_array_equal(tr.final, [0, 1])


def test_gillespie_reproducible(space3, rng):
    k = random_kernels(space3, rng)
    a = gillespie_sample(k, space3, [0, 1, 2], 1.0, 2.0, seed=5, replica=3)
    b = gillespie_sample(k, space3, [0, 1, 2], 1.0, 2.0, seed=5, replica=3)
    np.testing.assert_array_equal(a.states, b.states)
    assert replica_rng(1, 2).random() == replica_rng(1, 2).random()
    assert replica_rng(1, 2).random() != replica_rng(1, 3).random()


def test_first_jump_time_law():
    # a1 = lam, no interaction: first jump of n entities ~ Exp(n lam), observed censored at c
    lam, n, c, R = 1.5, 2, 1.0, 100_000
    sp = EntitySpace.uniform(2)
    k = KernelSet(np.full(2, lam), np.ones((2, 2)), np.zeros((2, 2)), np.ones((2, 2, 2)))
    first = np.array([
        tr.times[1] if tr.n_jumps else c
        for tr in (gillespie_sample(k, sp, [0, 0], 0.0, c, seed=9, replica=r) for r in range(R))
    ])
    mean = (1 - math.exp(-n * lam * c)) / (n * lam)
    assert abs(first.mean() - mean) < 3 * first.std() / math.sqrt(R)


def test_ensemble_matches_semigroup():
    sp = EntitySpace.uniform(2)
    k = random_kernels(sp, np.random.default_rng(3))
    model = JumpModel(sp, k)
    f1 = np.array([0.6, 1.4])
    f0 = np.outer(f1, f1)
    R, t = 20_000, 1.0
    final = gillespie_ensemble(k, sp, f0, 1.0, t, R, seed=4)
    exact = (model.semigroup(2, t, 1.0, "state") @ f0.reshape(-1)).reshape(2, 2)
    p = (product_weights(sp, 2) * exact).reshape(-1)
    emp = empirical_marginal(final, [0, 1], sp).values
    q = (product_weights(sp, 2) * emp).reshape(-1)
    tv = 0.5 * np.abs(q - p).sum()
    band = 0.5 * np.sum(3 * np.sqrt(p * (1 - p) / R))
    assert tv <= band


def test_ensemble_worker_independent():
    sp = EntitySpace.uniform(2)
    k = random_kernels(sp, np.random.default_rng(3))
    f0 = np.full((2, 2), 1.0)
    a = gillespie_ensemble(k, sp, f0, 1.0, 0.5, 200, seed=2, workers=1)
    b = gillespie_ensemble(k, sp, f0, 1.0, 0.5, 200, seed=2, workers=2)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        gillespie_ensemble(k, sp, -f0, 1.0, 0.5, 10)


def test_empirical_marginal():
    sp = EntitySpace.uniform(3)
    est = empirical_marginal(np.array([[2, 0]]), [0], sp)
    np.testing.assert_allclose(est.values, [0, 0, 3.0])
    assert est.kind == "state"
    rng = np.random.default_rng(0)
    final = rng.integers(0, 3, size=(30_000, 2))
    est = empirical_marginal(final, [0], sp).values
    np.testing.assert_allclose(est, 1.0, atol=3 * 3 * math.sqrt(2 / 9 / 30_000))
    with pytest.raises(ValueError):
        empirical_marginal(np.zeros((0, 2), dtype=int), [0], sp)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbgky.combinatorics import (MAX_PARTITION_SIZE, ClusterSpec, Partition, ResourceCapError,
                                 bell, cluster_expand, cluster_invert, correlation_dressing_transform,
                                 cumulant_coefficient, enumerate_partitions, partition_weight_sum,
                                 stirling2)


def brute_partitions(elements):
    """Independent oracle: insert each element into an existing block or a new one."""
    elements = list(elements)
    if not elements:
        yield []
        return
    first, rest = elements[0], elements[1:]
    for p in brute_partitions(rest):
        for i in range(len(p)):
            yield p[:i] + [[first] + p[i]] + p[i + 1:]
        yield [[first]] + p


def canon(p):
    return tuple(sorted(tuple(sorted(b)) for b in p))


# frozen from brute_partitions
BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140]
WEIGHT_SUMS = {1: 1, 2: 2, 3: 6, 4: 26, 5: 150, 6: 1082}


def test_frozen_values_match_oracle():
    for n in range(1, 9):
        assert sum(1 for _ in brute_partitions(range(n))) == BELL[n]
    for n, v in WEIGHT_SUMS.items():
        assert sum(math.factorial(len(p) - 1) for p in brute_partitions(range(n))) == v


@pytest.mark.parametrize("n", range(1, 8))
def test_enumeration_matches_oracle(n):
    ours = [canon(p.blocks) for p in enumerate_partitions(n)]
    assert len(ours) == len(set(ours)) == BELL[n]
    assert set(ours) == {canon(p) for p in brute_partitions(range(n))}


def test_enumeration_order_is_canonical():
    parts = list(enumerate_partitions(3))
    assert parts[0].blocks == ((0, 1, 2),)
    assert parts[-1].blocks == ((0,), (1,), (2,))
    assert parts == list(enumerate_partitions(3))


def test_small_counts():
    assert len(list(enumerate_partitions(1))) == 1
    assert len(list(enumerate_partitions(3))) == 5
    assert len(list(enumerate_partitions(4))) == 15
    assert [bell(n) for n in range(9)] == BELL


def test_element_list_ground():
    parts = list(enumerate_partitions(["a", "b"]))
    assert [p.blocks for p in parts] == [(("a", "b"),), (("a",), ("b",))]


def test_cap_and_errors():
    with pytest.raises(ResourceCapError, match="cap"):
        next(enumerate_partitions(MAX_PARTITION_SIZE + 1))
    with pytest.raises(ValueError):
        next(enumerate_partitions(0))
    with pytest.raises(ValueError):
        next(enumerate_partitions([1, 1]))


def test_partition_canonical_form():
    assert Partition(((2, 0), (1,))) == Partition(((1,), (0, 2)))
    assert Partition(((2, 0), (1,))).blocks == ((0, 2), (1,))
    with pytest.raises(ValueError):
        Partition(((0, 1), (1,)))
    with pytest.raises(ValueError):
        Partition(((),))


def test_stirling2():
    assert stirling2(4, 1) == 1
    assert stirling2(3, 2) == 3
    assert stirling2(5, 3) == sum(1 for p in brute_partitions(range(5)) if len(p) == 3) == 25
    for n in range(1, 9):
        for k in range(1, n + 1):
            explicit = sum((-1) ** j * math.comb(k, j) * (k - j) ** n for j in range(k + 1))
            assert stirling2(n, k) == explicit // math.factorial(k)
    with pytest.raises(ValueError):
        stirling2(2, 3)


def test_partition_weight_sum():
    assert partition_weight_sum(1) == 1
    assert partition_weight_sum(2) == 2
    assert partition_weight_sum(3) == 6
    for n, v in WEIGHT_SUMS.items():
        assert partition_weight_sum(n) == v


@pytest.mark.parametrize("n", range(8))
def test_partition_weight_bound(n):
    assert partition_weight_sum(n + 1) <= math.factorial(n) * math.e ** (n + 2)


@pytest.mark.parametrize("n", range(1, 6))
def test_signed_coefficients_sum(n):
    total = sum(cumulant_coefficient(len(p)) for p in enumerate_partitions(n))
    assert total == (1 if n == 1 else 0)


def test_cluster_spec():
    c = ClusterSpec(4, (3, 1))
    assert c.cluster == (0, 2)
    assert c.n_elements == 3
    assert c.declusterize() == (0, 1, 2, 3)
    assert c.declusterize((0,)) == (0, 2)
    assert c.declusterize((1, 2)) == (1, 3)
    assert len(list(c.partitions())) == 5
    for bad in [(4,), (1, 1), (0, 1, 2, 3)]:
        with pytest.raises(ValueError):
            ClusterSpec(4, bad)


def brute_cluster_sum(seq, s, signed):
    K = np.asarray(seq[1]).shape[0]
    out = np.zeros((K,) * s)
    for p in brute_partitions(range(s)):
        c = (-1) ** (len(p) - 1) * math.factorial(len(p) - 1) if signed else 1
        for idx in itertools.product(range(K), repeat=s):
            out[idx] += c * np.prod([seq[len(b)][tuple(idx[i] for i in b)] for b in p])
    return out


def random_seq(rng, K, s_max, scale=1.0):
    return [np.asarray(1.0)] + [scale * rng.normal(size=(K,) * s) for s in range(1, s_max + 1)]


def test_cluster_expand_examples(rng):
    g1 = rng.uniform(0, 1, 2)
    f = cluster_expand([np.asarray(1.0), g1, np.zeros((2, 2))])
    np.testing.assert_allclose(f[2], np.outer(g1, g1))
    f = cluster_expand([np.asarray(1.0), g1, np.zeros((2, 2)), np.zeros((2, 2, 2))])
    np.testing.assert_allclose(f[3], np.einsum("a,b,c->abc", g1, g1, g1))


def test_cluster_expand_and_invert_match_oracle(rng):
    g = random_seq(rng, 2, 3, 0.3)
    f = cluster_expand(g)
    for s in (1, 2, 3):
        np.testing.assert_allclose(f[s], brute_cluster_sum(g, s, False), atol=1e-13)
    fr = random_seq(rng, 2, 3)
    gi = cluster_invert(fr)
    for s in (1, 2, 3):
        np.testing.assert_allclose(gi[s], brute_cluster_sum(fr, s, True), atol=1e-13)


def test_invert_chaotic_state():
    f1 = np.array([0.2, 0.8])
    g = cluster_invert([np.asarray(1.0), f1, np.outer(f1, f1)])
    np.testing.assert_allclose(g[2], 0.0, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 4), st.integers(1, 3))
def test_roundtrip(seed, s_max, K):
    g = random_seq(np.random.default_rng(seed), K, s_max)
    back = cluster_invert(cluster_expand(g))
    for s in range(1, s_max + 1):
        np.testing.assert_allclose(back[s], g[s], atol=1e-12)


def test_dressing_transform(rng):
    K = 2
    gt = [np.asarray(1.0), np.ones(K), np.zeros((K, K))]
    g = correlation_dressing_transform(gt, "forward")
    np.testing.assert_allclose(g[2], 1.0)
    gt = [np.asarray(1.0), np.ones(K)] + [0.2 * rng.normal(size=(K,) * s) for s in (2, 3)]
    g = correlation_dressing_transform(gt, "forward")
    for s in (2, 3):
        np.testing.assert_allclose(g[s], brute_cluster_sum(gt, s, False), atol=1e-13)
    back = correlation_dressing_transform(g, "inverse")
    for s in (1, 2, 3):
        np.testing.assert_allclose(back[s], gt[s], atol=1e-12)
    with pytest.raises(ValueError):
        correlation_dressing_transform(gt, "sideways")


def test_component_order_checked():
    with pytest.raises(ValueError):
        cluster_expand([np.asarray(1.0), np.ones((2, 2))])

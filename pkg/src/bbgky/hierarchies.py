"""Cumulants of semigroups and the (dual) BBGKY evolution groups.

Observable side: the dual BBGKY group ``U(t)`` acting on sequences of marginal
observables, expanded in cumulants of ``exp(t Lambda_k)``.  State side: the
BBGKY group ``U*(t)`` acting on sequences of marginal distributions, expanded
in cumulants of the adjoint semigroups.  Both are exact for truncated
sequences because the expansions terminate.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .combinatorics import ClusterSpec, cumulant_coefficient
from .dynamics import OBSERVABLE, STATE, JumpModel
from .state_space import (SequenceVector, apply, lift_function, lift_operator,
                          marginal_by_integration)

__all__ = [
    "CumulantOperator",
    "cumulant",
    "observable_cluster",
    "state_cluster",
    "dual_bbgky_evolve",
    "bbgky_evolve",
    "creation_op",
    "annihilation_op",
    "exp_creation",
    "exp_annihilation",
    "apply_lambda",
    "apply_lambda_star",
    "interaction_term",
    "generator_B",
    "generator_Bstar",
    "commutator",
]


@dataclass(frozen=True)
class CumulantOperator:
    order: int
    clusters: ClusterSpec
    t: float
    side: str
    matrix: np.ndarray = field(repr=False)

    def __matmul__(self, x):
        x = np.asarray(x)
        if x.ndim == self.clusters.ground and x.size == self.matrix.shape[0]:
            return apply(self.matrix, x)
        return self.matrix @ x


def observable_cluster(s: int, removed=()) -> ClusterSpec:
    """``({Y \\ X}, X)`` for ``Y = (0..s-1)`` and removed arguments ``X``."""
    return ClusterSpec(s, tuple(removed))


def state_cluster(s: int, n: int) -> ClusterSpec:
    """``({Y}, s, ..., s+n-1)``: the cluster of kept arguments plus n integrated ones."""
    return ClusterSpec(s + n, tuple(range(s, s + n)))


def cumulant(t: float, clusters: ClusterSpec, model: JumpModel, eps: float = 1.0,
             side: str = OBSERVABLE, mask=None) -> CumulantOperator:
    """Signed partition sum of products of semigroups on declusterized blocks.

    Each partition ``P`` of the pseudo-elements contributes
    ``(-1)^{|P|-1} (|P|-1)!`` times the product of ``exp(t Lambda_{|theta(X_i)|})``
    acting on the entities ``theta(X_i)``.  The state side uses the adjoint
    semigroups.
    """
    s, K = clusters.ground, model.K
    model.space.check_order(s)
    total = np.zeros((K ** s, K ** s))
    lifted: dict = {}
    for p in clusters.partitions():
        term = None
        for block in p:
            theta = clusters.declusterize(block)
            op = lifted.get(theta)
            if op is None:
                S = model.semigroup(len(theta), t, eps, side, mask)
                op = lifted[theta] = lift_operator(S, theta, s, K)
            term = op if term is None else term @ op
        total += cumulant_coefficient(len(p)) * term
    return CumulantOperator(clusters.n_elements, clusters, float(t), side, total)


def _dual_expansion(b: SequenceVector, t: float, model: JumpModel, eps: float, mask,
                    weight) -> SequenceVector:
    out = [np.asarray(b[0]).copy()]
    for s in range(1, b.s_max + 1):
        acc = np.zeros((model.K,) * s)
        for n in range(s):
            for X in itertools.combinations(range(s), n):
                kept = [i for i in range(s) if i not in X]
                lifted = lift_function(b[s - n], kept, s)
                A = cumulant(t, observable_cluster(s, X), model, eps, OBSERVABLE, mask)
                acc += weight(n) * (A @ lifted)
        out.append(acc)
    return SequenceVector(out, b.kind, b.norm_param)


def dual_bbgky_evolve(b: SequenceVector, t: float, model: JumpModel, eps: float = 1.0,
                      mask=None) -> SequenceVector:
    """Marginal observables at time ``t``.

    ``(U(t)b)_s = sum_{n<s} 1/n! sum_{j_1 != .. != j_n} A_{1+n}(t, {Y\\X}, X) b_{s-n}(Y\\X)``.
    The ordered sum over ``j`` divided by ``n!`` is a sum over subsets ``X``
    since the cumulant depends on ``X`` only as a set.  ``b_{s-n}`` is placed
    on the kept arguments, constant in the removed ones, before the cumulant
    acts on all ``s`` entities.
    """
    return _dual_expansion(b, t, model, eps, mask, lambda n: 1.0)


def bbgky_evolve(f: SequenceVector, t: float, model: JumpModel, eps: float = 1.0,
                 mask=None) -> SequenceVector:
    """Marginal distributions at time ``t``.

    ``(U*(t)f)_s = sum_{n=0}^{N-s} 1/n! int dx_{s+1..s+n} A*_{1+n}(t, {Y}, X\\Y) f_{s+n}``
    with ``N`` the truncation of ``f``; the series is exact for it.
    """
    N = f.s_max
    out = [np.asarray(f[0]).copy()]
    for s in range(1, N + 1):
        acc = np.zeros((model.K,) * s)
        for n in range(N - s + 1):
            A = cumulant(t, state_cluster(s, n), model, eps, STATE, mask)
            acc += marginal_by_integration(A @ f[s + n], s, model.space) / math.factorial(n)
        out.append(acc)
    return SequenceVector(out, f.kind, f.norm_param)


def creation_op(b: SequenceVector) -> SequenceVector:
    """``(a+ b)_s = sum_j b_{s-1}`` with argument ``j`` omitted; order 0 gives 0."""
    out = [np.asarray(0.0)]
    for s in range(1, b.s_max + 1):
        if s == 1:
            out.append(np.full(b.K, float(b[0])))
            continue
        acc = np.zeros((b.K,) * s)
        for j in range(s):
            acc += lift_function(b[s - 1], [i for i in range(s) if i != j], s)
        out.append(acc)
    return SequenceVector(out, b.kind, b.norm_param)


def annihilation_op(f: SequenceVector, model_or_space) -> SequenceVector:
    """``(a f)_s = int dx_{s+1} f_{s+1}``; the top component becomes 0."""
    space = getattr(model_or_space, "space", model_or_space)
    out = [np.asarray(marginal_by_integration(f[s + 1], s, space)) for s in range(f.s_max)]
    out.append(np.zeros_like(f[f.s_max]))
    return SequenceVector(out, f.kind, f.norm_param)


def _exp(op, x: SequenceVector, sign: float) -> SequenceVector:
    # op is nilpotent on truncated sequences: at most s_max + 1 nonzero powers
    total = x.copy()
    term = x
    for k in range(1, x.s_max + 2):
        term = op(term) * (sign / k)
        total = total + term
    return total


def exp_creation(b: SequenceVector, sign: float = 1.0) -> SequenceVector:
    return _exp(creation_op, b, sign)


def exp_annihilation(f: SequenceVector, model_or_space, sign: float = 1.0) -> SequenceVector:
    return _exp(lambda x: annihilation_op(x, model_or_space), f, sign)


def apply_lambda(b: SequenceVector, model: JumpModel, eps: float = 1.0) -> SequenceVector:
    """Componentwise ``Lambda_s b_s`` (order 0 is annihilated)."""
    out = [np.asarray(0.0)] + [apply(model.generator(s, eps), b[s]) for s in range(1, b.s_max + 1)]
    return SequenceVector(out, b.kind, b.norm_param)


def apply_lambda_star(f: SequenceVector, model: JumpModel, eps: float = 1.0) -> SequenceVector:
    out = [np.asarray(0.0)] + [apply(model.generator(s, eps, STATE), f[s])
                               for s in range(1, f.s_max + 1)]
    return SequenceVector(out, f.kind, f.norm_param)


def interaction_term(lower: np.ndarray, s: int, model: JumpModel) -> np.ndarray:
    """``sum_{j1 != j2} Lambda2(j1, j2) b_{s-1}`` with argument ``j2`` omitted.

    ``j1`` is the jumping entity and ``j2`` the partner; the lower-order
    function does not depend on the partner slot.
    """
    acc = np.zeros((model.K,) * s)
    for j1, j2 in itertools.permutations(range(s), 2):
        lifted = lift_function(lower, [i for i in range(s) if i != j2], s)
        acc += apply(lift_operator(model.L2, [j1, j2], s, model.K), lifted)
    return acc


def generator_B(b: SequenceVector, model: JumpModel, eps: float = 1.0) -> SequenceVector:
    """Generator of the dual BBGKY group on a truncated sequence."""
    out = [np.asarray(0.0)]
    for s in range(1, b.s_max + 1):
        val = apply(model.generator(s, eps), b[s])
        if s >= 2 and eps != 0.0:
            val = val + eps * interaction_term(b[s - 1], s, model)
        out.append(val)
    return SequenceVector(out, b.kind, b.norm_param)


def generator_Bstar(f: SequenceVector, model: JumpModel, eps: float = 1.0) -> SequenceVector:
    """``Lambda*_s f_s + eps sum_i int dx_{s+1} Lambda2*(i, s+1) f_{s+1}``."""
    N, K = f.s_max, model.K
    out = [np.asarray(0.0)]
    for s in range(1, N + 1):
        val = apply(model.generator(s, eps, STATE), f[s])
        if s < N and eps != 0.0:
            upper = np.zeros((K,) * (s + 1))
            for i in range(s):
                upper += apply(lift_operator(model.L2s, [i, s], s + 1, K), f[s + 1])
            val = val + eps * marginal_by_integration(upper, s, model.space)
        out.append(val)
    return SequenceVector(out, f.kind, f.norm_param)


def commutator(A, B):
    """``[A, B] = AB - BA`` for maps on sequences."""
    return lambda x: A(B(x)) - B(A(x))

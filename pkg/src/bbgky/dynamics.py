"""Markov jump generators, their semigroups and a Gillespie sampler.

Kernel conventions
------------------
``A1[v, u]`` is the destination density of a one-body jump from ``u`` to ``v``
and ``A2[v, u1, u2]`` the density for entity 1 jumping from ``u1`` to ``v``
while interacting with an entity at ``u2``.  Both integrate to one in ``v``
against the quadrature weights.  ``a1[u]`` and ``a2[u1, u2]`` are the jump
rates.  The two-body rate table is not assumed symmetric.

The observable-side generator on ``n`` entities is::

    Lambda_n = sum_i Lambda1(i) + eps * sum_{i != j} Lambda2(i, j)

with ordered pairs, ``i`` being the entity that jumps.  The state-side
generator is its adjoint for the weighted pairing.
"""
from __future__ import annotations

import itertools
import logging
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .state_space import (EntitySpace, TensorFunction, lift_operator, product_weights,
                          symmetrize)

log = logging.getLogger(__name__)

__all__ = [
    "KernelSet",
    "KernelDiagnostics",
    "GeneratorMatrix",
    "JumpModel",
    "Trajectory",
    "validate_kernels",
    "one_body_matrix",
    "two_body_matrix",
    "build_lambda",
    "adjoint_generator",
    "evolve",
    "gillespie_sample",
    "gillespie_ensemble",
    "empirical_marginal",
    "catalog",
    "random_kernels",
    "CATALOG_NAMES",
]

ONE_BODY = "one-body"
TWO_BODY = "two-body"
FULL_MASK = frozenset({ONE_BODY, TWO_BODY})
OBSERVABLE = "observable"
STATE = "state"

DENSE_EXPM_CAP = 4096
NORMALIZATION_TOL = 1e-12


def _mask(mask) -> frozenset:
    if mask is None:
        return FULL_MASK
    if isinstance(mask, str):
        mask = {mask}
    mask = frozenset(mask)
    if not mask <= FULL_MASK:
        raise ValueError(f"unknown interaction mask entries: {sorted(mask - FULL_MASK)}")
    return mask


@dataclass(frozen=True)
class KernelSet:
    """Rates and destination densities of the one- and two-body jumps."""

    a1: np.ndarray
    A1: np.ndarray
    a2: np.ndarray
    A2: np.ndarray
    a1_star: float | None = None
    a2_star: float | None = None
    name: str = "inline"

    def __post_init__(self):
        for attr in ("a1", "A1", "a2", "A2"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, attr, arr)
        K = self.a1.shape[0]
        shapes = {"a1": (K,), "A1": (K, K), "a2": (K, K), "A2": (K, K, K)}
        for attr, shape in shapes.items():
            if getattr(self, attr).shape != shape:
                raise ValueError(f"{attr} has shape {getattr(self, attr).shape}, expected {shape}")
        if self.a1_star is None:
            object.__setattr__(self, "a1_star", float(np.max(self.a1, initial=0.0)))
        if self.a2_star is None:
            object.__setattr__(self, "a2_star", float(np.max(self.a2, initial=0.0)))

    @property
    def K(self) -> int:
        return self.a1.shape[0]

    def without_interaction(self) -> "KernelSet":
        return KernelSet(self.a1, self.A1, np.zeros_like(self.a2), self.A2,
                         self.a1_star, 0.0, name=self.name + "/a2=0")

    def to_dict(self) -> dict:
        return {"name": self.name, "a1": self.a1.tolist(), "A1": self.A1.tolist(),
                "a2": self.a2.tolist(), "A2": self.A2.tolist()}


@dataclass
class KernelDiagnostics:
    defect_A1: float
    defect_A2: float
    negative_entries: int
    rate_violations: int
    tol: float = NORMALIZATION_TOL

    @property
    def passed(self) -> bool:
        return (self.defect_A1 <= self.tol and self.defect_A2 <= self.tol
                and self.negative_entries == 0 and self.rate_violations == 0)

    def as_dict(self) -> dict:
        return {"defect_A1": self.defect_A1, "defect_A2": self.defect_A2,
                "negative_entries": self.negative_entries,
                "rate_violations": self.rate_violations, "passed": self.passed}


def validate_kernels(k: KernelSet, space: EntitySpace, tol: float = NORMALIZATION_TOL
                     ) -> KernelDiagnostics:
    """Report normalization defects, negative densities and rate-bound breaches."""
    if k.K != space.K:
        raise ValueError(f"kernels are over K={k.K}, space has K={space.K}")
    w = space.weights
    d1 = float(np.max(np.abs(np.einsum("v,vu->u", w, k.A1) - 1.0)))
    d2 = float(np.max(np.abs(np.einsum("v,vab->ab", w, k.A2) - 1.0)))
    neg = int(np.sum(k.A1 < 0) + np.sum(k.A2 < 0))
    bad_rates = int(np.sum(k.a1 < 0) + np.sum(k.a1 > k.a1_star)
                    + np.sum(k.a2 < 0) + np.sum(k.a2 > k.a2_star))
    return KernelDiagnostics(d1, d2, neg, bad_rates, tol)


def one_body_matrix(k: KernelSet, space: EntitySpace, side: str = OBSERVABLE) -> np.ndarray:
    """K x K matrix of Lambda1 (observable side) or Lambda1* (state side)."""
    w = space.weights
    if side == OBSERVABLE:
        # (L b)(u) = a1(u) [sum_v w(v) A1(v; u) b(v) - b(u)]
        return k.a1[:, None] * (w[None, :] * k.A1.T - np.eye(k.K))
    if side == STATE:
        # (L* f)(u) = sum_v w(v) A1(u; v) a1(v) f(v) - a1(u) f(u)
        return k.A1 * (w * k.a1)[None, :] - np.diag(k.a1)
    raise ValueError(f"side must be {OBSERVABLE!r} or {STATE!r}")


def two_body_matrix(k: KernelSet, space: EntitySpace, side: str = OBSERVABLE) -> np.ndarray:
    """K^2 x K^2 matrix of Lambda2(1, 2): entity 1 jumps, entity 2 conditions."""
    K, w = k.K, space.weights
    T = np.zeros((K, K, K, K))  # T[u1, u2, v, u2']
    idx = np.arange(K)
    if side == OBSERVABLE:
        # a2(u1,u2) [sum_v w(v) A2(v; u1, u2) b(v, u2) - b(u1, u2)]
        jump = k.a2[:, :, None] * (w[None, None, :] * k.A2.transpose(1, 2, 0))
    elif side == STATE:
        # sum_v w(v) A2(u1; v, u2) a2(v, u2) f(v, u2) - a2(u1, u2) f(u1, u2)
        jump = w[None, None, :] * k.A2.transpose(0, 2, 1) * k.a2.T[None, :, :]
    else:
        raise ValueError(f"side must be {OBSERVABLE!r} or {STATE!r}")
    T[:, idx, :, idx] = jump.transpose(1, 0, 2)
    loss = k.a2
    for u1 in range(K):
        T[u1, idx, u1, idx] -= loss[u1, :]
    return T.reshape(K * K, K * K)


@dataclass(frozen=True)
class GeneratorMatrix:
    order: int
    epsilon: float
    side: str
    matrix: np.ndarray = field(repr=False)
    mask: frozenset = FULL_MASK

    def __matmul__(self, other):
        return self.matrix @ other


def _assemble(L1: np.ndarray, L2: np.ndarray, n: int, eps: float, mask: frozenset,
              K: int) -> np.ndarray:
    out = np.zeros((K ** n, K ** n))
    if ONE_BODY in mask:
        for i in range(n):
            out += lift_operator(L1, [i], n, K)
    if TWO_BODY in mask and eps != 0.0:
        for i, j in itertools.permutations(range(n), 2):
            out += eps * lift_operator(L2, [i, j], n, K)
    return out


def build_lambda(k: KernelSet, space: EntitySpace, n: int, eps: float = 1.0,
                 mask=None) -> GeneratorMatrix:
    """Observable-side generator of ``n`` entities."""
    space.check_order(n)
    mask = _mask(mask)
    M = _assemble(one_body_matrix(k, space), two_body_matrix(k, space), n, eps, mask, k.K)
    return GeneratorMatrix(n, float(eps), OBSERVABLE, M, mask)


def adjoint_generator(k: KernelSet, space: EntitySpace, n: int, eps: float = 1.0,
                      mask=None) -> GeneratorMatrix:
    """State-side generator built from the explicit adjoint jump formulas."""
    space.check_order(n)
    mask = _mask(mask)
    M = _assemble(one_body_matrix(k, space, STATE), two_body_matrix(k, space, STATE),
                  n, eps, mask, k.K)
    return GeneratorMatrix(n, float(eps), STATE, M, mask)


class _ExpmAction:
    """Action of exp(t G) for operators too large to exponentiate densely."""

    def __init__(self, matrix, t):
        self.matrix, self.t = matrix, t
        self.shape = matrix.shape

    def __matmul__(self, x):
        return scipy.sparse.linalg.expm_multiply(self.t * self.matrix, x)


def evolve(gen, t: float, dense_cap: int = DENSE_EXPM_CAP):
    """exp(t G) by scaling and squaring (Pade); an action object above ``dense_cap``."""
    M = gen.matrix if isinstance(gen, GeneratorMatrix) else np.asarray(gen)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    if M.shape[0] > dense_cap:
        return _ExpmAction(M, t)
    if t == 0.0:
        return np.eye(M.shape[0])
    return scipy.linalg.expm(t * M)


class JumpModel:
    """Kernels on a space, with cached generators and semigroups.

    The cache maps ``(n, t, side, eps, mask)`` to a dense evolution operator.
    Lookups are lock-free; inserts happen under a lock and never overwrite,
    so concurrent readers always see the first computed value.
    """

    def __init__(self, space: EntitySpace, kernels: KernelSet, check: bool = True):
        if check:
            diag = validate_kernels(kernels, space)
            if not diag.passed:
                raise ValueError(f"kernels failed validation: {diag.as_dict()}")
        self.space = space
        self.kernels = kernels
        self.K = space.K
        self.L1 = one_body_matrix(kernels, space)
        self.L2 = two_body_matrix(kernels, space)
        self.L1s = one_body_matrix(kernels, space, STATE)
        self.L2s = two_body_matrix(kernels, space, STATE)
        self._gen: dict = {}
        self._semigroups: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def one_body(self, side: str = OBSERVABLE) -> np.ndarray:
        return self.L1 if side == OBSERVABLE else self.L1s

    def two_body(self, side: str = OBSERVABLE) -> np.ndarray:
        return self.L2 if side == OBSERVABLE else self.L2s

    def generator(self, n: int, eps: float = 1.0, side: str = OBSERVABLE,
                  mask=None) -> np.ndarray:
        mask = _mask(mask)
        key = (n, float(eps), side, mask)
        M = self._gen.get(key)
        if M is None:
            self.space.check_order(n)
            M = _assemble(self.one_body(side), self.two_body(side), n, eps, mask, self.K)
            with self._lock:
                M = self._gen.setdefault(key, M)
        return M

    def semigroup(self, n: int, t: float, eps: float = 1.0, side: str = OBSERVABLE,
                  mask=None) -> np.ndarray:
        mask = _mask(mask)
        key = (n, float(t), side, float(eps), mask)
        U = self._semigroups.get(key)
        if U is not None:
            self.hits += 1
            return U
        self.misses += 1
        U = evolve(self.generator(n, eps, side, mask), t)
        if isinstance(U, np.ndarray):
            U.flags.writeable = False
        with self._lock:
            return self._semigroups.setdefault(key, U)

    def one_body_semigroup(self, t: float, side: str = OBSERVABLE) -> np.ndarray:
        return self.semigroup(1, t, 0.0, side, ONE_BODY)

    def clear_cache(self) -> None:
        with self._lock:
            self._semigroups.clear()


# ---------------------------------------------------------------------------
# stochastic simulation

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # states[k] holds the configuration after jump k (row 0: initial)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def n_jumps(self) -> int:
        return len(self.times) - 1


def _jump_tables(k: KernelSet, space: EntitySpace):
    w = space.weights
    P1 = (w[:, None] * k.A1).T  # P1[u, v] = w(v) A1(v; u)
    P2 = (w[:, None, None] * k.A2).transpose(1, 2, 0)  # P2[u1, u2, v]
    return np.cumsum(P1, axis=-1), np.cumsum(P2, axis=-1)


def _draw(cdf_row: np.ndarray, r: float) -> int:
    return min(int(np.searchsorted(cdf_row, r * cdf_row[-1], side="right")), len(cdf_row) - 1)


def _run(k: KernelSet, tables, state: np.ndarray, eps: float, t_end: float,
         rng: np.random.Generator, record: bool):
    C1, C2 = tables
    n = len(state)
    state = state.copy()
    t = 0.0
    times, states = [0.0], [state.copy()]
    offdiag = ~np.eye(n, dtype=bool)
    while True:
        r1 = k.a1[state]
        r2 = eps * k.a2[state[:, None], state[None, :]] * offdiag
        rates = np.concatenate([r1, r2.reshape(-1)])
        total = rates.sum()
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t > t_end:
            break
        ch = _draw(np.cumsum(rates), rng.random())
        if ch < n:
            i = ch
            state[i] = _draw(C1[state[i]], rng.random())
        else:
            i, j = divmod(ch - n, n)
            state[i] = _draw(C2[state[i], state[j]], rng.random())
        if record:
            times.append(t)
            states.append(state.copy())
    if not record:
        return state
    return Trajectory(np.asarray(times), np.asarray(states))


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Independent stream for one replica, derived from the master seed."""
    return np.random.default_rng([int(seed), int(replica)])


def gillespie_sample(k: KernelSet, space: EntitySpace, initial, eps: float, t_end: float,
                     seed: int = 0, replica: int = 0) -> Trajectory:
    """Exact jump-by-jump simulation of ``len(initial)`` entities up to ``t_end``.

    Entity ``i`` jumps at rate ``a1(u_i)`` to ``v ~ w(v) A1(v; u_i)``, and for
    each ordered pair ``(i, j)`` at rate ``eps * a2(u_i, u_j)`` to
    ``v ~ w(v) A2(v; u_i, u_j)``.
    """
    rng = replica_rng(seed, replica)
    return _run(k, _jump_tables(k, space), np.asarray(initial, dtype=int), eps, t_end, rng,
                record=True)


def _sample_initial(p_flat: np.ndarray, n: int, K: int, rng) -> np.ndarray:
    idx = _draw(np.cumsum(p_flat), rng.random())
    return np.array(np.unravel_index(idx, (K,) * n), dtype=int)


def _ensemble_chunk(args):
    k, space, p_flat, n, eps, t_end, seed, start, stop = args
    tables = _jump_tables(k, space)
    out = np.empty((stop - start, n), dtype=int)
    for r in range(start, stop):
        rng = replica_rng(seed, r)
        init = _sample_initial(p_flat, n, k.K, rng)
        out[r - start] = _run(k, tables, init, eps, t_end, rng, record=False)
    return out


def gillespie_ensemble(k: KernelSet, space: EntitySpace, initial_density: np.ndarray,
                       eps: float, t_end: float, n_replicas: int, seed: int = 0,
                       workers: int = 1) -> np.ndarray:
    """Final configurations of ``n_replicas`` independent runs.

    Replica ``r`` draws its initial configuration from the state density
    ``initial_density`` (w.r.t. product weights) and then runs on the stream
    :func:`replica_rng` ``(seed, r)``, so results do not depend on ``workers``.
    """
    f0 = np.asarray(initial_density, dtype=float)
    n = f0.ndim
    p = (product_weights(space, n) * f0).reshape(-1)
    if np.any(p < 0):
        raise ValueError("initial density must be nonnegative")
    p = p / p.sum()
    if workers <= 1:
        return _ensemble_chunk((k, space, p, n, eps, t_end, seed, 0, n_replicas))
    bounds = np.linspace(0, n_replicas, workers + 1).astype(int)
    jobs = [(k, space, p, n, eps, t_end, seed, a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return np.concatenate(list(ex.map(_ensemble_chunk, jobs)))


def empirical_marginal(final_states: np.ndarray, entities, space: EntitySpace
                       ) -> TensorFunction:
    """Histogram density of the listed entities, symmetrized over them.

    Normalized so that the weighted sum of the estimate equals one.
    """
    final_states = np.asarray(final_states)
    if final_states.size == 0:
        raise ValueError("empty ensemble")
    entities = list(entities)
    m, K = len(entities), space.K
    flat = np.ravel_multi_index(final_states[:, entities].T, (K,) * m)
    counts = np.bincount(flat, minlength=K ** m).reshape((K,) * m).astype(float)
    dens = symmetrize(counts / len(final_states)) / product_weights(space, m)
    return TensorFunction(dens, kind=STATE)


# ---------------------------------------------------------------------------
# kernel catalog

CATALOG_NAMES = ("uniform-redistribution", "local-diffusion", "alignment")


def _normalize_dest(A: np.ndarray, w: np.ndarray) -> np.ndarray:
    return A / np.einsum("v,v...->...", w, A)[None]


def _positions(space: EntitySpace) -> tuple[np.ndarray, np.ndarray]:
    grid = np.asarray(space.grid)
    pos = np.tile(grid, space.M)
    pop = np.repeat(np.arange(space.M), len(grid))
    return pos, pop


def catalog(name: str, space: EntitySpace, rate1: float = 1.0, rate2: float = 1.0,
            width: float = 0.5) -> KernelSet:
    """Built-in kernel sets.

    ``uniform-redistribution``
        constant rates, every destination equally likely.
    ``local-diffusion``
        Gaussian-like one-body hops within the subpopulation, uniform
        two-body redistribution.
    ``alignment``
        one-body hops as in ``local-diffusion``; in two-body events the
        jumping entity lands near the partner's state.
    """
    K, w = space.K, space.weights
    pos, pop = _positions(space)
    scale = width * (np.ptp(pos) if np.ptp(pos) > 0 else 1.0)
    a1 = np.full(K, rate1)
    a2 = np.full((K, K), rate2)
    uniform1 = _normalize_dest(np.ones((K, K)), w)
    uniform2 = _normalize_dest(np.ones((K, K, K)), w)
    if name == "uniform-redistribution":
        return KernelSet(a1, uniform1, a2, uniform2, name=name)
    d2 = (pos[:, None] - pos[None, :]) ** 2
    same = pop[:, None] == pop[None, :]
    hop = np.exp(-d2 / (2 * scale ** 2)) * same + 1e-3
    A1 = _normalize_dest(hop, w)
    if name == "local-diffusion":
        return KernelSet(a1, A1, a2, uniform2, name=name)
    if name == "alignment":
        near = np.exp(-d2 / (2 * scale ** 2)) + 1e-3  # near[v, u2]
        A2 = _normalize_dest(np.broadcast_to(near[:, None, :], (K, K, K)).copy(), w)
        return KernelSet(a1, A1, a2, A2, name=name)
    raise KeyError(f"unknown kernel set {name!r}; choose from {CATALOG_NAMES}")


def random_kernels(space: EntitySpace, rng: np.random.Generator, rate1: float = 1.0,
                   rate2: float = 1.0) -> KernelSet:
    """Random valid kernels, used by tests and the verification suite."""
    K, w = space.K, space.weights
    a1 = rate1 * rng.uniform(0.2, 1.0, K)
    a2 = rate2 * rng.uniform(0.2, 1.0, (K, K))
    A1 = _normalize_dest(rng.uniform(0.1, 1.0, (K, K)), w)
    A2 = _normalize_dest(rng.uniform(0.1, 1.0, (K, K, K)), w)
    return KernelSet(a1, A1, a2, A2, name="random")

"""Discretized entity space, tensor functions, sequences, norms and pairing.

A single entity lives in ``J x U`` with ``M`` subpopulations and a finite grid
of microscopic states.  Flat index ``k = j * len(grid) + u`` enumerates the
``K = M * len(grid)`` single-entity states.  Integrals over ``J x U`` become
weighted sums with the per-state quadrature weights.

Functions of ``n`` entities are dense arrays of shape ``(K,) * n``.  Operators
on ``n`` entities are ``K**n x K**n`` matrices acting on row-major flattened
arrays.  Entity positions are 0-based.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .combinatorics import ResourceCapError

__all__ = [
    "MAX_ORDER",
    "EntitySpace",
    "TensorFunction",
    "SequenceVector",
    "symmetrize",
    "is_symmetric",
    "lift_operator",
    "lift_function",
    "product_weights",
    "c_gamma_norm",
    "l1_alpha_norm",
    "pair",
    "marginal_by_integration",
    "write_tensor_csv",
    "read_tensor_csv",
]

MAX_ORDER = 5
MAX_STATES = 8

OBSERVABLE = "observable"
STATE = "state"
_KINDS = (OBSERVABLE, STATE)


@dataclass(frozen=True)
class EntitySpace:
    """Single-entity state space ``J x U`` with quadrature weights.

    Parameters
    ----------
    M : int
        Number of subpopulations.
    grid : sequence of float
        Microscopic states ``u`` shared by every subpopulation.
    weights : array_like, optional
        Either ``K`` flat weights or an ``(M, len(grid))`` table.  Defaults to
        ``1 / len(grid)`` on every point.
    """

    M: int
    grid: tuple[float, ...]
    weights: np.ndarray = field(default=None, compare=False)
    max_states: int = MAX_STATES
    max_order: int = MAX_ORDER

    def __post_init__(self):
        grid = tuple(float(u) for u in self.grid)
        object.__setattr__(self, "grid", grid)
        if self.M < 1 or len(grid) < 1:
            raise ValueError("need at least one subpopulation and one grid point")
        K = self.M * len(grid)
        if K > self.max_states:
            raise ResourceCapError(f"K = {K} exceeds the state cap of {self.max_states}")
        if self.weights is None:
            w = np.full(K, 1.0 / len(grid))
        else:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape != (K,):
            raise ValueError(f"expected {K} weights, got shape {np.shape(self.weights)}")
        if not np.all(w > 0):
            raise ValueError("quadrature weights must be strictly positive")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, K: int, M: int = 1, **kw) -> "EntitySpace":
        if K % M:
            raise ValueError("K must be a multiple of M")
        n = K // M
        return cls(M=M, grid=tuple(np.linspace(0.0, 1.0, n)) if n > 1 else (0.0,), **kw)

    @property
    def K(self) -> int:
        return self.M * len(self.grid)

    def index(self, j: int, u: int) -> int:
        """Flat index of subpopulation ``j`` and grid point number ``u``."""
        if not (0 <= j < self.M and 0 <= u < len(self.grid)):
            raise IndexError((j, u))
        return j * len(self.grid) + u

    def unflatten(self, k: int) -> tuple[int, int]:
        return divmod(int(k), len(self.grid))

    def check_order(self, n: int) -> None:
        if n > self.max_order:
            raise ResourceCapError(f"order {n} exceeds the cap of {self.max_order}")

    def __eq__(self, other):
        if not isinstance(other, EntitySpace):
            return NotImplemented
        return (self.M, self.grid) == (other.M, other.grid) and np.array_equal(
            self.weights, other.weights)

    def __hash__(self):
        return hash((self.M, self.grid, self.weights.tobytes()))


def product_weights(space: EntitySpace, n: int) -> np.ndarray:
    """Tensor of ``prod_i w(u_i)`` with shape ``(K,) * n``."""
    out = np.asarray(1.0)
    for _ in range(n):
        out = np.multiply.outer(out, space.weights)
    return out


def is_symmetric(values: np.ndarray, atol: float = 1e-12) -> bool:
    values = np.asarray(values)
    return all(np.allclose(values, values.transpose(p), atol=atol, rtol=0)
               for p in itertools.permutations(range(values.ndim)))


def symmetrize(values: np.ndarray) -> np.ndarray:
    """Average of ``values`` over all permutations of its arguments."""
    values = np.asarray(values)
    n = values.ndim
    if n > MAX_ORDER:
        raise ResourceCapError(f"order {n} exceeds the cap of {MAX_ORDER}")
    if n <= 1:
        return values.copy()
    perms = list(itertools.permutations(range(n)))
    return sum(values.transpose(p) for p in perms) / len(perms)


@dataclass
class TensorFunction:
    """A function of ``order`` entity states, observable or state kind."""

    values: np.ndarray
    kind: str = OBSERVABLE
    symmetric: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if self.values.ndim and len(set(self.values.shape)) != 1:
            raise ValueError(f"not a tensor over one grid: shape {self.values.shape}")
        if self.symmetric and not is_symmetric(self.values):
            raise ValueError("values flagged symmetric are not permutation invariant")

    @property
    def order(self) -> int:
        return self.values.ndim

    @property
    def K(self) -> int:
        return self.values.shape[0] if self.values.ndim else 0

    def descriptor(self) -> dict:
        return {"order": self.order, "K": self.K, "kind": self.kind}


class SequenceVector:
    """Truncated sequence ``(x_0, x_1, ..., x_smax)`` of tensor functions.

    ``norm_param`` is gamma for observables (gamma < 1) and alpha for states
    (alpha > 1); it only enters the norms.  The order-0 slot of a state is 1
    unless set otherwise by the caller.
    """

    def __init__(self, components: Sequence, kind: str = OBSERVABLE,
                 norm_param: float | None = None):
        if kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        comps = [np.asarray(c.values if isinstance(c, TensorFunction) else c, dtype=float)
                 for c in components]
        if not comps:
            raise ValueError("empty sequence")
        for n, c in enumerate(comps):
            if c.ndim != n:
                raise ValueError(f"component {n} has tensor order {c.ndim}")
        sizes = {c.shape[0] for c in comps[1:]}
        if len(sizes) > 1:
            raise ValueError(f"components disagree on K: {sorted(sizes)}")
        self.components = comps
        self.kind = kind
        if norm_param is None:
            norm_param = 0.3 if kind == OBSERVABLE else 3.0
        self.norm_param = float(norm_param)

    @classmethod
    def zeros(cls, K: int, s_max: int, kind: str = OBSERVABLE, **kw) -> "SequenceVector":
        comps = [np.zeros((K,) * n) for n in range(s_max + 1)]
        if kind == STATE:
            comps[0] = np.asarray(1.0)
        return cls(comps, kind, **kw)

    @property
    def s_max(self) -> int:
        return len(self.components) - 1

    @property
    def K(self) -> int:
        return self.components[1].shape[0] if self.s_max >= 1 else 0

    def __getitem__(self, n: int) -> np.ndarray:
        return self.components[n]

    def __len__(self) -> int:
        return len(self.components)

    def component(self, n: int) -> TensorFunction:
        return TensorFunction(self.components[n], self.kind)

    def copy(self) -> "SequenceVector":
        return SequenceVector([c.copy() for c in self.components], self.kind, self.norm_param)

    def _like(self, comps) -> "SequenceVector":
        return SequenceVector(comps, self.kind, self.norm_param)

    def __add__(self, other: "SequenceVector") -> "SequenceVector":
        if other.kind != self.kind or len(other) != len(self):
            raise ValueError("sequences differ in kind or truncation")
        return self._like([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "SequenceVector") -> "SequenceVector":
        return self + other * -1.0

    def __mul__(self, c: float) -> "SequenceVector":
        return self._like([c * a for a in self.components])

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(c))) for c in self.components)

    def allclose(self, other: "SequenceVector", atol: float = 1e-12) -> bool:
        return all(np.allclose(a, b, atol=atol, rtol=0)
                   for a, b in zip(self.components, other.components))

    def __repr__(self):
        return f"SequenceVector(kind={self.kind!r}, s_max={self.s_max}, K={self.K})"


def lift_operator(op: np.ndarray, positions: Sequence[int], n: int, K: int) -> np.ndarray:
    """Embed an operator on ``len(positions)`` factors into ``n`` factors.

    The result acts as ``op`` on the listed factors (in the listed order) and
    as the identity on every other factor.
    """
    positions = [int(p) for p in positions]
    m = len(positions)
    if len(set(positions)) != m:
        raise ValueError(f"duplicate positions {positions}")
    if any(p < 0 or p >= n for p in positions):
        raise ValueError(f"positions {positions} out of range for order {n}")
    op = np.asarray(op)
    if op.shape != (K ** m, K ** m):
        raise ValueError(f"operator shape {op.shape} does not match {m} factors of size {K}")
    rest = [i for i in range(n) if i not in positions]
    full = np.kron(op, np.eye(K ** (n - m))).reshape((K,) * (2 * n))
    inv = np.argsort(positions + rest)
    full = full.transpose(list(inv) + [n + i for i in inv])
    return full.reshape(K ** n, K ** n)


def lift_function(values: np.ndarray, positions: Sequence[int], n: int) -> np.ndarray:
    """Place a function of ``m`` arguments on ``positions`` of an ``n``-slot array.

    The result is constant in the remaining slots.
    """
    values = np.asarray(values)
    positions = [int(p) for p in positions]
    m = values.ndim
    if len(positions) != m or len(set(positions)) != m:
        raise ValueError(f"need {m} distinct positions, got {positions}")
    if any(p < 0 or p >= n for p in positions):
        raise ValueError(f"positions {positions} out of range for order {n}")
    if n == m and positions == sorted(positions):
        return values.copy()
    K = values.shape[0] if m else None
    if K is None:
        raise ValueError("cannot infer grid size from a scalar; broadcast explicitly")
    order = np.argsort(positions)
    v = values.transpose(order)  # axes now follow increasing position
    shape = [1] * n
    for p in sorted(positions):
        shape[p] = K
    return np.broadcast_to(v.reshape(shape), (K,) * n).copy()


def apply(op: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Apply a dense operator to a function of ``values.ndim`` entities."""
    values = np.asarray(values)
    return (op @ values.reshape(-1)).reshape(values.shape)


def _require(seq: SequenceVector, kind: str) -> None:
    if seq.kind != kind:
        raise ValueError(f"expected a {kind} sequence, got {seq.kind}")


def c_gamma_norm(seq: SequenceVector, gamma: float | None = None) -> float:
    """max_n gamma**n / n! * max |b_n|."""
    _require(seq, OBSERVABLE)
    gamma = seq.norm_param if gamma is None else gamma
    return max(gamma ** n / math.factorial(n) * float(np.max(np.abs(c)))
               for n, c in enumerate(seq.components))


def l1_alpha_norm(seq: SequenceVector, space: EntitySpace, alpha: float | None = None) -> float:
    """sum_n alpha**n * weighted integral of |f_n|."""
    _require(seq, STATE)
    alpha = seq.norm_param if alpha is None else alpha
    return sum(alpha ** n * float(np.sum(product_weights(space, n) * np.abs(c)))
               for n, c in enumerate(seq.components))


def pair(b: SequenceVector, f: SequenceVector, space: EntitySpace,
         normalized: bool = False) -> float:
    """Mean-value functional ``sum_n 1/n! int b_n f_n``.

    With ``normalized=True`` the sum is divided by the same expression with
    ``b = 1`` (the grand canonical normalizing factor).
    """
    _require(b, OBSERVABLE)
    _require(f, STATE)
    top = min(b.s_max, f.s_max)
    total = 0.0
    norm = 0.0
    for n in range(top + 1):
        wn = product_weights(space, n) / math.factorial(n)
        total += float(np.sum(wn * b[n] * f[n]))
        norm += float(np.sum(wn * f[n]))
    if not normalized:
        return total
    if norm == 0.0:
        raise ZeroDivisionError("normalizing factor (I, f) vanishes")
    return total / norm


def marginal_by_integration(values: np.ndarray, keep: int, space: EntitySpace) -> np.ndarray:
    """Integrate out the last ``n - keep`` arguments with the quadrature weights."""
    values = np.asarray(values)
    n = values.ndim
    if keep > n or keep < 0:
        raise ValueError(f"cannot keep {keep} of {n} arguments")
    out = values
    for _ in range(n - keep):
        out = out @ space.weights
    return np.asarray(out)


def write_tensor_csv(fn: TensorFunction, path: str | Path) -> None:
    """Write multi-index columns then value; a JSON descriptor goes next to it."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"i{k}" for k in range(fn.order)] + ["value"])
        for idx in itertools.product(range(fn.K), repeat=fn.order):
            w.writerow(list(idx) + [repr(float(fn.values[idx]))])
    path.with_suffix(".json").write_text(json.dumps(fn.descriptor(), sort_keys=True))


def read_tensor_csv(path: str | Path) -> TensorFunction:
    path = Path(path)
    desc = json.loads(path.with_suffix(".json").read_text())
    order, K = desc["order"], desc["K"]
    values = np.zeros((K,) * order)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows[0]) != order + 1:
        raise ValueError(f"{path}: header does not match order {order}")
    for row in rows[1:]:
        values[tuple(int(x) for x in row[:order])] = float(row[order])
    return TensorFunction(values, desc["kind"])

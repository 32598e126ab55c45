"""Set partitions, Stirling/Bell counts and cluster (Moebius) transforms.

Partitions are produced in restricted-growth-string order, so the stream is
canonical and reproducible.  The cluster transforms act on plain lists of
arrays indexed by order: ``seq[s]`` has shape ``(K,) * s`` and ``seq[0]`` is a
scalar slot that the transforms pin to 1.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "MAX_PARTITION_SIZE",
    "ResourceCapError",
    "Partition",
    "ClusterSpec",
    "enumerate_partitions",
    "bell",
    "stirling2",
    "partition_weight_sum",
    "cumulant_coefficient",
    "cluster_expand",
    "cluster_invert",
    "correlation_dressing_transform",
]

MAX_PARTITION_SIZE = 10


class ResourceCapError(ValueError):
    """A requested size exceeds a configured cap."""


@dataclass(frozen=True)
class Partition:
    """A set partition stored canonically.

    Blocks are sorted by their least element and elements are sorted inside
    each block, so two partitions of the same ground set compare equal iff
    they are the same partition.
    """

    blocks: tuple[tuple, ...]

    def __post_init__(self):
        blocks = tuple(tuple(sorted(b)) for b in self.blocks)
        if any(len(b) == 0 for b in blocks):
            raise ValueError("partition blocks must be nonempty")
        flat = [x for b in blocks for x in b]
        if len(flat) != len(set(flat)):
            raise ValueError("partition blocks must be disjoint")
        object.__setattr__(self, "blocks", tuple(sorted(blocks, key=lambda b: b[0])))

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    @property
    def ground(self) -> tuple:
        return tuple(sorted(x for b in self.blocks for x in b))


@dataclass(frozen=True)
class ClusterSpec:
    """The decorated set ``({Y \\ X}, X)`` over entities ``Y = (0, ..., s-1)``.

    ``singletons`` is the ordered tuple ``X``; everything else in ``Y`` forms
    the single cluster element.  Pseudo-element 0 stands for the cluster and
    pseudo-element ``k >= 1`` for ``singletons[k-1]``.
    """

    ground: int
    singletons: tuple[int, ...] = ()

    def __post_init__(self):
        x = tuple(int(j) for j in self.singletons)
        object.__setattr__(self, "singletons", x)
        if len(set(x)) != len(x):
            raise ValueError(f"repeated singleton index in {x}")
        if any(j < 0 or j >= self.ground for j in x):
            raise ValueError(f"singleton index out of range for ground {self.ground}: {x}")
        if len(x) >= self.ground:
            raise ValueError("the cluster Y\\X must be nonempty")

    @property
    def cluster(self) -> tuple[int, ...]:
        xs = set(self.singletons)
        return tuple(i for i in range(self.ground) if i not in xs)

    @property
    def n_elements(self) -> int:
        return 1 + len(self.singletons)

    def declusterize(self, block: Sequence[int] | None = None) -> tuple[int, ...]:
        """Map a block of pseudo-elements back to entity indices (theta)."""
        if block is None:
            block = range(self.n_elements)
        out: list[int] = []
        for k in block:
            if k == 0:
                out.extend(self.cluster)
            else:
                out.append(self.singletons[k - 1])
        return tuple(sorted(out))

    def partitions(self, cap: int = MAX_PARTITION_SIZE) -> Iterator[Partition]:
        """Partitions of the pseudo-element set, cluster counted once."""
        return enumerate_partitions(self.n_elements, cap=cap)


def _restricted_growth_strings(n: int) -> Iterator[list[int]]:
    a = [0] * n
    m = [0] * n  # m[i] = max(a[0..i])
    while True:
        yield a
        i = n - 1
        while i > 0 and a[i] > m[i - 1]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        m[i] = max(m[i - 1], a[i])
        for k in range(i + 1, n):
            a[k] = 0
            m[k] = m[i]


def enumerate_partitions(ground, cap: int = MAX_PARTITION_SIZE) -> Iterator[Partition]:
    """Yield every partition of ``ground`` exactly once.

    ``ground`` is either an element count ``n`` (elements ``0..n-1``) or a
    sequence of distinct elements.  Order is restricted-growth-string order,
    which starts with the one-block partition and ends with all singletons.
    """
    elements = list(range(ground)) if isinstance(ground, (int, np.integer)) else list(ground)
    n = len(elements)
    if n < 1:
        raise ValueError("cannot partition an empty ground set")
    if n > cap:
        raise ResourceCapError(f"ground set of size {n} exceeds the partition cap of {cap}")
    if len(set(elements)) != n:
        raise ValueError("ground elements must be distinct")
    for rgs in _restricted_growth_strings(n):
        blocks: list[list] = [[] for _ in range(max(rgs) + 1)]
        for el, b in zip(elements, rgs):
            blocks[b].append(el)
        yield Partition(tuple(tuple(b) for b in blocks))


@lru_cache(maxsize=None)
def stirling2(n: int, k: int) -> int:
    """Number of partitions of an ``n``-set into ``k`` blocks."""
    if not (1 <= k <= n):
        raise ValueError(f"stirling2 requires 1 <= k <= n, got n={n}, k={k}")
    if k == 1 or k == n:
        return 1
    return k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)


def bell(n: int) -> int:
    if n == 0:
        return 1
    return sum(stirling2(n, k) for k in range(1, n + 1))


def partition_weight_sum(n: int) -> int:
    """Sum over partitions P of an n-set of (|P| - 1)!."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return sum(stirling2(n, k) * math.factorial(k - 1) for k in range(1, n + 1))


def cumulant_coefficient(n_blocks: int) -> int:
    """Signed weight (-1)^{|P|-1} (|P|-1)! of a partition with |P| blocks."""
    return (-1) ** (n_blocks - 1) * math.factorial(n_blocks - 1)


def _block_product(comps: Sequence[np.ndarray], partition: Partition, s: int) -> np.ndarray:
    letters = string.ascii_letters
    if s > len(letters):
        raise ValueError("order too large for einsum labels")
    subs = ["".join(letters[i] for i in block) for block in partition]
    operands = [np.asarray(comps[len(block)]) for block in partition]
    return np.einsum(",".join(subs) + "->" + letters[:s], *operands)


def _check_orders(seq: Sequence[np.ndarray]) -> None:
    for s, comp in enumerate(seq):
        if s == 0:
            continue
        comp = np.asarray(comp)
        if comp.ndim != s:
            raise ValueError(f"component {s} has tensor order {comp.ndim}")
        if len(set(comp.shape)) > 1:
            raise ValueError(f"component {s} is not over a single grid: shape {comp.shape}")
    if len(seq) > 1:
        sizes = {np.asarray(c).shape[0] for c in seq[1:]}
        if len(sizes) > 1:
            raise ValueError(f"components disagree on grid size: {sorted(sizes)}")


def _moebius(seq: Sequence[np.ndarray], signed: bool, cap: int) -> list[np.ndarray]:
    _check_orders(seq)
    out: list[np.ndarray] = [np.asarray(1.0)]
    for s in range(1, len(seq)):
        acc = np.zeros_like(np.asarray(seq[s], dtype=float))
        for p in enumerate_partitions(s, cap=cap):
            term = _block_product(seq, p, s)
            acc += cumulant_coefficient(len(p)) * term if signed else term
        out.append(acc)
    return out


def cluster_expand(g: Sequence[np.ndarray], cap: int = MAX_PARTITION_SIZE) -> list[np.ndarray]:
    """Marginals from correlation functions: f_s = sum_P prod_blocks g_|block|."""
    return _moebius(g, signed=False, cap=cap)


def cluster_invert(f: Sequence[np.ndarray], cap: int = MAX_PARTITION_SIZE) -> list[np.ndarray]:
    """Correlation functions from marginals (inverse of :func:`cluster_expand`)."""
    return _moebius(f, signed=True, cap=cap)


def correlation_dressing_transform(seq: Sequence[np.ndarray], direction: str = "forward",
                                   cap: int = MAX_PARTITION_SIZE) -> list[np.ndarray]:
    """Convert between dressing factors ``g_s`` and reduced factors ``g~_s``.

    Both sequences carry unit one-body slots, so ``seq[1]`` is replaced by
    ones before the transform.  ``forward`` maps g~ to g, ``inverse`` maps g
    back to g~.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', not {direction!r}")
    seq = [np.asarray(c, dtype=float) for c in seq]
    if len(seq) > 1:
        seq[1] = np.ones_like(seq[1])
    out = _moebius(seq, signed=(direction == "inverse"), cap=cap)
    if len(out) > 1:
        out[1] = np.ones_like(out[1])
    return out

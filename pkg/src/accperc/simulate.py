"""Monte Carlo engines for the accessible population.

The accessible part of the N-ary tree is generated as a branching process:
an accessible vertex of fitness ``v`` has ``Binomial(N, b - max(v, l))``
accessible children (``l`` the current level's lower bound, ``(a, b]`` the
fitness window), whose fitnesses are i.i.d. uniform on ``(max(v, l), b]``.
Only accessible vertices are ever touched, so the cost scales with the
accessible population rather than with ``N**k``.

:func:`brute_force_tree` materialises the full labelled tree instead and
serves as the oracle for the branching representation.

Every replicate ``r`` draws from its own counter-based stream keyed by
``(seed, r)`` (see :mod:`accperc.rng`), and batches are cut into fixed
replicate blocks before being handed to a thread pool.  Results are therefore
bit-identical for any thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numba import njit

from .numerics import DomainError
from .rng import binomial, poisson, seed_to_uint64, stream_state, uniform

__all__ = [
    "DEFAULT_POPULATION_CAP",
    "BRUTE_FORCE_BUDGET",
    "BranchingConfig",
    "PopulationSample",
    "PopulationBatch",
    "SurvivalEstimate",
    "tilted_lower_bounds",
    "resolve_threads",
    "sample_population",
    "sample_counts",
    "estimate_survival",
    "sample_poisson_decreasing",
    "sample_poisson_counts",
    "brute_force_tree",
]

DEFAULT_POPULATION_CAP = 10_000_000
#: Largest ``N**k`` for which the explicit tree is built.
BRUTE_FORCE_BUDGET = 4096
#: Replicates per work unit.  Fixed so that the partition of work -- and
#: hence nothing about the output -- depends on the thread count.
BLOCK_SIZE = 512


# ---------------------------------------------------------------------------
# configuration and result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchingConfig:
    """Parameters of one accessible-population experiment.

    Attributes
    ----------
    N : int
        Arity of the tree.
    k : int
        Target generation.
    root_fitness : float
        Fitness ``x`` of the root.
    window : (float, float) or None
        Fitness window ``(a, b]``; ``None`` means ``(0, 1]``.
    level_lower_bounds : sequence of float or None
        ``l_1..l_k``: a generation-``t`` vertex must have fitness ``>= l_t``
        (the tilted corridor uses ``eps + (1-eps)(t-1)/k``).
    population_cap : int
        Largest generation size that is expanded further.
    seed : int
        Run seed; reduced modulo ``2**64``.
    """

    N: int
    k: int
    root_fitness: float = 0.0
    window: Optional[tuple] = None
    level_lower_bounds: Optional[tuple] = None
    population_cap: int = DEFAULT_POPULATION_CAP
    seed: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N!r}")
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"k must be a positive integer, got {self.k!r}")
        if not 0.0 <= self.root_fitness <= 1.0:
            raise DomainError("root_fitness must lie in [0, 1]")
        if self.window is not None:
            a, b = self.window
            if not 0.0 <= a < b <= 1.0:
                raise DomainError(f"window must satisfy 0 <= a < b <= 1, got {self.window!r}")
            object.__setattr__(self, "window", (float(a), float(b)))
        if self.level_lower_bounds is not None:
            lb = tuple(float(v) for v in self.level_lower_bounds)
            if len(lb) != self.k:
                raise DomainError("level_lower_bounds must have length k")
            if any(not 0.0 <= v <= 1.0 for v in lb):
                raise DomainError("level lower bounds must lie in [0, 1]")
            object.__setattr__(self, "level_lower_bounds", lb)
        if self.population_cap < 1:
            raise DomainError("population_cap must be positive")

    @property
    def a(self) -> float:
        return 0.0 if self.window is None else self.window[0]

    @property
    def b(self) -> float:
        return 1.0 if self.window is None else self.window[1]

    def lower_array(self) -> np.ndarray:
        if self.level_lower_bounds is None:
            return np.zeros(self.k)
        return np.asarray(self.level_lower_bounds, dtype=float)


@dataclass
class PopulationSample:
    """One realisation of the accessible population.

    ``counts_per_generation[t]`` is the generation-``t`` count (``t = 0`` is
    the root).  When ``truncated`` is set, the array stops at the first
    generation whose size exceeded the cap and ``front_fitnesses`` is empty.
    """

    counts_per_generation: np.ndarray
    front_fitnesses: np.ndarray
    truncated: bool = False

    @property
    def final_count(self) -> int:
        return int(self.counts_per_generation[-1])


@dataclass
class PopulationBatch:
    """Generation counts of many replicates.

    ``counts[r, t]`` is the generation-``t`` count of replicate ``r``; for
    truncated replicates the entries after the cap generation are -1.
    """

    counts: np.ndarray
    truncated: np.ndarray
    seed: int = 0

    @property
    def final(self) -> np.ndarray:
        """Final-generation counts of the replicates that were not truncated."""
        return self.counts[~self.truncated, -1]

    @property
    def replicates(self) -> int:
        return self.counts.shape[0]


@dataclass(frozen=True)
class SurvivalEstimate:
    """Monte Carlo estimate of ``P(Z_k >= 1)`` with a 95% Wald interval."""

    p_hat: float
    replicates: int
    ci_halfwidth_95: float
    successes: int = field(default=0)

    @classmethod
    def from_counts(cls, successes: int, replicates: int) -> "SurvivalEstimate":
        p = successes / replicates
        half = 1.96 * math.sqrt(p * (1.0 - p) / replicates)
        return cls(p, replicates, half, successes)

    def contains(self, value: float) -> bool:
        return abs(value - self.p_hat) <= self.ci_halfwidth_95

    @property
    def interval(self) -> tuple:
        return (self.p_hat - self.ci_halfwidth_95, self.p_hat + self.ci_halfwidth_95)


def tilted_lower_bounds(k: int, eps: float) -> tuple:
    """Level bounds ``eps + (1 - eps)(t - 1)/k`` of the tilted corridor."""
    if not 0.0 <= eps < 1.0:
        raise DomainError("eps must lie in [0, 1)")
    return tuple(eps + (1.0 - eps) * (t - 1) / k for t in range(1, k + 1))


def resolve_threads(threads: Union[int, str, None]) -> int:
    """``None``/``"auto"`` → available CPUs; otherwise a positive integer."""
    if threads is None or threads == "auto":
        try:
            return max(1, len(os.sched_getaffinity(0)))
        except AttributeError:  # pragma: no cover - non-Linux
            return max(1, os.cpu_count() or 1)
    n = int(threads)
    if n < 1:
        raise DomainError("threads must be positive")
    return n


def _run_blocks(kernel, replicates: int, threads, *args):
    """Apply ``kernel(r0, r1, *args)`` over fixed blocks of replicates."""
    blocks = [(r0, min(r0 + BLOCK_SIZE, replicates)) for r0 in range(0, replicates, BLOCK_SIZE)]
    n_threads = min(resolve_threads(threads), len(blocks)) or 1
    if n_threads == 1:
        for r0, r1 in blocks:
            kernel(r0, r1, *args)
        return
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        for fut in [pool.submit(kernel, r0, r1, *args) for r0, r1 in blocks]:
            fut.result()


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _grow(N, k, x0, a, b, lower, cap, st, counts, want_front):
    """Run the branching process; returns (front, truncated)."""
    front = np.empty(1)
    front[0] = x0
    counts[0] = 1
    for t in range(1, k + 1):
        lb = max(a, lower[t - 1])
        n_cur = front.shape[0]
        nchild = np.empty(n_cur, dtype=np.int64)
        total = 0
        for i in range(n_cur):
            thr = max(front[i], lb)
            p = b - thr
            c = binomial(N, p, st) if p > 0.0 else 0
            nchild[i] = c
            total += c
        counts[t] = total
        if total > cap:
            for s in range(t + 1, k + 1):
                counts[s] = -1
            return np.empty(0), True
        if total == 0:
            for s in range(t + 1, k + 1):
                counts[s] = 0
            return np.empty(0), False
        if t == k and not want_front:
            return np.empty(0), False
        new = np.empty(total)
        pos = 0
        for i in range(n_cur):
            thr = max(front[i], lb)
            width = b - thr
            for _ in range(nchild[i]):
                # thr + width * (1 - u) lies in (thr, b]
                new[pos] = thr + width * (1.0 - uniform(st))
                pos += 1
        front = new
    return front, False


@njit(cache=True, nogil=True)
def _grow_block(r0, r1, N, k, x0, a, b, lower, cap, seed, counts, truncated):
    for r in range(r0, r1):
        st = stream_state(seed, r)
        _, tr = _grow(N, k, x0, a, b, lower, cap, st, counts[r], False)
        truncated[r] = tr


@njit(cache=True, nogil=True)
def _survives(N, k, x0, a, b, lower, st, stack_f, stack_d, buf):
    sp = 0
    stack_f[0] = x0
    stack_d[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        v = stack_f[sp]
        d = stack_d[sp]
        thr = max(v, max(a, lower[d]))
        p = b - thr
        if p <= 0.0:
            continue
        c = binomial(N, p, st)
        if c == 0:
            continue
        if d + 1 == k:
            return True
        width = b - thr
        for i in range(c):
            buf[i] = thr + width * (1.0 - uniform(st))
        kids = np.sort(buf[:c])
        # push the highest fitness first so the lowest (most room left) is
        # expanded next
        for i in range(c - 1, -1, -1):
            stack_f[sp] = kids[i]
            stack_d[sp] = d + 1
            sp += 1
    return False


@njit(cache=True, nogil=True)
def _survival_block(r0, r1, N, k, x0, a, b, lower, seed, out):
    stack_f = np.empty(k * N + 1)
    stack_d = np.empty(k * N + 1, dtype=np.int64)
    buf = np.empty(N)
    for r in range(r0, r1):
        st = stream_state(seed, r)
        out[r] = _survives(N, k, x0, a, b, lower, st, stack_f, stack_d, buf)


@njit(cache=True, nogil=True)
def _grow_poisson(Lam, k, x0, cap, st, counts, want_front):
    front = np.empty(1)
    front[0] = x0
    counts[0] = 1
    for t in range(1, k + 1):
        n_cur = front.shape[0]
        nchild = np.empty(n_cur, dtype=np.int64)
        total = 0
        for i in range(n_cur):
            c = poisson(Lam * front[i], st) if front[i] > 0.0 else 0
            nchild[i] = c
            total += c
        counts[t] = total
        if total > cap:
            for s in range(t + 1, k + 1):
                counts[s] = -1
            return np.empty(0), True
        if total == 0:
            for s in range(t + 1, k + 1):
                counts[s] = 0
            return np.empty(0), False
        if t == k and not want_front:
            return np.empty(0), False
        new = np.empty(total)
        pos = 0
        for i in range(n_cur):
            v = front[i]
            for _ in range(nchild[i]):
                new[pos] = v * uniform(st)  # uniform on [0, v)
                pos += 1
        front = new
    return front, False


@njit(cache=True, nogil=True)
def _poisson_block(r0, r1, Lam, k, x0, cap, seed, counts, truncated):
    for r in range(r0, r1):
        st = stream_state(seed, r)
        _, tr = _grow_poisson(Lam, k, x0, cap, st, counts[r], False)
        truncated[r] = tr


@njit(cache=True, nogil=True)
def _brute_block(r0, r1, N, k, x0, seed, out):
    for r in range(r0, r1):
        st = stream_state(seed, r)
        parent_label = np.empty(1)
        parent_label[0] = x0
        parent_acc = np.ones(1, dtype=np.bool_)
        size = 1
        for t in range(1, k + 1):
            size *= N
            label = np.empty(size)
            acc = np.empty(size, dtype=np.bool_)
            # breadth-first order: child c of node i has index i * N + c
            for j in range(size):
                u = uniform(st)
                label[j] = u
                i = j // N
                acc[j] = parent_acc[i] and u > parent_label[i]
            parent_label = label
            parent_acc = acc
        out[r] = np.sum(parent_acc)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _cfg_args(cfg: BranchingConfig):
    return cfg.N, cfg.k, float(cfg.root_fitness), cfg.a, cfg.b, cfg.lower_array()


def sample_population(cfg: BranchingConfig, replicate: int = 0) -> PopulationSample:
    """One realisation of the accessible population (replicate ``replicate``
    of the stream family keyed by ``cfg.seed``).

    Generation ``t+1`` is produced from generation ``t`` by giving each
    vertex of fitness ``v`` a ``Binomial(N, (b - max(v, a, l_{t+1}))_+)``
    number of children with fitnesses uniform on ``(max(v, a, l_{t+1}), b]``.
    Growth stops (``truncated=True``) at the first generation larger than
    ``cfg.population_cap``.
    """
    N, k, x0, a, b, lower = _cfg_args(cfg)
    counts = np.zeros(k + 1, dtype=np.int64)
    st = stream_state(seed_to_uint64(cfg.seed), np.uint64(replicate))
    front, truncated = _grow(N, k, x0, a, b, lower, cfg.population_cap, st, counts, True)
    if truncated:
        last = int(np.argmax(counts < 0)) if np.any(counts < 0) else k + 1
        return PopulationSample(counts[:last], np.empty(0), True)
    if counts[k] == 0:
        front = np.empty(0)
    return PopulationSample(counts, front, False)


def sample_counts(cfg: BranchingConfig, replicates: int, threads=None) -> PopulationBatch:
    """Generation counts for ``replicates`` independent realisations.

    Replicate ``r`` is bit-identical to ``sample_population(cfg, r)``
    (counts only), whatever the thread count.
    """
    if replicates < 1:
        raise DomainError("replicates must be positive")
    N, k, x0, a, b, lower = _cfg_args(cfg)
    counts = np.zeros((replicates, k + 1), dtype=np.int64)
    truncated = np.zeros(replicates, dtype=np.bool_)
    seed = seed_to_uint64(cfg.seed)
    _run_blocks(
        lambda r0, r1: _grow_block(r0, r1, N, k, x0, a, b, lower, cfg.population_cap, seed, counts, truncated),
        replicates,
        threads,
    )
    return PopulationBatch(counts, truncated, cfg.seed)


def estimate_survival(cfg: BranchingConfig, replicates: int, threads=None) -> SurvivalEstimate:
    """Estimate ``P_x(Z_k >= 1)`` by depth-first search with early exit.

    Each replicate explores the accessible tree depth-first with an explicit
    stack, expanding the lowest-fitness child first, and stops as soon as a
    vertex of generation ``k`` appears.  Memory is ``O(k N)`` per thread.
    """
    if replicates < 1:
        raise DomainError("replicates must be positive")
    N, k, x0, a, b, lower = _cfg_args(cfg)
    out = np.zeros(replicates, dtype=np.bool_)
    seed = seed_to_uint64(cfg.seed)
    _run_blocks(lambda r0, r1: _survival_block(r0, r1, N, k, x0, a, b, lower, seed, out), replicates, threads)
    return SurvivalEstimate.from_counts(int(out.sum()), replicates)


def sample_poisson_decreasing(
    Lambda: float,
    k: int,
    root_fitness: float,
    seed: int = 0,
    *,
    replicate: int = 0,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> PopulationSample:
    """Decreasing-label population on a Poisson(``Lambda``) Galton-Watson tree.

    A vertex of fitness ``v`` keeps ``Poisson(Lambda v)`` children (those of
    its Poisson(``Lambda``) offspring with smaller label), with fitnesses
    i.i.d. uniform on ``[0, v)``.
    """
    if not Lambda > 0:
        raise DomainError("Lambda must be positive")
    if int(k) != k or k < 1:
        raise DomainError("k must be a positive integer")
    if not 0.0 <= root_fitness <= 1.0:
        raise DomainError("root_fitness must lie in [0, 1]")
    counts = np.zeros(k + 1, dtype=np.int64)
    st = stream_state(seed_to_uint64(seed), np.uint64(replicate))
    front, truncated = _grow_poisson(float(Lambda), int(k), float(root_fitness), population_cap, st, counts, True)
    if truncated:
        last = int(np.argmax(counts < 0)) if np.any(counts < 0) else k + 1
        return PopulationSample(counts[:last], np.empty(0), True)
    if counts[k] == 0:
        front = np.empty(0)
    return PopulationSample(counts, front, False)


def sample_poisson_counts(
    Lambda: float,
    k: int,
    root_fitness: float,
    replicates: int,
    seed: int = 0,
    *,
    population_cap: int = DEFAULT_POPULATION_CAP,
    threads=None,
) -> PopulationBatch:
    """Batch version of :func:`sample_poisson_decreasing` (counts only)."""
    if not Lambda > 0:
        raise DomainError("Lambda must be positive")
    counts = np.zeros((replicates, k + 1), dtype=np.int64)
    truncated = np.zeros(replicates, dtype=np.bool_)
    s = seed_to_uint64(seed)
    _run_blocks(
        lambda r0, r1: _poisson_block(r0, r1, float(Lambda), int(k), float(root_fitness), population_cap, s, counts, truncated),
        replicates,
        threads,
    )
    return PopulationBatch(counts, truncated, seed)


def brute_force_tree(
    N: int,
    k: int,
    root_fitness: float = 0.0,
    replicates: int = 1,
    seed: int = 0,
    threads=None,
) -> np.ndarray:
    """Accessible generation-``k`` counts from the explicit labelled tree.

    Builds all ``N + N^2 + ... + N^k`` labels i.i.d. uniform (breadth-first
    order) and counts the leaves whose ancestral labels increase from
    ``root_fitness``.  Returns one count per replicate; use
    ``np.bincount`` for the empirical distribution.
    """
    if int(N) != N or N < 1 or int(k) != k or k < 1:
        raise DomainError("N and k must be positive integers")
    if N ** k > BRUTE_FORCE_BUDGET:
        raise DomainError(f"N**k = {N ** k} exceeds the explicit-tree budget {BRUTE_FORCE_BUDGET}")
    out = np.zeros(replicates, dtype=np.int64)
    s = seed_to_uint64(seed)
    _run_blocks(lambda r0, r1: _brute_block(r0, r1, int(N), int(k), float(root_fitness), s, out), replicates, threads)
    return out

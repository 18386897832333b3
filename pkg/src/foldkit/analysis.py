"""Measurement instruments: SVD energy profiles, exact EMD, and encoder sweeps.

Blocks are numbered from 1 in every sweep, matching how reports label them.
"""
from __future__ import annotations

import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .aggregation import AggregationScheme
from .encoder import Encoder, ReductionSchedule, forward, make_schedule
from .errors import ArgumentError, DomainError, ShapeError
from .linalg import svd
from .tokenseq import TokenSequence

RANK_CUTOFF = 1e-12
WEIGHT_TOL = 1e-9


def max_threads() -> int:
    env = os.environ.get("FOLDKIT_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ArgumentError(f"FOLDKIT_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _pmap(fn: Callable, items: Iterable) -> list:
    # results come back in input order regardless of completion order
    items = list(items)
    workers = min(max_threads(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- energy ---------------------------------------------------------------


class EnergyCurve:
    """Cumulative singular-value share ``E(k) = sum(sigma[:k]) / sum(sigma)``."""

    def __init__(self, sigma):
        sigma = np.asarray(sigma, dtype=np.float64).ravel()
        if sigma.size == 0 or np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise DomainError("singular values must be finite and nonnegative")
        if np.any(np.diff(sigma) > 0):
            raise DomainError("singular values must be nonincreasing")
        if sigma[0] <= 0:
            raise DomainError("all singular values are zero; energy is undefined")
        sigma = np.where(sigma < RANK_CUTOFF * sigma[0], 0.0, sigma)
        self.sigma = sigma
        self.rank = int(np.count_nonzero(sigma))
        values = np.cumsum(sigma) / sigma.sum()
        values[self.rank - 1:] = 1.0
        self.values = values

    def __call__(self, k: int) -> float:
        if k <= 0:
            return 0.0
        return float(self.values[min(k, self.values.size) - 1])

    def min_k(self, t_e: float) -> int:
        _check_threshold(t_e)
        return int(np.argmax(self.values >= t_e)) + 1


def energy(sigma) -> EnergyCurve:
    return EnergyCurve(sigma)


def _check_threshold(t_e: float) -> None:
    if not 0.0 < t_e <= 1.0:
        raise ArgumentError(f"energy threshold must lie in (0, 1], got {t_e}")


def min_tokens(x, t_e: float) -> int:
    """Smallest k whose top-k singular values hold at least ``t_e`` of the energy."""
    _check_threshold(t_e)
    return energy(svd(x).sigma).min_k(t_e)


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    thresholds: np.ndarray
    per_block_k: np.ndarray  # (blocks, thresholds)

    def to_dict(self) -> dict:
        return {
            "thresholds": [float(t) for t in self.thresholds],
            "per_block_k": [[int(k) for k in row] for row in self.per_block_k],
        }


# -- exact earth mover's distance ------------------------------------------


@dataclass(frozen=True, eq=False)
class TransportPlan:
    gamma: np.ndarray
    cost: float
    source_weights: np.ndarray
    target_weights: np.ndarray
    iterations: int = 0


def cost_matrix(source_points, target_points) -> np.ndarray:
    """Euclidean ground costs ``d_ij = ||y_i - z_j||``."""
    y = np.asarray(source_points, dtype=np.float64)
    z = np.asarray(target_points, dtype=np.float64)
    if y.ndim != 2 or z.ndim != 2 or y.shape[1] != z.shape[1]:
        raise ShapeError(f"point sets disagree on dimension: {y.shape} vs {z.shape}")
    diff = y[:, None, :] - z[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _check_weights(w, count: int, side: str) -> np.ndarray:
    if w is None:
        return np.full(count, 1.0 / count)
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape[0] != count:
        raise ShapeError(f"{side} weights have length {w.shape[0]} for {count} points")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ArgumentError(f"{side} weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise ArgumentError(f"{side} weights sum to {w.sum():.17g}, expected 1")
    return w


class _TransportTree:
    """Spanning-tree basis of the transportation problem.

    Row i is node i and column j is node ``n + j``; basic cells are tree edges.
    """

    def __init__(self, n: int, k: int):
        self.n, self.k = n, k
        self.adj: list[set] = [set() for _ in range(n + k)]

    def add(self, i: int, j: int) -> None:
        self.adj[i].add(self.n + j)
        self.adj[self.n + j].add(i)

    def remove(self, i: int, j: int) -> None:
        self.adj[i].discard(self.n + j)
        self.adj[self.n + j].discard(i)

    def potentials(self, cost: np.ndarray):
        n = self.n
        pot = np.zeros(n + self.k)
        seen = np.zeros(n + self.k, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            a = queue.popleft()
            for b in self.adj[a]:
                if not seen[b]:
                    seen[b] = True
                    c = cost[a, b - n] if a < n else cost[b, a - n]
                    pot[b] = c - pot[a]
                    queue.append(b)
        return pot[:n], pot[n:]

    def path(self, start: int, goal: int) -> list[int]:
        parent = {start: None}
        queue = deque([start])
        while queue:
            a = queue.popleft()
            if a == goal:
                break
            for b in self.adj[a]:
                if b not in parent:
                    parent[b] = a
                    queue.append(b)
        out = [goal]
        while parent[out[-1]] is not None:
            out.append(parent[out[-1]])
        return out  # goal ... start


def _northwest_corner(a: np.ndarray, b: np.ndarray, tree: _TransportTree, flow: np.ndarray):
    n, k = flow.shape
    s, d = a.copy(), b.copy()
    i = j = 0
    while True:
        x = min(s[i], d[j])
        flow[i, j] = x
        tree.add(i, j)
        s[i] -= x
        d[j] -= x
        if i == n - 1 and j == k - 1:
            return
        # one index advances per cell, so the basis has exactly n + k - 1 cells
        if j == k - 1 or (i < n - 1 and s[i] <= d[j]):
            i += 1
        else:
            j += 1


def transport_simplex(cost: np.ndarray, a: np.ndarray, b: np.ndarray, max_iter: int = 1_000_000):
    """Exact min-cost transport by the network simplex on the bipartite graph.

    The entering cell is the most negative reduced cost (lowest flat index on
    ties); after a run of degenerate pivots it switches to the first negative
    cell, and the leaving cell is always the lowest-index blocking cell, which
    rules out cycling.
    """
    n, k = cost.shape
    flow = np.zeros((n, k))
    basic = np.zeros((n, k), dtype=bool)
    tree = _TransportTree(n, k)
    _northwest_corner(a, b, tree, flow)
    for a_node, nbrs in enumerate(tree.adj[:n]):
        for c_node in nbrs:
            basic[a_node, c_node - n] = True
    scale = max(1.0, float(cost.max()) if cost.size else 1.0)
    tol = 1e-12 * scale
    degenerate_run = 0
    iterations = 0
    while iterations < max_iter:
        u, v = tree.potentials(cost)
        reduced = cost - u[:, None] - v[None, :]
        reduced[basic] = 0.0
        if degenerate_run < 50:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -tol:
                break
        else:
            negative = np.flatnonzero(reduced < -tol)
            if negative.size == 0:
                break
            flat = int(negative[0])
        iterations += 1
        ei, ej = divmod(flat, k)
        # cycle: entering cell, then the tree path from column ej back to row ei
        nodes = tree.path(ei, n + ej)
        cells = []
        for x, y in zip(nodes[:-1], nodes[1:]):
            cells.append((x, y - n) if x < n else (y, x - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leave = min(c for c in minus if flow[c] == theta)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ei, ej] += theta
        flow[leave] = 0.0
        degenerate_run = degenerate_run + 1 if theta == 0.0 else 0
        basic[leave] = False
        tree.remove(*leave)
        basic[ei, ej] = True
        tree.add(ei, ej)
    else:
        raise DomainError(f"network simplex did not converge in {max_iter} pivots")
    np.maximum(flow, 0.0, out=flow)
    return flow, iterations


def emd(source_points, target_points, source_weights=None, target_weights=None) -> TransportPlan:
    """Exact earth mover's distance between two weighted point clouds.

    Weights default to uniform (the empirical distributions of the points)
    and must otherwise each sum to 1 within 1e-9.
    """
    y = np.asarray(source_points, dtype=np.float64)
    z = np.asarray(target_points, dtype=np.float64)
    if y.ndim != 2 or z.ndim != 2 or y.shape[0] == 0 or z.shape[0] == 0:
        raise ArgumentError("both point sets must be nonempty 2-D arrays")
    a = _check_weights(source_weights, y.shape[0], "source")
    b = _check_weights(target_weights, z.shape[0], "target")
    cost = cost_matrix(y, z)
    a_n, b_n = a / a.sum(), b / b.sum()
    gamma, iterations = transport_simplex(cost, a_n, b_n)
    total = float(np.sum(gamma * cost))
    return TransportPlan(gamma, total, a, b, iterations)


# -- sweeps ---------------------------------------------------------------


def reduction_count(ratio: float, n_reducible: int) -> int:
    """``round(ratio * n')`` with halves rounded up."""
    if not 0.0 <= ratio < 1.0:
        raise ArgumentError(f"ratio must lie in [0, 1), got {ratio}")
    return int(math.floor(ratio * n_reducible + 0.5))


def _output_emd(reference: TokenSequence, reduced: TokenSequence, weights: str) -> float:
    if weights == "uniform":
        target_w = None
    elif weights == "sizes":
        target_w = reduced.sizes / reduced.sizes.sum()
    else:
        raise ArgumentError(f"unknown EMD weighting {weights!r}")
    return emd(reference.tokens, reduced.tokens, None, target_w).cost


def _check_block(enc: Encoder, block: int) -> None:
    if not 1 <= block <= enc.config.blocks:
        raise ArgumentError(f"block {block} outside [1, {enc.config.blocks}]")


def baseline_output(enc: Encoder, seq: TokenSequence) -> TokenSequence:
    out, _ = forward(enc, seq, record=False)
    return out


def _single_block_schedule(enc: Encoder, seq: TokenSequence, block: int, ratio=None, r=None):
    _check_block(enc, block)
    # a class token added by the encoder is pinned, so the reducible count is unchanged
    n_red = seq.reducible
    if r is None:
        if ratio is None:
            raise ArgumentError("give either ratio or r")
        r = reduction_count(ratio, n_red)
    per = [0] * enc.config.blocks
    per[block - 1] = int(r)
    return ReductionSchedule(tuple(per))


def propagation_sweep(
    enc: Encoder,
    seq: TokenSequence,
    block: int,
    ratio: Optional[float] = 0.5,
    scorer=None,
    scheme=AggregationScheme.AVERAGE,
    *,
    r: Optional[int] = None,
    weights: str = "uniform",
    baseline: Optional[TokenSequence] = None,
) -> float:
    """EMD between the unreduced output and the output when only ``block`` reduces.

    The block removes ``round(ratio * n')`` tokens, or exactly ``r`` when given.
    """
    schedule = _single_block_schedule(enc, seq, block, ratio, r)
    if schedule.total == 0:
        return 0.0
    reference = baseline_output(enc, seq) if baseline is None else baseline
    reduced, _ = forward(enc, seq, schedule, scorer, scheme, record=False)
    return _output_emd(reference, reduced, weights)


def propagation_profile(
    enc: Encoder,
    seq: TokenSequence,
    ratio: Optional[float] = 0.5,
    scorer=None,
    scheme=AggregationScheme.AVERAGE,
    *,
    r: Optional[int] = None,
    weights: str = "uniform",
    blocks: Optional[Sequence[int]] = None,
) -> list[float]:
    """:func:`propagation_sweep` for every block (or the given ones), sharing one baseline."""
    reference = baseline_output(enc, seq)
    blocks = list(range(1, enc.config.blocks + 1)) if blocks is None else list(blocks)
    return _pmap(
        lambda b: propagation_sweep(
            enc, seq, b, ratio, scorer, scheme, r=r, weights=weights, baseline=reference
        ),
        blocks,
    )


def aggregation_sweep(
    enc: Encoder,
    seq: TokenSequence,
    block: int,
    ratio: Optional[float] = 0.5,
    scorer=None,
    *,
    r: Optional[int] = None,
    weights: str = "uniform",
) -> dict[str, float]:
    """Propagation EMD under each aggregation scheme, all else fixed."""
    reference = baseline_output(enc, seq)
    schemes = list(AggregationScheme)
    values = _pmap(
        lambda s: propagation_sweep(
            enc, seq, block, ratio, scorer, s, r=r, weights=weights, baseline=reference
        ),
        schemes,
    )
    return {s.value: v for s, v in zip(schemes, values)}


def energy_sweep(enc: Encoder, seq: TokenSequence, thresholds: Sequence[float]) -> EnergyProfile:
    """Minimum token count per block and threshold, from each block's output."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    for t in thresholds:
        _check_threshold(float(t))
    _, acts = forward(enc, seq)
    curves = _pmap(lambda a: energy(svd(a.tokens_out).sigma), acts)
    table = np.array([[c.min_k(float(t)) for t in thresholds] for c in curves], dtype=np.int64)
    return EnergyProfile(thresholds, table)


def schedule_sweep(
    enc: Encoder,
    seq: TokenSequence,
    ratio: float,
    kinds: Sequence[str] = ("last1", "last3", "uniform"),
    scorer=None,
    scheme=AggregationScheme.AVERAGE,
    *,
    weights: str = "uniform",
) -> dict[str, dict]:
    """Output EMD for several ways of spreading the same total reduction over blocks.

    ``kinds`` entries are ``last1``, ``lastK`` for an integer K, or ``uniform``.
    """
    n_red = seq.reducible
    total = reduction_count(ratio, n_red)
    blocks = enc.config.blocks
    schedules = {}
    for kind in kinds:
        key = kind.lower()
        if key == "uniform":
            sched = make_schedule("uniform", total, blocks, n_tokens=n_red)
        elif key.startswith("last") and key[4:].isdigit():
            sched = make_schedule("last_n", total, blocks, last_n=int(key[4:]), n_tokens=n_red)
        else:
            raise ArgumentError(f"unknown schedule kind {kind!r}")
        schedules[kind] = sched
    reference = baseline_output(enc, seq)

    def run(kind):
        reduced, _ = forward(enc, seq, schedules[kind], scorer, scheme, record=False)
        return _output_emd(reference, reduced, weights)

    values = _pmap(run, list(schedules))
    return {
        kind: {"schedule": list(schedules[kind].per_block_r), "emd": value}
        for kind, value in zip(schedules, values)
    }

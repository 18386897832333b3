"""Collapse a matched group of tokens into one convex combination.

Every scheme writes ``y = sum(alpha_i * x_i)`` with ``sum(alpha_i) == 1`` and
returns the group's total size as the new size counter.
"""
from __future__ import annotations

import enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, ShapeError
from .linalg import NORM_EPS, row_l2_norms


class AggregationScheme(enum.Enum):
    AVERAGE = "avg"
    WEIGHTED_NORM = "weighted"
    DROP = "drop"

    @classmethod
    def parse(cls, value) -> "AggregationScheme":
        if isinstance(value, cls):
            return value
        aliases = {"average": "avg", "weightednorm": "weighted", "weighted_norm": "weighted"}
        key = str(value).lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ArgumentError(
                f"unknown aggregation scheme {value!r}; choose from avg, weighted, drop"
            ) from None


def weights(tokens: np.ndarray, sizes: np.ndarray, scheme: AggregationScheme) -> np.ndarray:
    """Convex weights ``alpha_i`` for the rows of ``tokens``."""
    sizes = np.asarray(sizes, dtype=np.float64)
    if scheme is AggregationScheme.AVERAGE:
        return sizes / sizes.sum()
    mass = sizes * row_l2_norms(tokens)
    if scheme is AggregationScheme.WEIGHTED_NORM:
        # all-zero groups carry no preference: fall back to the plain average
        if np.all(row_l2_norms(tokens) < NORM_EPS):
            return sizes / sizes.sum()
        return mass / mass.sum()
    alpha = np.zeros_like(sizes)
    alpha[int(np.argmax(mass))] = 1.0
    return alpha


def aggregate_rows(tokens: np.ndarray, sizes: Sequence[int], scheme=AggregationScheme.AVERAGE):
    """Array form of :func:`aggregate`; ``tokens`` is ``m x d``, ``sizes`` has length m."""
    scheme = AggregationScheme.parse(scheme)
    tokens = np.asarray(tokens, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.int64)
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise ArgumentError("cannot aggregate an empty group")
    if sizes.shape != (tokens.shape[0],):
        raise ShapeError(f"{sizes.size} sizes for {tokens.shape[0]} tokens")
    if np.any(sizes < 1):
        raise ArgumentError("sizes must be positive")
    total = int(sizes.sum())
    if scheme is AggregationScheme.DROP:
        mass = sizes * row_l2_norms(tokens)
        # np.argmax returns the first maximum, so ties keep the lowest position
        return tokens[int(np.argmax(mass))].copy(), total
    if scheme is AggregationScheme.AVERAGE:
        return (sizes[:, None] * tokens).sum(axis=0) / total, total
    return weights(tokens, sizes, scheme) @ tokens, total


def aggregate(group: Iterable[tuple], scheme=AggregationScheme.AVERAGE):
    """Aggregate ``[(token, size), ...]`` into ``(token, size)``."""
    group = list(group)
    if not group:
        raise ArgumentError("cannot aggregate an empty group")
    dims = {np.asarray(t).size for t, _ in group}
    if len(dims) != 1:
        raise ShapeError(f"group tokens have differing dimensions {sorted(dims)}")
    tokens = np.array([np.asarray(t, dtype=np.float64).ravel() for t, _ in group])
    sizes = [int(s) for _, s in group]
    return aggregate_rows(tokens, sizes, scheme)

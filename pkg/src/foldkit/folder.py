"""Iterative bipartite merging that removes an arbitrary number of tokens.

A single bipartite pass can remove at most half of the reducible tokens.  When
more must go, :func:`folder_reduce` repeats the pass ("fold") on its own
output, removing ``min(n'//2, r_remain)`` tokens each time, until nothing
remains to remove.

One fold:

1. split the reducible suffix into A (even offsets) and B (odd offsets);
2. give every A token its best-scoring B partner;
3. keep the top ``r_fold`` matches by score;
4. aggregate each B anchor with all sources matched to it;
5. emit ``pinned + A' + B'``, where A' are the unmatched A tokens.

Sizes travel with the tokens, so size-weighted averaging gives the same result
whatever the fold order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aggregation import AggregationScheme, aggregate_rows
from .errors import CapacityError
from .matching import MatchContext, TokenScorer, best_matches, get_scorer
from .tokenseq import TokenSequence


@dataclass(frozen=True)
class FoldRecord:
    n_before: int
    r_fold: int
    r_remain_after: int
    match_count_kept: int
    # assignment[i] is the output position that input position i ends up in
    assignment: tuple = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {
            "n_before": self.n_before,
            "r_fold": self.r_fold,
            "r_remain_after": self.r_remain_after,
            "match_count_kept": self.match_count_kept,
            "assignment": list(self.assignment),
        }


@dataclass(frozen=True)
class FoldTrace:
    records: tuple = ()

    @property
    def total_folds(self) -> int:
        return len(self.records)

    @property
    def r_folds(self) -> list[int]:
        return [rec.r_fold for rec in self.records]

    def origin_map(self, n_original: int) -> np.ndarray:
        """Final output position of every original token (the merge forest, flattened)."""
        where = np.arange(n_original)
        for rec in self.records:
            where = np.asarray(rec.assignment, dtype=np.intp)[where]
        return where

    def constituents(self, n_original: int) -> list[list[int]]:
        """Original token indices making up each output token."""
        where = self.origin_map(n_original)
        n_out = n_original - sum(self.r_folds)
        groups: list[list[int]] = [[] for _ in range(n_out)]
        for original, final in enumerate(where):
            groups[final].append(original)
        return groups

    def to_dict(self) -> dict:
        return {"total_folds": self.total_folds, "records": [r.to_dict() for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "FoldTrace":
        records = tuple(
            FoldRecord(
                int(r["n_before"]),
                int(r["r_fold"]),
                int(r["r_remain_after"]),
                int(r["match_count_kept"]),
                tuple(int(a) for a in r.get("assignment", ())),
            )
            for r in data["records"]
        )
        return cls(records)


def _resolve_scorer(scorer):
    if scorer is None:
        return TokenScorer()
    if isinstance(scorer, str):
        return get_scorer(scorer)
    return scorer


def _carry_context(ctx: Optional[MatchContext], groups, order, sizes) -> Optional[MatchContext]:
    # merged tokens inherit a size-weighted key and the summed importance
    if ctx is None or (ctx.keys is None and ctx.importance is None):
        return ctx
    keys = None if ctx.keys is None else ctx.keys.copy()
    imp = None if ctx.importance is None else ctx.importance.copy()
    for members in groups:
        anchor = members[0]
        if keys is not None:
            w = sizes[members].astype(np.float64)
            keys[anchor] = (w[:, None] * ctx.keys[members]).sum(axis=0) / w.sum()
        if imp is not None:
            imp[anchor] = ctx.importance[members].sum()
    return MatchContext(
        keys=None if keys is None else keys[order],
        importance=None if imp is None else imp[order],
        alpha=ctx.alpha,
    )


def fold_once(
    seq: TokenSequence,
    r_remain: int,
    scorer=None,
    scheme=AggregationScheme.AVERAGE,
    ctx: Optional[MatchContext] = None,
):
    """Run a single fold.

    Returns ``(new_seq, r_remain_after, record, new_ctx)``.  With
    ``r_remain == 0`` the input is returned untouched.
    """
    scheme = AggregationScheme.parse(scheme)
    n, p = seq.n, seq.pinned_prefix
    n_red = n - p
    if r_remain <= 0:
        record = FoldRecord(n, 0, 0, 0, tuple(range(n)))
        return seq, 0, record, ctx
    if n_red < 2:
        raise CapacityError(
            f"cannot remove {r_remain} tokens: only {n_red} reducible token(s) left"
        )
    if ctx is not None and ctx.rows() is not None and ctx.rows() != n:
        raise CapacityError(f"match context has {ctx.rows()} rows for {n} tokens")
    scorer = _resolve_scorer(scorer)

    r_fold = min(n_red // 2, r_remain)
    a_pos = np.arange(p, n, 2)
    b_pos = np.arange(p + 1, n, 2)
    tokens, sizes = seq.tokens, seq.sizes

    matches = best_matches(tokens[a_pos], tokens[b_pos], scorer, ctx, a_pos, b_pos)
    kept = matches.ranked()[:r_fold]

    sources_of: dict[int, list[int]] = {}
    merged_a = np.zeros(len(a_pos), dtype=bool)
    for m in kept:
        merged_a[matches.source[m]] = True
        sources_of.setdefault(int(matches.target[m]), []).append(int(a_pos[matches.source[m]]))

    new_tokens = tokens.copy()
    new_sizes = sizes.copy()
    groups = []
    for j, sources in sources_of.items():
        anchor = int(b_pos[j])
        # aggregate in current sequence order; the anchor's row receives the result
        members = np.array(sorted(sources + [anchor]))
        y, size = aggregate_rows(tokens[members], sizes[members], scheme)
        new_tokens[anchor] = y
        new_sizes[anchor] = size
        groups.append(np.concatenate(([anchor], members[members != anchor])))

    survivors_a = a_pos[~merged_a]
    order = np.concatenate((np.arange(p), survivors_a, b_pos)).astype(np.intp)

    assignment = np.empty(n, dtype=np.intp)
    assignment[order] = np.arange(len(order))
    for g in groups:
        assignment[g[1:]] = assignment[g[0]]

    out = TokenSequence(new_tokens[order], new_sizes[order], p)
    new_ctx = _carry_context(ctx, groups, order, sizes)
    r_after = r_remain - r_fold
    record = FoldRecord(n, r_fold, r_after, len(kept), tuple(int(i) for i in assignment))
    return out, r_after, record, new_ctx


def folder_reduce(
    seq: TokenSequence,
    r: int,
    scorer=None,
    scheme=AggregationScheme.AVERAGE,
    ctx: Optional[MatchContext] = None,
):
    """Remove exactly ``r`` tokens, folding as many times as needed.

    At least one reducible token must survive, so ``r <= n' - 1`` where
    ``n'`` excludes the pinned prefix.  Returns ``(reduced, trace)``.
    """
    r = int(r)
    if r < 0:
        raise CapacityError(f"reduction count must be nonnegative, got {r}")
    if r > 0 and r > seq.reducible - 1:
        raise CapacityError(
            f"cannot remove {r} of {seq.reducible} reducible tokens: "
            "at least one reducible token must remain"
        )
    scorer = _resolve_scorer(scorer)
    records = []
    r_remain = r
    while r_remain > 0:
        seq, r_remain, record, ctx = fold_once(seq, r_remain, scorer, scheme, ctx)
        records.append(record)
    return seq, FoldTrace(tuple(records))


def simplified_reduce(tokens, r: int) -> np.ndarray:
    """Token-cosine, average-merge reduction of a bare ``n x d`` matrix."""
    seq = TokenSequence(tokens, np.ones(np.shape(tokens)[0], dtype=np.int64), 0)
    out, _ = folder_reduce(seq, r, TokenScorer(), AggregationScheme.AVERAGE)
    return np.array(out.tokens)

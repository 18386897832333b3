"""Scoring functions that rank candidate merges from partition A into partition B.

Three scorers are available:

* ``token``: cosine similarity of the token vectors themselves (default);
* ``key``: cosine similarity of head-averaged attention keys;
* ``turbo``: a raw similarity minus ``alpha`` times the source token's
  importance, so that redundant but unimportant tokens merge first.

A scorer is called as ``scorer(a_tokens, b_tokens, ctx, a_index, b_index)`` and
returns the ``|A| x |B|`` score matrix.  ``a_index``/``b_index`` locate the rows
inside the per-token arrays held by the :class:`MatchContext`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ArgumentError, ConfigurationError, ShapeError
from .linalg import cosine_matrix, cosine_similarity

DEFAULT_ALPHA = 5.0


@dataclass(frozen=True, eq=False)
class MatchContext:
    keys: Optional[np.ndarray] = None
    importance: Optional[np.ndarray] = None
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.alpha < 0:
            raise ArgumentError(f"alpha must be nonnegative, got {self.alpha}")
        if self.keys is not None:
            keys = np.array(self.keys, dtype=np.float64)
            if keys.ndim != 2:
                raise ShapeError(f"keys must be 2-D, got shape {keys.shape}")
            keys.flags.writeable = False
            object.__setattr__(self, "keys", keys)
        if self.importance is not None:
            imp = np.array(self.importance, dtype=np.float64).ravel()
            if np.any(imp < 0) or not np.all(np.isfinite(imp)):
                raise ArgumentError("importance must be finite and nonnegative")
            total = imp.sum()
            imp = imp / total if total > 0 else np.full_like(imp, 1.0 / imp.size)
            imp.flags.writeable = False
            object.__setattr__(self, "importance", imp)
        if (
            self.keys is not None
            and self.importance is not None
            and self.keys.shape[0] != self.importance.shape[0]
        ):
            raise ShapeError("keys and importance disagree on the token count")

    def rows(self) -> Optional[int]:
        if self.keys is not None:
            return self.keys.shape[0]
        if self.importance is not None:
            return self.importance.shape[0]
        return None


def importance_from_attention(attention: np.ndarray, pinned_prefix: int) -> np.ndarray:
    """Per-token importance from a ``(heads, n, n)`` attention stack.

    With a class token (``pinned_prefix >= 1``) this is the head-mean of the
    class token's attention row.  Without one, the head-and-query mean of the
    attention each token receives is used.  Pinned entries are zeroed and the
    rest renormalized to sum to 1.
    """
    attention = np.asarray(attention, dtype=np.float64)
    if pinned_prefix >= 1:
        imp = attention[:, 0, :].mean(axis=0)
    else:
        imp = attention.mean(axis=(0, 1))
    imp = imp.copy()
    imp[:pinned_prefix] = 0.0
    total = imp.sum()
    if total <= 0:
        imp[pinned_prefix:] = 1.0
        total = imp.sum()
    return imp / total


# -- scalar scores ---------------------------------------------------------


def score_token_cosine(a, b, ctx: Optional[MatchContext] = None) -> float:
    return cosine_similarity(a, b)


def score_key_cosine(i: int, j: int, ctx: Optional[MatchContext]) -> float:
    if ctx is None or ctx.keys is None:
        raise ConfigurationError("key matcher needs attention keys in the match context")
    return cosine_similarity(ctx.keys[i], ctx.keys[j])


def score_turbo(a_index: int, b_index: int, raw_similarity: float, ctx: Optional[MatchContext]) -> float:
    if ctx is None or ctx.importance is None:
        raise ConfigurationError("turbo matcher needs token importance in the match context")
    return raw_similarity - ctx.alpha * float(ctx.importance[a_index])


# -- vectorized scorers ----------------------------------------------------


class TokenScorer:
    name = "token"

    def __call__(self, a_tokens, b_tokens, ctx=None, a_index=None, b_index=None):
        return cosine_matrix(a_tokens, b_tokens)


class KeyScorer:
    name = "key"

    def __call__(self, a_tokens, b_tokens, ctx=None, a_index=None, b_index=None):
        if ctx is None or ctx.keys is None:
            raise ConfigurationError("key matcher needs attention keys in the match context")
        a_index, b_index = _indices(a_tokens, b_tokens, a_index, b_index)
        return cosine_matrix(ctx.keys[a_index], ctx.keys[b_index])


class TurboScorer:
    """``raw - alpha * importance[a]`` with ``raw`` from the token or key metric."""

    name = "turbo"

    def __init__(self, metric: str = "token"):
        if metric not in ("token", "key"):
            raise ConfigurationError(f"unknown turbo metric {metric!r}")
        self.metric = metric
        self._raw = TokenScorer() if metric == "token" else KeyScorer()

    def __call__(self, a_tokens, b_tokens, ctx=None, a_index=None, b_index=None):
        if ctx is None or ctx.importance is None:
            raise ConfigurationError("turbo matcher needs token importance in the match context")
        a_index, b_index = _indices(a_tokens, b_tokens, a_index, b_index)
        raw = self._raw(a_tokens, b_tokens, ctx, a_index, b_index)
        return raw - ctx.alpha * ctx.importance[a_index][:, None]


SCORERS = {"token": TokenScorer, "key": KeyScorer, "turbo": TurboScorer}


def get_scorer(name: str):
    try:
        return SCORERS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown matcher {name!r}; choose from {sorted(SCORERS)}") from None


def _indices(a_tokens, b_tokens, a_index, b_index):
    if a_index is None:
        a_index = np.arange(len(a_tokens))
    if b_index is None:
        b_index = np.arange(len(a_tokens), len(a_tokens) + len(b_tokens))
    return np.asarray(a_index), np.asarray(b_index)


# -- matching --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MatchSet:
    """One candidate merge per A token: ``source[i] -> target[i]`` with ``score[i]``.

    Indices are positions within A and B respectively.
    """

    source: np.ndarray
    target: np.ndarray
    score: np.ndarray

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(s)) for a, b, s in zip(self.source, self.target, self.score)]

    def __len__(self) -> int:
        return len(self.source)

    def ranked(self) -> np.ndarray:
        """Entry order by score descending, then A index, then B index."""
        return np.lexsort((self.target, self.source, -self.score))


def best_matches(a_tokens, b_tokens, scorer=None, ctx=None, a_index=None, b_index=None) -> MatchSet:
    """Pick, for every token in A, its highest-scoring partner in B.

    Ties go to the lowest B index.  When A and B are stored contiguously
    (A first) ``a_index``/``b_index`` may be omitted; otherwise they give the
    rows of each partition inside the context's per-token arrays.
    """
    a_tokens = np.asarray(a_tokens, dtype=np.float64)
    b_tokens = np.asarray(b_tokens, dtype=np.float64)
    if b_tokens.ndim != 2 or b_tokens.shape[0] == 0:
        raise ArgumentError("partition B must be nonempty")
    if a_tokens.ndim != 2 or a_tokens.shape[1] != b_tokens.shape[1]:
        raise ShapeError(f"partition shapes differ: {a_tokens.shape} vs {b_tokens.shape}")
    scorer = TokenScorer() if scorer is None else scorer
    if isinstance(scorer, str):
        scorer = get_scorer(scorer)
    scores = np.asarray(scorer(a_tokens, b_tokens, ctx, a_index, b_index), dtype=np.float64)
    target = np.argmax(scores, axis=1) if len(a_tokens) else np.zeros(0, dtype=np.intp)
    best = scores[np.arange(len(a_tokens)), target]
    return MatchSet(np.arange(len(a_tokens)), target, best)

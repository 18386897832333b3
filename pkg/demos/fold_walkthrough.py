"""
Folding a short sequence by hand
================================

Remove 9 of 12 tokens and watch the folds happen.
"""
import numpy as np

from foldkit import TokenSequence
from foldkit.folder import folder_reduce

rng = np.random.default_rng(0)
x = rng.standard_normal((12, 4))

# one pinned token up front (think: a class token); it never merges
seq = TokenSequence(x, np.ones(12, dtype=np.int64), pinned_prefix=1)

# 11 reducible tokens, so one pass could remove at most 5.  Asking for 9
# forces extra folds: 5, then 3 (6 left -> 3), then 1.
out, trace = folder_reduce(seq, 9)
print("tokens left:", out.n)
print("removed per fold:", trace.r_folds)
print("sizes:", out.sizes.tolist(), "sum", out.sizes.sum())

# every output token is the plain mean of the originals it swallowed,
# no matter how many folds it took to get there
for j, members in enumerate(trace.constituents(12)):
    err = np.abs(out.tokens[j] - x[members].mean(axis=0)).max()
    print(f"out[{j}] <- {members}  max err {err:.1e}")

# the trace is plain JSON, handy for saving alongside results
print(trace.to_json()[:200], "...")

"""
Merge or drop?
==============

Three ways of collapsing a matched group, compared at the last block.
"""
import numpy as np

from foldkit.aggregation import aggregate
from foldkit.analysis import aggregation_sweep
from foldkit.encoder import EncoderConfig, init_encoder
from foldkit.synthetic import generate_tokens

# a two-token group: (3,4) stands for 2 originals, (1,0) for one
group = [(np.array([3.0, 4.0]), 2), (np.array([1.0, 0.0]), 1)]
for scheme in ("avg", "weighted", "drop"):
    y, size = aggregate(group, scheme)
    print(f"{scheme:9s} -> {y.round(4)}  size {size}")

enc = init_encoder(EncoderConfig(dim=64, heads=4, blocks=12, seed=7))
seq = generate_tokens(7, 196, 64, 0.3)

print("\nEMD at block 12, 50% reduction")
for weights in ("uniform", "sizes"):
    res = aggregation_sweep(enc, seq, 12, 0.5, weights=weights)
    print(f"  {weights:8s}" + "".join(f"  {k}={v:.4f}" for k, v in res.items()))

# With uniform weights, Drop wins here: its survivors are untouched outputs,
# while an averaged token gets pushed through the nonlinear MLP.  Weighting
# the reduced side by token sizes credits merged tokens for the mass they
# carry and reverses the order.

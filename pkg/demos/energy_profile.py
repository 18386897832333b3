"""
How many tokens does each block really need?
=============================================

Singular-value energy of each block's output on the toy encoder.
"""
import numpy as np

from foldkit.analysis import energy, energy_sweep, min_tokens
from foldkit.encoder import EncoderConfig, init_encoder
from foldkit.linalg import svd
from foldkit.synthetic import generate_tokens

# energy of a tiny spectrum first
curve = energy([2.0, 1.0])
print("E(1) for sigma=[2,1]:", curve(1))

# correlation pushes a synthetic sequence towards rank one
for c in (0.0, 0.3, 0.99):
    x = generate_tokens(1, 100, 64, c).tokens
    print(f"correlation {c}: k(0.9) = {min_tokens(x, 0.9)}, top sigma {svd(x).sigma[:3].round(2)}")

enc = init_encoder(EncoderConfig(dim=64, heads=4, blocks=12, seed=7))
seq = generate_tokens(7, 196, 64, 0.3)
prof = energy_sweep(enc, seq, [0.5, 0.9, 0.99])

print("\nblock  k(0.5) k(0.9) k(0.99)")
for b, row in enumerate(prof.per_block_k, start=1):
    print(f"{b:5d}  " + "  ".join(f"{int(v):5d}" for v in row))

# later blocks get by with fewer tokens
k = prof.per_block_k[:, 1]
print("block 12 vs block 1 at 0.9:", int(k[-1]), "vs", int(k[0]))

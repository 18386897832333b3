"""
Where in the network to reduce
==============================

Spend a 60% token budget in the last block, the last three, or spread
uniformly, and compare output drift.  Same thing from the shell:

    foldkit schedsweep --ratio 0.6 --kinds last1,last3,uniform
"""
from foldkit.analysis import schedule_sweep
from foldkit.encoder import EncoderConfig, init_encoder, make_schedule
from foldkit.synthetic import generate_tokens

print("uniform 118 over 12 blocks:", make_schedule("uniform", 118, 12).per_block_r)

enc = init_encoder(EncoderConfig(dim=64, heads=4, blocks=12, seed=7))
seq = generate_tokens(7, 196, 64, 0.3)

res = schedule_sweep(enc, seq, 0.6, ["last1", "last3", "uniform"])
for kind, row in res.items():
    print(f"{kind:8s} EMD {row['emd']:.4f}   schedule {row['schedule']}")

"""A small pre-norm transformer encoder with a token-reduction hook.

Each block computes::

    h = x + Attn(LN(x))
    h = folder_reduce(h, r_b)        # only when the block's r_b > 0
    x = h + MLP(LN(h))

Weights
-------
All weights come from one PCG64 (PCG-XSL-RR 128/64) stream so any
implementation can reproduce them bit for bit:

* multiplier ``0x2360ED051FC65DA44385DF649FCCF645``;
* seeding: ``inc = (STREAM << 1) | 1`` with ``STREAM = 0xDA3E39CB94B95BDB``,
  ``state = 0; step; state += seed; step`` where
  ``step: state = state * multiplier + inc (mod 2**128)``;
* each draw steps first, then outputs ``rotr64(hi ^ lo, state >> 122)``;
* a uniform is ``(raw >> 11) * 2**-53`` and a weight is
  ``(2 * uniform - 1) / sqrt(dim)``.

Per block the draw order is ``W_q, W_k, W_v, W_o`` (dim x dim each), ``W_1``
(dim x hidden), ``W_2`` (hidden x dim), all row-major.  When a class token is
used, ``dim`` further uniforms mapped to ``[-1, 1)`` follow the last block.
Biases are zero and LayerNorm has unit gain, zero shift and ``eps = 1e-5``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erf

from .aggregation import AggregationScheme
from .errors import ArgumentError, CapacityError
from .folder import FoldTrace, folder_reduce
from .linalg import softmax_rows
from .matching import DEFAULT_ALPHA, MatchContext, importance_from_attention
from .tokenseq import TokenSequence

PCG_MULT = 0x2360ED051FC65DA44385DF649FCCF645
PCG_STREAM = 0xDA3E39CB94B95BDB
_MASK128 = (1 << 128) - 1
LN_EPS = 1e-5


def pcg64_state(seed: int, stream: int = PCG_STREAM) -> tuple[int, int]:
    inc = ((stream << 1) | 1) & _MASK128
    state = inc  # one step from state 0
    state = (state + (seed & ((1 << 64) - 1))) & _MASK128
    state = (state * PCG_MULT + inc) & _MASK128
    return state, inc


def pcg64_bitgen(seed: int) -> np.random.PCG64:
    """numpy's PCG64 positioned at the documented seeding of ``seed``."""
    state, inc = pcg64_state(seed)
    bitgen = np.random.PCG64()
    bitgen.state = {
        "bit_generator": "PCG64",
        "state": {"state": state, "inc": inc},
        "has_uint32": 0,
        "uinteger": 0,
    }
    return bitgen


def pcg64_uniforms(bitgen: np.random.PCG64, count: int) -> np.ndarray:
    raw = bitgen.random_raw(count)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 64
    heads: int = 4
    blocks: int = 12
    mlp_ratio: float = 4.0
    seed: int = 7
    use_class_token: bool = False

    def __post_init__(self):
        if self.dim < 1 or self.heads < 1 or self.dim % self.heads:
            raise ArgumentError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.blocks < 1:
            raise ArgumentError("need at least one block")
        if not self.mlp_ratio > 0:
            raise ArgumentError("mlp_ratio must be positive")
        if not 0 <= self.seed < 2**64:
            raise ArgumentError("seed must be an unsigned 64-bit integer")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def hidden(self) -> int:
        return max(1, int(round(self.dim * self.mlp_ratio)))


@dataclass(frozen=True, eq=False)
class BlockWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True, eq=False)
class Encoder:
    config: EncoderConfig
    blocks: tuple
    class_token: Optional[np.ndarray] = None

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for blk in self.blocks:
            for w in (blk.wq, blk.wk, blk.wv, blk.wo, blk.w1, blk.w2):
                h.update(w.tobytes())
        if self.class_token is not None:
            h.update(self.class_token.tobytes())
        return h.hexdigest()


def init_encoder(cfg: EncoderConfig) -> Encoder:
    bitgen = pcg64_bitgen(cfg.seed)
    scale = 1.0 / math.sqrt(cfg.dim)

    def draw(rows, cols):
        u = pcg64_uniforms(bitgen, rows * cols)
        w = ((2.0 * u - 1.0) * scale).reshape(rows, cols)
        w.flags.writeable = False
        return w

    d, hdn = cfg.dim, cfg.hidden
    blocks = tuple(
        BlockWeights(draw(d, d), draw(d, d), draw(d, d), draw(d, d), draw(d, hdn), draw(hdn, d))
        for _ in range(cfg.blocks)
    )
    cls = None
    if cfg.use_class_token:
        cls = 2.0 * pcg64_uniforms(bitgen, d) - 1.0
        cls.flags.writeable = False
    return Encoder(cfg, blocks, cls)


@dataclass(frozen=True)
class ReductionSchedule:
    per_block_r: tuple

    def __post_init__(self):
        r = tuple(int(v) for v in self.per_block_r)
        if any(v < 0 for v in r):
            raise ArgumentError("schedule entries must be nonnegative")
        object.__setattr__(self, "per_block_r", r)

    @classmethod
    def zeros(cls, blocks: int) -> "ReductionSchedule":
        return cls((0,) * blocks)

    @property
    def total(self) -> int:
        return sum(self.per_block_r)

    def __len__(self) -> int:
        return len(self.per_block_r)

    def check(self, n_reducible: int, blocks: Optional[int] = None) -> None:
        """Raise :class:`CapacityError` unless one reducible token survives every block."""
        if blocks is not None and len(self.per_block_r) != blocks:
            raise ArgumentError(f"schedule has {len(self.per_block_r)} entries for {blocks} blocks")
        remaining = n_reducible
        for b, r in enumerate(self.per_block_r, start=1):
            if r and r > remaining - 1:
                raise CapacityError(
                    f"block {b}: cannot remove {r} tokens with {remaining} reducible left"
                )
            remaining -= r


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base] * (parts - extra) + [base + 1] * extra


def make_schedule(
    kind: str, total_r: int, n_blocks: int, last_n: int = 1, n_tokens: Optional[int] = None
) -> ReductionSchedule:
    """Spread ``total_r`` over blocks; remainders go to later blocks.

    ``kind`` is ``last_1``, ``last_n`` (uses ``last_n``) or ``uniform``.
    ``n_tokens``, when given, is the reducible length the schedule must fit.
    """
    kind = kind.replace("-", "_").lower()
    if total_r < 0 or n_blocks < 1:
        raise ArgumentError("total_r must be >= 0 and n_blocks >= 1")
    if kind in ("last_1", "last1"):
        last_n = 1
    elif kind in ("uniform",):
        last_n = n_blocks
    elif kind not in ("last_n", "lastn"):
        raise ArgumentError(f"unknown schedule kind {kind!r}")
    if not 1 <= last_n <= n_blocks:
        raise ArgumentError(f"last_n={last_n} outside [1, {n_blocks}]")
    sched = ReductionSchedule(tuple([0] * (n_blocks - last_n) + _split(total_r, last_n)))
    if n_tokens is not None:
        sched.check(n_tokens)
    return sched


def parse_schedule(text: str, n_blocks: int) -> ReductionSchedule:
    """Parse ``last1:R``, ``lastN:k:R``, ``uniform:R`` or ``explicit:r1,r2,...``."""
    head, _, rest = text.strip().partition(":")
    head = head.lower()
    try:
        if head in ("last1", "last_1"):
            return make_schedule("last_1", int(rest), n_blocks)
        if head in ("lastn", "last_n"):
            k, _, r = rest.partition(":")
            return make_schedule("last_n", int(r), n_blocks, last_n=int(k))
        if head == "uniform":
            return make_schedule("uniform", int(rest), n_blocks)
        if head == "explicit":
            values = [int(v) for v in rest.split(",") if v.strip()]
            if len(values) != n_blocks:
                raise ArgumentError(f"explicit schedule has {len(values)} entries for {n_blocks} blocks")
            return ReductionSchedule(tuple(values))
    except ValueError as exc:
        if isinstance(exc, ArgumentError):
            raise
        raise ArgumentError(f"malformed schedule {text!r}: {exc}") from None
    raise ArgumentError(f"malformed schedule {text!r}")


@dataclass(frozen=True, eq=False)
class BlockActivations:
    tokens_out: np.ndarray
    attention: np.ndarray  # (heads, n, n), rows sum to 1
    keys_head_mean: np.ndarray
    sizes: np.ndarray
    trace: Optional[FoldTrace] = field(default=None, repr=False)


def _layer_norm(x):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS)


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _attention(blk: BlockWeights, cfg: EncoderConfig, x: np.ndarray):
    n = x.shape[0]
    xn = _layer_norm(x)
    q = (xn @ blk.wq).reshape(n, cfg.heads, cfg.head_dim).transpose(1, 0, 2)
    k = (xn @ blk.wk).reshape(n, cfg.heads, cfg.head_dim).transpose(1, 0, 2)
    v = (xn @ blk.wv).reshape(n, cfg.heads, cfg.head_dim).transpose(1, 0, 2)
    attn = softmax_rows(q @ k.transpose(0, 2, 1) / math.sqrt(cfg.head_dim))
    mixed = (attn @ v).transpose(1, 0, 2).reshape(n, cfg.dim)
    return x + mixed @ blk.wo, attn, k.mean(axis=0)


def _mlp(blk: BlockWeights, h: np.ndarray) -> np.ndarray:
    return h + _gelu(_layer_norm(h) @ blk.w1) @ blk.w2


def prepare_input(enc: Encoder, seq: TokenSequence) -> TokenSequence:
    """Prepend the encoder's class token (pinned) when the config asks for one."""
    if seq.dim != enc.config.dim:
        raise ArgumentError(f"input dim {seq.dim} != encoder dim {enc.config.dim}")
    if enc.class_token is None:
        return seq
    tokens = np.vstack([enc.class_token[None, :], seq.tokens])
    sizes = np.concatenate([[1], seq.sizes])
    return TokenSequence(tokens, sizes, seq.pinned_prefix + 1)


def forward(
    enc: Encoder,
    seq: TokenSequence,
    schedule: Optional[ReductionSchedule] = None,
    scorer=None,
    scheme=AggregationScheme.AVERAGE,
    alpha: float = DEFAULT_ALPHA,
    record: bool = True,
):
    """Run the encoder, reducing ``schedule.per_block_r[b]`` tokens after block b's attention.

    Returns ``(output_sequence, activations)``; ``activations`` is a list with
    one :class:`BlockActivations` per block (empty when ``record`` is false).
    """
    cfg = enc.config
    seq = prepare_input(enc, seq)
    schedule = ReductionSchedule.zeros(cfg.blocks) if schedule is None else schedule
    schedule.check(seq.reducible, cfg.blocks)

    x, sizes, pinned = np.array(seq.tokens), seq.sizes, seq.pinned_prefix
    acts = []
    for blk, r in zip(enc.blocks, schedule.per_block_r):
        h, attn, keys = _attention(blk, cfg, x)
        trace = None
        if r > 0:
            ctx = MatchContext(keys, importance_from_attention(attn, pinned), alpha)
            reduced, trace = folder_reduce(TokenSequence(h, sizes, pinned), r, scorer, scheme, ctx)
            h, sizes = np.array(reduced.tokens), reduced.sizes
        x = _mlp(blk, h)
        if record:
            acts.append(BlockActivations(x, attn, keys, sizes, trace))
    return TokenSequence(x, sizes, pinned), acts


def forward_unhooked(enc: Encoder, seq: TokenSequence) -> np.ndarray:
    """Plain forward pass with no reduction hook at all; returns the output tokens."""
    x = np.array(prepare_input(enc, seq).tokens)
    for blk in enc.blocks:
        h, _, _ = _attention(blk, enc.config, x)
        x = _mlp(blk, h)
    return x

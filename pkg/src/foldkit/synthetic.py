"""Synthetic token sequences standing in for backbone activations."""
from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .tokenseq import TokenSequence, new_sequence


def generate_tokens(seed: int, n: int, d: int, correlation: float = 0.0) -> TokenSequence:
    """``n`` tokens ``(1 - c) * z_i + c * g`` with ``z_i, g ~ N(0, I_d)`` and shared ``g``.

    ``c = 0`` gives i.i.d. standard normal rows.  The expected pairwise cosine
    is about ``c**2 / (c**2 + (1 - c)**2)``, so rows collapse toward one
    direction as ``c -> 1``.
    """
    if n < 1 or d < 1:
        raise ArgumentError("n and d must be positive")
    if not 0.0 <= correlation < 1.0:
        raise ArgumentError(f"correlation must lie in [0, 1), got {correlation}")
    rng = np.random.Generator(np.random.PCG64(seed))
    z = rng.standard_normal((n, d))
    shared = rng.standard_normal(d)
    return new_sequence((1.0 - correlation) * z + correlation * shared[None, :])

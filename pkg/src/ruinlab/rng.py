"""Reproducible random streams for block-parallel path simulation.

Paths are grouped into fixed-size blocks by path index: block ``b`` holds
paths ``b * block_size`` through ``(b + 1) * block_size - 1``.  Every block
owns one independent stream per driver, keyed by the triple
``(master_seed, block_index, stream_tag)`` through :class:`numpy.random.SeedSequence`.
A block's draws therefore never depend on which worker simulates it or on how
many workers exist, and distinct drivers (claims, the Gaussian part of the
claims process, each asset) never share random numbers.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DEFAULT_BLOCK_SIZE",
    "STREAM_CLAIMS",
    "STREAM_CLAIMS_DIFFUSION",
    "asset_stream_tags",
    "block_layout",
    "stream",
]

DEFAULT_BLOCK_SIZE = 256

STREAM_CLAIMS = 0
STREAM_CLAIMS_DIFFUSION = 1
_ASSET_BASE = 16
_ASSET_STRIDE = 4


def asset_stream_tags(k: int) -> tuple[int, int, int]:
    """Stream tags ``(jumps, diffusion, variance)`` for the asset at position ``k``."""
    base = _ASSET_BASE + _ASSET_STRIDE * k
    return base, base + 1, base + 2


def stream(seed: int, block: int, tag: int) -> np.random.Generator:
    """Return the generator for one (block, driver) pair of a master seed."""
    if seed < 0 or block < 0 or tag < 0:
        raise ValueError("seed, block and tag must be non-negative integers")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block), int(tag)))
    return np.random.Generator(np.random.PCG64(ss))


def block_layout(n_paths: int, block_size: int = DEFAULT_BLOCK_SIZE) -> list[tuple[int, int]]:
    """Split ``n_paths`` into ``(block_index, n_in_block)`` pairs.

    Only the final block may be partial.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    full, rest = divmod(n_paths, block_size)
    layout = [(b, block_size) for b in range(full)]
    if rest:
        layout.append((full, rest))
    return layout

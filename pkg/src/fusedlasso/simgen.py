"""Seeded synthetic benchmark instances over chain and grid penalty graphs.

Each observation's predictor row starts at zero, gets a few random constant
intervals (1D) or boxes (2D) written onto it, later intervals overwriting
earlier ones where they overlap, and then unit Gaussian noise added everywhere.
The true coefficient vector is a centered block of ones and the response is
its linear signal plus Gaussian noise.

Randomness comes from a counter-based generator (Philox) with one dedicated
stream per observation plus one for the response noise, so instances are
reproducible bit-for-bit across platforms and rows are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DataError, PenaltyGraph

_NOISE_STREAM = 2**62  # stream id for the response noise; row streams are 0..n-1


@dataclass(frozen=True)
class SimConfig:
    """Size, noise level and seed of one synthetic instance.

    For 2D instances ``p`` is the grid side length, so there are ``p**2``
    coefficients. ``null_signal`` forces the true coefficient vector to zero.
    """

    n: int
    p: int
    sigma: float = 10.0
    seed: int = 0
    null_signal: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise DataError("n must be at least 1")
        if self.p < 2:
            raise DataError("p must be at least 2")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise DataError("sigma must be finite and >= 0")
        if self.seed < 0:
            raise DataError("seed must be a non-negative integer")


@dataclass(frozen=True)
class SimInstance:
    X: np.ndarray
    beta_true: np.ndarray
    y: np.ndarray
    graph: PenaltyGraph
    metadata: dict

    def __post_init__(self):
        for name in ("X", "beta_true", "y"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _stream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream_id], dtype=np.uint64)))


def _signal_block_length(p: int) -> int:
    # the benchmark convention is a length-100 block; smaller instances scale
    # it to a tenth of the dimension so the signal fraction stays comparable
    return min(100, math.ceil(p / 10))


def gen_1d(config: SimConfig) -> SimInstance:
    """Chain-graph instance with random constant intervals in the design.

    Per observation ``i``: the number of intervals is Poisson(sqrt(p)/2), each
    with Poisson(sqrt(p)) length, uniform integer start in ``[2 - length, p]``
    (1-based, so intervals may be left-truncated) and value uniform on
    ``{-3, ..., 3}``; the interval with the highest index overwrites earlier
    ones, positions are clipped to ``[1, p]``, and unit Gaussian noise is added
    to the whole row afterwards.
    """
    n, p = config.n, config.p
    X = np.empty((n, p))
    rate_count = math.sqrt(p) / 2.0
    rate_len = math.sqrt(p)
    for i in range(n):
        rng = _stream(config.seed, i)
        base = np.zeros(p)
        for _ in range(rng.poisson(rate_count)):
            length = int(rng.poisson(rate_len))
            start = int(rng.integers(2 - length, p + 1))
            value = float(rng.integers(-3, 4))
            lo = max(start, 1)
            hi = min(start + length - 1, p)
            if hi >= lo:
                base[lo - 1 : hi] = value
        X[i] = base + rng.standard_normal(p)
    beta_true = np.zeros(p)
    block_len = 0
    block_start = 0
    if not config.null_signal:
        block_len = _signal_block_length(p)
        block_start = (p - block_len) // 2
        beta_true[block_start : block_start + block_len] = 1.0
    noise = _stream(config.seed, _NOISE_STREAM).standard_normal(n) * config.sigma
    y = X @ beta_true + noise
    return SimInstance(
        X=X,
        beta_true=beta_true,
        y=y,
        graph=PenaltyGraph.chain(p),
        metadata={
            "kind": "1d",
            "n": n,
            "p": p,
            "sigma": config.sigma,
            "seed": config.seed,
            "block_start": block_start,
            "block_len": block_len,
            "rng": "philox key=(seed, stream); streams 0..n-1 per row, 2^62 for noise",
        },
    )


def gen_2d(config: SimConfig) -> SimInstance:
    """Grid-graph instance with random constant boxes in the design.

    ``config.p`` is the side length: coefficients live on a ``p x p``
    4-neighbor grid, flattened row-major. Per observation the number of boxes
    is Poisson(sqrt(p)); each box has Poisson(sqrt(p)) side lengths, uniform
    integer starts in ``[2 - length, p]`` per axis and a value uniform on
    ``{-3, ..., 3}``; later boxes overwrite earlier ones and unit Gaussian
    noise is added everywhere. The true coefficients are 1 on a centered
    square (10 x 10 for ``p >= 20``, scaled down for smaller grids) and 0
    elsewhere.
    """
    n, side = config.n, config.p
    p2 = side * side
    X = np.empty((n, p2))
    rate = math.sqrt(side)
    for i in range(n):
        rng = _stream(config.seed, i)
        base = np.zeros((side, side))
        for _ in range(rng.poisson(rate)):
            l1 = int(rng.poisson(rate))
            l2 = int(rng.poisson(rate))
            s1 = int(rng.integers(2 - l1, side + 1))
            s2 = int(rng.integers(2 - l2, side + 1))
            value = float(rng.integers(-3, 4))
            lo1, hi1 = max(s1, 1), min(s1 + l1 - 1, side)
            lo2, hi2 = max(s2, 1), min(s2 + l2 - 1, side)
            if hi1 >= lo1 and hi2 >= lo2:
                base[lo1 - 1 : hi1, lo2 - 1 : hi2] = value
        X[i] = (base + rng.standard_normal((side, side))).ravel()
    beta_sq = np.zeros((side, side))
    block_side = 0
    block_lo = 0
    if not config.null_signal:
        if side >= 20:
            block_side = 10
            block_lo = side // 2 - 5  # 0-based; covers side/2 - 4 .. side/2 + 5, 1-based
        else:
            block_side = min(10, math.ceil(side / 10))
            block_lo = (side - block_side) // 2
        beta_sq[block_lo : block_lo + block_side, block_lo : block_lo + block_side] = 1.0
    beta_true = beta_sq.ravel()
    noise = _stream(config.seed, _NOISE_STREAM).standard_normal(n) * config.sigma
    y = X @ beta_true + noise
    return SimInstance(
        X=X,
        beta_true=beta_true,
        y=y,
        graph=PenaltyGraph.grid2d(side),
        metadata={
            "kind": "2d",
            "n": n,
            "p": side,
            "coefficients": p2,
            "sigma": config.sigma,
            "seed": config.seed,
            "block_side": block_side,
            "block_lo": block_lo,
            "rng": "philox key=(seed, stream); streams 0..n-1 per row, 2^62 for noise",
        },
    )

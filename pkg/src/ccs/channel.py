"""AWGN multiple-access channel and energy bookkeeping.

The noise variance is normally 1 and the operating point is set through the
per-symbol energy ``Es``; then ``Eb/N0 = N Es / (2 B)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gf2 import as_generator


@dataclass(frozen=True)
class ChannelConfig:
    N: int
    n: int
    B: int
    Es: float
    sigma2: float = 1.0

    def __post_init__(self):
        if self.N <= 0 or self.n <= 0 or self.B <= 0:
            raise ValueError("N, n and B must be positive")
        if self.N % self.n:
            raise ValueError(f"N={self.N} is not divisible by n={self.n}")
        if self.Es < 0:
            raise ValueError("Es must be non-negative")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def rows_per_slot(self) -> int:
        return self.N // self.n

    @property
    def ebn0_db(self) -> float:
        return ebn0_db(self.Es, self.N, self.B, self.sigma2)


def awgn_observe(x, sigma2: float, rng) -> np.ndarray:
    """``x`` plus i.i.d. N(0, sigma2) noise."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    x = np.asarray(x, dtype=float)
    z = as_generator(rng).standard_normal(x.shape)
    return x + math.sqrt(sigma2) * z


def _check_positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive, got {v}")


def ebn0_db(Es: float, N: int, B: int, sigma2: float = 1.0) -> float:
    """Energy per bit over noise density, in dB (N0 = 2 sigma2)."""
    _check_positive(Es=Es, N=N, B=B, sigma2=sigma2)
    return 10.0 * math.log10(N * Es / (2.0 * B * sigma2))


def es_for_ebn0(ebn0: float, N: int, B: int, sigma2: float = 1.0) -> float:
    """Inverse of ``ebn0_db``."""
    _check_positive(N=N, B=B, sigma2=sigma2)
    return 10.0 ** (ebn0 / 10.0) * 2.0 * B * sigma2 / N


def user_energy(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ x)


def check_power(x, N: int, Es: float, rtol: float = 1e-9) -> None:
    """Raise if a user's transmitted signal violates ``||x||^2 <= N Es``."""
    e = user_energy(x)
    if e > N * Es * (1 + rtol):
        raise ValueError(f"transmitted energy {e:.6g} exceeds N*Es = {N * Es:.6g}")

"""Approximate tree-decoder analysis under the no-collision assumption, plus finite-Ka bounds.

Every erroneous partial path is assumed to face fresh fair parity bits, so a
stage with ``l`` parity bits passes it with probability ``2**-l``.  All
formulas below are evaluated in log space so that parity totals of thousands
of bits do not underflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class AllocationSpec:
    """List size ``K`` and parity lengths ``l_1..l_{n-1}`` (the root carries none)."""

    K: int
    l: tuple[float, ...]
    m: tuple[int, ...] | None = None
    J: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "l", tuple(self.l))
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if any(x < 0 for x in self.l):
            raise ValueError("parity lengths must be non-negative")
        if self.J is not None and any(x > self.J for x in self.l):
            raise ValueError("parity lengths cannot exceed J")

    @property
    def n(self) -> int:
        return len(self.l) + 1


def _log2_terms(K: int, l: Sequence[float]) -> list[list[float]]:
    """terms[j-1][q-1] = log2 of K^{j-q}(K-1) prod_{q<=ell<=j} 2^{-l_ell}."""
    l = [float(x) for x in l]
    lk, lk1 = math.log2(K), math.log2(K - 1)
    out = []
    for j in range(1, len(l) + 1):
        row, tail = [], 0.0
        for q in range(j, 0, -1):
            tail += l[q - 1]
            row.append((j - q) * lk + lk1 - tail)
        out.append(row[::-1])
    return out


def _sum_pow2(logs: Sequence[float]) -> float:
    if not logs:
        return 0.0
    top = max(logs)
    return 2.0**top * math.fsum(2.0 ** (x - top) for x in logs)


def expected_surviving_approx(spec: AllocationSpec) -> list[float]:
    """E[L~_j] for j = 1..n-1 from the closed-form sum."""
    if spec.K == 1:
        return [0.0] * len(spec.l)
    return [_sum_pow2(row) for row in _log2_terms(spec.K, spec.l)]


def expected_surviving_recursive(spec: AllocationSpec) -> list[float]:
    """Same quantity through the one-step recursion; kept as an independent cross-check."""
    out, prev = [], 0.0
    for j, lj in enumerate(spec.l):
        p = 2.0 ** -float(lj)
        prev = (spec.K - 1) * p if j == 0 else p * spec.K * prev + p * (spec.K - 1)
        out.append(prev)
    return out


def expected_complexity_nodes(spec: AllocationSpec) -> float:
    """E[C~_tree]: expected number of nodes whose parity must be checked."""
    e = expected_surviving_approx(spec)
    n = spec.n
    return (n - 1) * spec.K + spec.K * math.fsum(e[: n - 2])


def expected_complexity_checks(spec: AllocationSpec) -> float:
    """E[C_tree]: expected number of individual parity-bit checks."""
    e = expected_surviving_approx(spec)
    l = [float(x) for x in spec.l]
    n = spec.n
    extra = math.fsum(l[j] * e[j - 1] for j in range(1, n - 1))
    return spec.K * (math.fsum(l) + extra)


def ptree_bound(spec: AllocationSpec) -> float:
    """Markov bound on the tree-decoding failure probability: E[L~_{n-1}]."""
    e = expected_surviving_approx(spec)
    return e[-1] if e else 0.0


def _check_prob(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0 or math.isnan(x):
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


def pe_compose(p_tree: float, p_cs: float, n: int) -> float:
    """Per-user error when each of ``n`` fragments is lost w.p. ``p_cs`` and stitching fails w.p. ``p_tree``."""
    _check_prob("p_tree", p_tree)
    _check_prob("p_cs", p_cs)
    if n < 0:
        raise ValueError("n must be non-negative")
    return 1.0 - (1.0 - p_tree) * (1.0 - p_cs) ** n


def pe_union_bound(p_tree: float, p_cs: float, n: int) -> float:
    _check_prob("p_tree", p_tree)
    _check_prob("p_cs", p_cs)
    return n * p_cs + p_tree


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the finite-Ka bounds.  Unused fields may stay at their defaults."""

    Ka: int
    n: int = 0
    l: float = 0.0
    P: float | None = None
    delta: float = 0.0
    c1: float = 0.0
    extra: dict = field(default_factory=dict)


def asymptotic_bound(mode: str, params: BoundParams) -> float:
    """Finite-Ka upper bound on E[L_{n-1}].

    ``uniform``: every stage has ``l`` parity bits, bound ``Ka / (2**l - Ka)``.
    ``trailing``: parity concentrated at the end with total ``P`` bits (or
    ``P = (n-1+delta) log2 Ka`` when ``P`` is omitted) and ``J = c1 log2 Ka``,
    bound ``2**((n-1) log2 Ka - P) + 1 / (Ka**(c1-1) - 1)``.
    """
    Ka = params.Ka
    if Ka < 1:
        raise ValueError("Ka must be positive")
    if mode == "uniform":
        gap = 2.0 ** params.l - Ka
        if gap <= 0:
            raise ValueError(f"uniform bound needs 2^l > Ka (l={params.l}, Ka={Ka})")
        return Ka / gap
    if mode == "trailing":
        lka = math.log2(Ka)
        P = params.P if params.P is not None else (params.n - 1 + params.delta) * lka
        denom = Ka ** (params.c1 - 1) - 1
        if denom <= 0:
            raise ValueError("trailing bound needs Ka^(c1-1) > 1")
        return 2.0 ** ((params.n - 1) * lka - P) + 1.0 / denom
    raise ValueError(f"unknown mode {mode!r}")


def random_spec(rng: np.random.Generator, max_n: int = 12, max_J: int = 20, max_K: int = 500) -> AllocationSpec:
    """A random valid spec, used by the equivalence checks."""
    J = int(rng.integers(1, max_J + 1))
    n = int(rng.integers(2, max_n + 1))
    K = int(rng.integers(1, max_K + 1))
    return AllocationSpec(K, tuple(int(x) for x in rng.integers(0, J + 1, n - 1)), J=J)

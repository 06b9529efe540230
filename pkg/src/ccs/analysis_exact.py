"""Exact expected number of erroneous surviving paths in the tree decoder.

Candidate index paths rooted at the true message are grouped by their
j-pattern: ``s[t]`` names the message chosen at stage ``t`` by the position
where that message first appears (plus one), so ``(1, 1, 3)`` means the path
follows the root message for two stages and then jumps to a fresh message.
For every pattern we need the distribution of how many parity bits actually
discriminate, which depends only on collisions between information fragments.

Two routes are provided:

* ``event_probability`` / ``pattern_pgf`` evaluate the per-subset event
  probabilities directly, one pattern at a time.  Cost is exponential in the
  path length; intended for small cases and cross-checks.
* ``surviving_profile_exact`` walks the pattern tree depth first.  Parity
  blocks that share a level (same message) become non-discriminating as a
  prefix, so the generating function at ``x = 1/2`` factors over levels and can
  be updated in O(1) when a pattern is extended.  All stages come out of a
  single walk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterator, Sequence


@dataclass(frozen=True)
class PatternSeq:
    entries: tuple[int, ...]

    def __post_init__(self):
        e = tuple(int(x) for x in self.entries)
        object.__setattr__(self, "entries", e)
        if not e or e[0] != 1:
            raise ValueError("a pattern starts with 1")
        for pos, x in enumerate(e):
            if x != pos + 1 and x not in e[:pos]:
                raise ValueError(f"entry {pos} must be {pos + 1} or repeat an earlier entry")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def d(self) -> int:
        """Number of distinct messages touched by the path."""
        return len(set(self.entries))


def enumerate_patterns(j: int) -> Iterator[PatternSeq]:
    """All j-patterns, grown one entry at a time (repeat a level, or open a new one)."""
    if j < 1:
        raise ValueError("j must be at least 1")

    def grow(prefix: tuple[int, ...], levels: tuple[int, ...]):
        if len(prefix) == j:
            yield PatternSeq(prefix)
            return
        for a in levels:
            yield from grow(prefix + (a,), levels)
        new = len(prefix) + 1
        yield from grow(prefix + (new,), levels + (new,))

    yield from grow((1,), (1,))


@lru_cache(maxsize=None)
def stirling2(n: int, k: int) -> int:
    """Stirling numbers of the second kind, S(n, k) = k S(n-1, k) + S(n-1, k-1)."""
    if n < 0 or k < 0:
        raise ValueError("arguments must be non-negative")
    if n == k:
        return 1
    if n == 0 or k == 0:
        return 0
    return k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)


def bell(n: int) -> int:
    return sum(stirling2(n, k) for k in range(n + 1))


def class_size(s: PatternSeq, K: int) -> int:
    """Number of index sequences in the class of ``s``: (K-1)(K-2)...(K-d+1)."""
    d = s.d
    if K < d:
        raise ValueError(f"pattern uses {d} messages but K={K}")
    return math.prod(K - i for i in range(1, d))


def _g(t: float) -> float:
    return math.ldexp(1.0, -int(t)) if float(t).is_integer() else 2.0 ** -t


def _cross_bits(s: PatternSeq, m: Sequence[int], q: int) -> int:
    """Information bits before stage q that sit on a different level than s[q]."""
    return sum(m[t] for t in range(q) if s[t] != s[q])


def event_probability(s: PatternSeq, S: Sequence[int] | set, m: Sequence[int]) -> float:
    """Probability that exactly the parity blocks in ``S`` discriminate for pattern ``s``.

    ``S`` is a subset of ``1..len(s)-1``.  Blocks outside ``S`` contribute the
    conditional non-discrimination factor given the latest earlier same-level
    block outside ``S``.  Blocks inside ``S`` contribute zero when a later
    same-level block is outside ``S`` (that would force this one to be
    non-discriminating), one when an earlier same-level block is already in
    ``S``, and the complement of the conditional factor otherwise.
    """
    j = len(s)
    S = set(int(q) for q in S)
    if any(not 1 <= q <= j - 1 for q in S):
        raise ValueError("S must be a subset of 1..j-1")
    if len(m) < j:
        raise ValueError("m is shorter than the pattern")
    prob = 1.0
    for q in range(1, j):
        same = [k for k in range(1, j) if k != q and s[k] == s[q]]
        below_out = [k for k in same if k < q and k not in S]
        p = max(below_out) if below_out else None
        expo = _cross_bits(s, m, q) - (_cross_bits(s, m, p) if p is not None else 0)
        cond = _g(expo)
        if q not in S:
            prob *= cond
            continue
        above_out = any(k > q and k not in S for k in same)
        below_in = any(k < q and k in S for k in same)
        prob *= 1.0 - (1.0 if above_out else (0.0 if below_in else cond))
        if prob == 0.0:
            return 0.0
    return prob


def pattern_pgf(s: PatternSeq, m: Sequence[int], l: Sequence[int]) -> dict[int, float]:
    """Distribution of the number of discriminating parity bits along pattern ``s``.

    Returns ``{t: Pr(T = t)}``; evaluating ``sum(p * x**t)`` gives the
    generating function.  Subsets of zero probability are dropped.
    """
    j = len(s)
    pgf: dict[int, float] = {}
    stages = range(1, j)
    for r in range(j):
        for S in combinations(stages, r):
            pr = event_probability(s, S, m)
            if pr > 0.0:
                t = sum(int(l[q]) for q in S)
                pgf[t] = pgf.get(t, 0.0) + pr
    return pgf


def pgf_eval(pgf: dict[int, float], x: float) -> float:
    return math.fsum(p * x**t for t, p in pgf.items())


def expected_surviving_by_patterns(K: int, m: Sequence[int], l: Sequence[int], j: int) -> float:
    """E[L_{j-1}] by explicit enumeration of patterns and subsets (small j only)."""
    total = []
    for s in enumerate_patterns(j):
        if s.d > K:
            continue
        total.append(class_size(s, K) * pgf_eval(pattern_pgf(s, m, l), 0.5))
    return math.fsum(total) - 1.0


def _check_profile(K: int, m: Sequence[int], l: Sequence[int]) -> None:
    if K < 1:
        raise ValueError("K must be at least 1")
    if len(m) != len(l):
        raise ValueError("m and l must have the same length")
    if any(x < 0 for x in m) or any(x < 0 for x in l):
        raise ValueError("bit counts must be non-negative")


def surviving_profile_exact(K: int, m: Sequence[int], l: Sequence[int], depth: int | None = None) -> list[float]:
    """E[L_t] for t = 1..depth-1 (default depth n) from one depth-first walk over patterns.

    Per level the running value is the generating function at 1/2 of the
    blocks seen so far on that level.  Appending stage ``q`` to a level whose
    blocks so far carry ``own`` information bits uses the non-discrimination
    probability ``P = 2**-(sum(m[:q]) - own)``; the update is
    ``f <- 2**-l[q] (f - P) + P``.  Patterns needing more than ``K``
    distinct messages have an empty class and are pruned.
    """
    _check_profile(K, m, l)
    n = len(m)
    depth = n if depth is None else depth
    if not 1 <= depth <= n:
        raise ValueError("depth out of range")
    pref = [0]
    for x in m:
        pref.append(pref[-1] + int(x))
    half = [math.ldexp(1.0, -int(x)) for x in l]
    sums: list[list[float]] = [[] for _ in range(depth + 1)]

    def walk(q: int, own: list[int], f: list[float], d: int, weight: int, prod: float) -> None:
        sums[q].append(weight * prod)
        if q == depth:
            return
        for a in range(len(own)):
            P = math.ldexp(1.0, own[a] - pref[q])
            nf = half[q] * (f[a] - P) + P
            old = f[a]
            f[a], own[a] = nf, own[a] + int(m[q])
            walk(q + 1, own, f, d, weight, _prod(f))
            f[a], own[a] = old, own[a] - int(m[q])
        if d < K:
            P = math.ldexp(1.0, -pref[q])
            nf = half[q] * (1.0 - P) + P
            own.append(int(m[q]))
            f.append(nf)
            walk(q + 1, own, f, d + 1, weight * (K - d), _prod(f))
            own.pop()
            f.pop()

    walk(1, [int(m[0])], [1.0], 1, 1, 1.0)
    return [math.fsum(sums[q]) - 1.0 for q in range(2, depth + 1)]


def _prod(values: Sequence[float]) -> float:
    out = 1.0
    for v in values:
        out *= v
    return out


def expected_surviving_exact(K: int, m: Sequence[int], l: Sequence[int], j: int) -> float:
    """E[L_{j-1}]: expected erroneous paths alive after stage ``j-1``, for ``j`` in 1..n."""
    _check_profile(K, m, l)
    if not 1 <= j <= len(m):
        raise ValueError(f"j must lie in 1..{len(m)}")
    if j == 1:
        return 0.0
    return surviving_profile_exact(K, m, l, depth=j)[-1]

"""Tree encoder and stage-wise tree decoder.

A message of ``B`` bits is split into ``n`` fragments.  Fragment ``j`` carries
``m[j]`` information bits followed by ``l[j]`` parity bits, each parity block
being a random linear function of all earlier information fragments.  Coded
fragments are handled as ``J``-bit integers (information bits in the high part),
which is also the column index used by the sensing matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .gf2 import BitMatrix, BitVector, as_generator, sample_rademacher


class PathExplosionError(RuntimeError):
    """Raised when the number of live partial paths exceeds the decoder's budget."""


@dataclass(frozen=True)
class ParityProfile:
    J: int
    m: tuple[int, ...]
    l: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(x) for x in self.m))
        object.__setattr__(self, "l", tuple(int(x) for x in self.l))
        if self.J < 1:
            raise ValueError("J must be positive")
        if len(self.m) != len(self.l) or not self.m:
            raise ValueError("m and l must be non-empty and of equal length")
        if self.l[0] != 0 or self.m[0] != self.J:
            raise ValueError("the root fragment must carry J information bits and no parity")
        for j, (mj, lj) in enumerate(zip(self.m, self.l)):
            if not 0 <= lj <= self.J or mj + lj != self.J:
                raise ValueError(f"fragment {j}: need m+l=J and 0<=l<=J, got m={mj}, l={lj}")

    @classmethod
    def from_parity(cls, J: int, parity: Sequence[int]) -> "ParityProfile":
        """Build from the non-root parity lengths ``l_1..l_{n-1}``."""
        l = (0, *parity)
        return cls(J, tuple(J - x for x in l), l)

    @property
    def n(self) -> int:
        return len(self.m)

    @property
    def B(self) -> int:
        return sum(self.m)

    @property
    def M(self) -> int:
        return self.n * self.J

    @property
    def parity(self) -> tuple[int, ...]:
        return self.l[1:]


@dataclass(frozen=True, eq=False)
class TreeCodebook:
    """Profile plus the generator blocks ``G[(ell, j)]`` of shape ``m[ell] x l[j]``.

    ``G[(ell, j)]`` feeds information fragment ``ell`` into the parity bits of
    fragment ``j`` (``ell < j``); it is the block written ``G_{ell, j-1}`` in
    the usual notation.
    """

    profile: ParityProfile
    generators: Mapping[tuple[int, int], BitMatrix]

    def __post_init__(self):
        p = self.profile
        for j in range(1, p.n):
            for ell in range(j):
                g = self.generators.get((ell, j))
                if g is None or g.shape != (p.m[ell], p.l[j]):
                    raise ValueError(f"generator ({ell},{j}) must have shape {(p.m[ell], p.l[j])}")

    @classmethod
    def sample(cls, profile: ParityProfile, rng) -> "TreeCodebook":
        gen = as_generator(rng)
        blocks = {}
        for j in range(1, profile.n):
            for ell in range(j):
                blocks[(ell, j)] = sample_rademacher(profile.m[ell], profile.l[j], gen)
        return cls(profile, blocks)

    def generator(self, ell: int, j: int) -> BitMatrix:
        return self.generators[(ell, j)]

    def contributions(self, j: int, info: np.ndarray) -> np.ndarray:
        """Parity contributions of stage-``j`` information words to every later stage.

        Returns an ``(len(info), n)`` int array whose column ``q > j`` holds
        ``info·G[(j, q)]``; columns ``q <= j`` are zero.
        """
        p = self.profile
        info = np.asarray(info, dtype=np.int64)
        out = np.zeros((info.shape[0], p.n), dtype=np.int64)
        for q in range(j + 1, p.n):
            if p.l[q]:
                out[:, q] = self.generators[(j, q)].matvec_many(info)
        return out


@dataclass(frozen=True)
class Codeword:
    fragments: tuple[BitVector, ...]

    def as_ints(self) -> tuple[int, ...]:
        return tuple(f.value for f in self.fragments)


def split_message(w: BitVector, profile: ParityProfile) -> list[BitVector]:
    """Cut a ``B``-bit message into its information fragments."""
    if w.length != profile.B:
        raise ValueError(f"message has {w.length} bits, profile expects B={profile.B}")
    out, pos = [], 0
    for mj in profile.m:
        out.append(w.slice(pos, pos + mj))
        pos += mj
    return out


def join_fragments(info: Sequence[int], profile: ParityProfile) -> int:
    """Concatenate information fragments (as ints) into a message integer."""
    value = 0
    for x, mj in zip(info, profile.m):
        value = (value << mj) | int(x)
    return value


def message_fragments(messages: np.ndarray | Sequence[int], profile: ParityProfile) -> np.ndarray:
    """Split message integers into a ``(count, n)`` array of information fragments."""
    msgs = [int(x) for x in messages]
    out = np.zeros((len(msgs), profile.n), dtype=np.int64)
    shift = profile.B
    for j, mj in enumerate(profile.m):
        shift -= mj
        mask = (1 << mj) - 1
        out[:, j] = [(w >> shift) & mask for w in msgs]
    return out


def encode(w: BitVector, code: TreeCodebook) -> Codeword:
    """Systematic tree encoding of one message."""
    p = code.profile
    info = split_message(w, p)
    frags = [info[0]]
    for j in range(1, p.n):
        parity = 0
        for ell in range(j):
            parity ^= _vec_times(info[ell], code.generators[(ell, j)])
        frags.append(info[j].concat(BitVector(parity, p.l[j])))
    return Codeword(tuple(frags))


def _vec_times(v: BitVector, G: BitMatrix) -> int:
    from .gf2 import matvec_mod2

    return matvec_mod2(v, G).value


def encode_many(info: np.ndarray, code: TreeCodebook) -> np.ndarray:
    """Encode a ``(count, n)`` array of information fragments to coded fragment ints."""
    p = code.profile
    info = np.asarray(info, dtype=np.int64)
    parity = np.zeros_like(info)
    for ell in range(p.n - 1):
        parity ^= code.contributions(ell, info[:, ell])
    return (info << np.array(p.l, dtype=np.int64)) | parity


def check_parity_stage(path: Sequence[BitVector | int], code: TreeCodebook, j: int) -> bool:
    """True iff fragment ``j`` of ``path`` satisfies its parity given fragments ``0..j-1``."""
    p = code.profile
    if not 1 <= j <= p.n - 1:
        raise ValueError(f"stage {j} out of range 1..{p.n - 1}")
    if len(path) <= j:
        raise ValueError("path is shorter than the requested stage")
    vals = []
    for f in path[: j + 1]:
        if isinstance(f, BitVector):
            if f.length != p.J:
                raise ValueError("fragments must have J bits")
            f = f.value
        vals.append(int(f))
    lj = p.l[j]
    if lj == 0:
        return True
    expected = 0
    for ell in range(j):
        info = BitVector(vals[ell] >> p.l[ell], p.m[ell])
        expected ^= _vec_times(info, code.generators[(ell, j)])
    return (vals[j] & ((1 << lj) - 1)) == expected


@dataclass
class DecodeStats:
    """Counters accumulated over all decoded roots.

    ``survivors[j]`` is the number of partial paths alive after stage ``j``
    (``survivors[0]`` is the number of roots); ``children[j]`` the number of
    candidate extensions examined at stage ``j``.
    """

    survivors: list[int]
    children: list[int]
    parity_checks: int = 0
    roots: int = 0
    failed_roots: int = 0
    empty_roots: int = 0
    ambiguous_roots: int = 0

    @property
    def nodes_checked(self) -> int:
        return sum(self.children)

    @property
    def nodes_visited(self) -> int:
        return self.roots + self.nodes_checked

    def merge(self, other: "DecodeStats") -> "DecodeStats":
        return DecodeStats(
            survivors=[a + b for a, b in zip(self.survivors, other.survivors)],
            children=[a + b for a, b in zip(self.children, other.children)],
            parity_checks=self.parity_checks + other.parity_checks,
            roots=self.roots + other.roots,
            failed_roots=self.failed_roots + other.failed_roots,
            empty_roots=self.empty_roots + other.empty_roots,
            ambiguous_roots=self.ambiguous_roots + other.ambiguous_roots,
        )


@dataclass
class DecodeResult:
    messages: set[int]
    stats: DecodeStats
    # root list index -> number of full paths that survived
    root_survivors: dict[int, int] = field(default_factory=dict)
    # message -> coded fragments of its unique path
    paths: dict[int, tuple[int, ...]] = field(default_factory=dict)


def _fragment_array(lst, distinct: bool) -> np.ndarray:
    frags = getattr(lst, "fragments", lst)
    arr = np.fromiter((int(f.value if isinstance(f, BitVector) else f) for f in frags), dtype=np.int64)
    if distinct:
        _, first = np.unique(arr, return_index=True)
        arr = arr[np.sort(first)]
    return arr


def tree_decode(
    lists: Sequence,
    code: TreeCodebook,
    roots: Iterable[int] | None = None,
    max_paths: int = 20_000_000,
    distinct: bool = True,
) -> DecodeResult:
    """Stitch per-slot fragment lists into messages.

    Every root in ``lists[0]`` (or the given subset of root indices) grows its
    partial paths stage by stage, keeping only parity-consistent extensions.
    A root produces a message when exactly one full path survives.  All roots
    are processed together in vectorized form; the output does not depend on
    list order.

    Lists are treated as sets (repeated fragments collapse to their first
    occurrence).  With ``distinct=False`` list positions are kept as given, so
    a fragment shared by two users is two entries; this is the index-path
    model used by the survivor analysis.
    """
    p = code.profile
    if len(lists) != p.n:
        raise ValueError(f"expected {p.n} lists, got {len(lists)}")
    frags = [_fragment_array(lst, distinct) for lst in lists]
    for j, f in enumerate(frags):
        if f.size and (f.min() < 0 or f.max() >> p.J):
            raise ValueError(f"list {j} holds values outside J={p.J} bits")
    info = [f >> p.l[j] for j, f in enumerate(frags)]
    par = [f & ((1 << p.l[j]) - 1) for j, f in enumerate(frags)]

    root_idx = np.arange(frags[0].size) if roots is None else np.fromiter(roots, dtype=np.int64)
    n_roots = int(root_idx.size)
    stats = DecodeStats(survivors=[n_roots] + [0] * (p.n - 1), children=[0] * p.n, roots=n_roots)

    contrib0 = code.contributions(0, info[0])
    acc = contrib0[root_idx]
    owner = np.arange(n_roots)  # position of each live path's root within root_idx
    parents: list[np.ndarray] = []
    choices: list[np.ndarray] = []

    for j in range(1, p.n):
        k = frags[j].size
        live = acc.shape[0]
        n_children = live * k
        if n_children > max_paths:
            raise PathExplosionError(f"stage {j}: {n_children} candidate extensions exceed max_paths={max_paths}")
        stats.children[j] = n_children
        stats.parity_checks += n_children * p.l[j]
        if p.l[j]:
            ok = acc[:, j][:, None] == par[j][None, :]
            parent, child = np.nonzero(ok)
        else:
            parent = np.repeat(np.arange(live), k)
            child = np.tile(np.arange(k), live)
        contrib = code.contributions(j, info[j]) if j < p.n - 1 else None
        acc = acc[parent]
        if contrib is not None:
            acc = acc ^ contrib[child]
        owner = owner[parent]
        parents.append(parent)
        choices.append(child)
        stats.survivors[j] = int(parent.size)

    counts = np.bincount(owner, minlength=n_roots)
    result = DecodeResult(messages=set(), stats=stats)
    for pos, root in enumerate(root_idx):
        c = int(counts[pos])
        result.root_survivors[int(root)] = c
        if c == 0:
            stats.empty_roots += 1
        elif c > 1:
            stats.ambiguous_roots += 1
    stats.failed_roots = stats.empty_roots + stats.ambiguous_roots

    unique_pos = np.nonzero(counts[owner] == 1)[0]
    for leaf in unique_pos:
        idx = [0] * p.n
        node = int(leaf)
        for j in range(p.n - 1, 0, -1):
            idx[j] = int(choices[j - 1][node])
            node = int(parents[j - 1][node])
        idx[0] = int(root_idx[node])
        coded = tuple(int(frags[j][idx[j]]) for j in range(p.n))
        msg = join_fragments([int(info[j][idx[j]]) for j in range(p.n)], p)
        result.messages.add(msg)
        result.paths[msg] = coded
    return result

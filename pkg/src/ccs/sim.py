"""Monte Carlo simulation of the full scheme: encode, superimpose, CS decode, stitch, cancel.

Seeding.  A campaign seed ``s`` fixes everything through numpy
``SeedSequence(s, spawn_key=...)`` streams:

* ``(0,)`` tree-code generators, ``(1,)`` sensing matrix;
* ``(2, t, 0)`` messages of trial ``t``;
* ``(2, t, 1, it, j)`` channel noise of slot ``j`` (``it = 0``) and any
  fresh randomness used by SIC pass ``it`` in that slot;
* ``(2, t, 2, it, j)`` oracle-mode erasures and distractors;
* ``(2, t, 3)`` / ``(2, t, 4)`` per-trial code / matrix when resampling.

Trials therefore do not depend on each other or on execution order.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .channel import ChannelConfig, awgn_observe, ebn0_db, es_for_ebn0
from .csengine import (
    FragmentList,
    SensingMatrix,
    _lipschitz,
    build_sensing_matrix,
    cs_decode_slot,
    index_vector,
    read_matrix,
    slot_superimpose,
)
from .parityopt import OptProblem, optimize_allocation
from .treecode import (
    DecodeStats,
    ParityProfile,
    TreeCodebook,
    encode_many,
    join_fragments,
    tree_decode,
)


class ConfigError(ValueError):
    pass


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


# --- configuration ----------------------------------------------------------


def _int(v):
    return int(v)


def _bool(v):
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# key -> (parser, default); REQUIRED marks mandatory keys
REQUIRED = object()
_KEYS = {
    "ka": (_int, REQUIRED),
    "b": (_int, REQUIRED),
    "n": (_int, REQUIRED),
    "j": (_int, REQUIRED),
    "ktot": (_int, None),
    "k": (_int, None),
    "kdelta": (_int, 10),
    "rows": (_int, None),
    "lambda": (float, 3.0),
    "es": (float, None),
    "ebn0_db": (float, None),
    "matrix": (str, "rademacher-antipodal"),
    "alloc": (str, "uniform"),
    "eps_tree": (float, None),
    "sic_iterations": (_int, 0),
    "trials": (_int, 100),
    "seed": (_int, 0),
    "cs_mode": (str, "nnls"),
    "p_erasure": (float, 0.0),
    "nnls_tol": (float, 1e-6),
    "nnls_max_iters": (_int, 500),
    "nnls_precision": (str, "single"),
    "resample": (_bool, False),
    "distinct_messages": (_bool, True),
    "threads": (_int, 1),
}


@dataclass
class SimConfig:
    ka: int
    b: int
    n: int
    j: int
    ktot: int | None = None
    k: int | None = None
    kdelta: int = 10
    rows: int | None = None
    lam: float = 3.0
    es: float | None = None
    ebn0_db: float | None = None
    matrix: str = "rademacher-antipodal"
    alloc: str = "uniform"
    eps_tree: float | None = None
    sic_iterations: int = 0
    trials: int = 100
    seed: int = 0
    cs_mode: str = "nnls"
    p_erasure: float = 0.0
    nnls_tol: float = 1e-6
    nnls_max_iters: int = 500
    nnls_precision: str = "single"
    resample: bool = False
    distinct_messages: bool = True
    threads: int = 1

    def __post_init__(self):
        self.validate()

    # derived quantities
    @property
    def K(self) -> int:
        return self.k if self.k is not None else self.ka + self.kdelta

    @property
    def rows_per_slot(self) -> int:
        return self.rows if self.rows is not None else math.ceil(self.lam * max(self.ka, 1) * self.j)

    @property
    def N(self) -> int:
        return self.n * self.rows_per_slot

    @property
    def Es(self) -> float:
        if self.ebn0_db is not None:
            return es_for_ebn0(self.ebn0_db, self.N, self.b)
        return 1.0 if self.es is None else self.es

    @property
    def budget(self) -> int:
        return self.n * self.j - self.b

    def validate(self) -> None:
        if self.ka < 0:
            raise ConfigError("ka must be non-negative")
        if self.n < 1 or self.j < 1:
            raise ConfigError("n and j must be positive")
        if self.j > 24 and self.cs_mode == "nnls":
            raise ConfigError("j > 24 is beyond the dense sensing-matrix path")
        if self.j > 62:
            raise ConfigError("j must be at most 62")
        if not self.j <= self.b <= self.n * self.j:
            raise ConfigError(f"b must lie in [j, n*j] = [{self.j}, {self.n * self.j}]")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.K < 1:
            raise ConfigError("list size k must be at least 1")
        if self.es is not None and self.ebn0_db is not None:
            raise ConfigError("give either es or ebn0_db, not both")
        if self.es is not None and self.es < 0:
            raise ConfigError("es must be non-negative")
        if self.nnls_precision not in ("single", "double"):
            raise ConfigError("nnls_precision must be single or double")
        if self.cs_mode not in ("nnls", "oracle"):
            raise ConfigError("cs_mode must be nnls or oracle")
        if not 0.0 <= self.p_erasure <= 1.0:
            raise ConfigError("p_erasure must lie in [0, 1]")
        if self.sic_iterations < 0:
            raise ConfigError("sic_iterations must be non-negative")
        if self.alloc == "optimize" and self.eps_tree is None:
            raise ConfigError("alloc = optimize needs eps_tree")
        if self.cs_mode == "oracle" and self.K < self.ka:
            raise ConfigError("oracle mode needs k >= ka")
        self.parity()

    def parity(self) -> tuple[int, ...]:
        """Parity lengths l_1..l_{n-1} implied by ``alloc``."""
        d, budget = self.n - 1, self.budget
        if d == 0:
            return ()
        if self.alloc == "uniform":
            l = [budget // d] * d
            for i in range(budget - sum(l)):
                l[d - 1 - i] += 1
            return tuple(l)
        if self.alloc == "optimize":
            res = optimize_allocation(OptProblem(self.b, self.n, self.j, self.K, self.eps_tree))
            if not res.feasible:
                raise ConfigError(f"no allocation meets eps_tree={self.eps_tree}: {res.reason}")
            return res.l
        try:
            l = tuple(int(x) for x in self.alloc.split(","))
        except ValueError:
            raise ConfigError(f"alloc must be uniform, optimize or a comma list, got {self.alloc!r}") from None
        if len(l) != d:
            raise ConfigError(f"alloc needs {d} entries (l_1..l_{d}), got {len(l)}")
        if any(not 0 <= x <= self.j for x in l):
            raise ConfigError(f"alloc entries must lie in [0, {self.j}]")
        if sum(l) != budget:
            raise ConfigError(f"alloc sums to {sum(l)}, but n*j - b = {budget}")
        return l

    def profile(self) -> ParityProfile:
        return ParityProfile.from_parity(self.j, self.parity())

    def echo(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out.update(K=self.K, rows_per_slot=self.rows_per_slot, N=self.N, Es=self.Es, parity=list(self.parity()))
        if self.cs_mode == "nnls" and self.Es > 0:
            out["ebn0_db_effective"] = ebn0_db(self.Es, self.N, self.b)
        return out


_ALIASES = {"lambda": "lam"}


def parse_config_text(text: str, overrides: dict | None = None) -> SimConfig:
    """Flat ``key = value`` format; ``#`` starts a comment; keys are case-insensitive."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parser, _ = _KEYS[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    missing = [k for k, (_, d) in _KEYS.items() if d is REQUIRED and k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    kwargs = {_ALIASES.get(k, k): v for k, v in values.items()}
    try:
        return SimConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides: dict | None = None) -> SimConfig:
    return parse_config_text(Path(path).read_text(), overrides)


# --- campaign context ----------------------------------------------------------


@dataclass
class Context:
    cfg: SimConfig
    profile: ParityProfile
    code: TreeCodebook
    A: SensingMatrix | None
    lipschitz: float | None


def make_context(cfg: SimConfig, trial: int | None = None) -> Context:
    """Code and sensing matrix shared by the trials (or fresh per trial when resampling)."""
    profile = cfg.profile()
    if trial is None:
        code_rng, mat_rng = _stream(cfg.seed, 0), _stream(cfg.seed, 1)
    else:
        code_rng, mat_rng = _stream(cfg.seed, 2, trial, 3), _stream(cfg.seed, 2, trial, 4)
    code = TreeCodebook.sample(profile, code_rng)
    A = lip = None
    if cfg.cs_mode == "nnls":
        if cfg.matrix in ("rademacher-antipodal", "gaussian"):
            A = build_sensing_matrix(cfg.matrix, cfg.j, cfg.rows_per_slot, cfg.Es, mat_rng)
        else:
            A = read_matrix(cfg.matrix).scaled(cfg.Es) if cfg.Es > 0 else read_matrix(cfg.matrix)
            if A.cols != 1 << cfg.j or A.rows != cfg.rows_per_slot:
                raise ConfigError(f"matrix file is {A.rows}x{A.cols}, config needs {cfg.rows_per_slot}x{1 << cfg.j}")
        if A.kind == "rademacher-antipodal" and A.rows:
            # every user sends n columns; with antipodal entries the power constraint is met with equality
            ChannelConfig(cfg.N, cfg.n, cfg.b, cfg.Es)
            col_energy = float(np.max(np.sum(A.values**2, axis=0)))
            if cfg.n * col_energy > cfg.N * cfg.Es * (1 + 1e-9):
                raise AssertionError("per-user power constraint violated")
        lip = _lipschitz(A.values) if A.rows else None
    return Context(cfg, profile, code, A, lip)


# --- trials --------------------------------------------------------------------


@dataclass
class TrialReport:
    transmitted: int
    recovered: int
    missed: int
    extraneous: int
    output_size: int
    overflow: bool
    per_iteration_recovered: list[int]
    stats: DecodeStats
    cs_misses: list[int]
    cs_iterations: int
    cs_decodes: int
    cs_nonconverged: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stats"] = asdict(self.stats)
        return d


@dataclass
class TrialState:
    """Everything a SIC pass needs: the observation, truth and the decoder's current output."""

    ctx: Context
    trial: int
    messages: list[int]
    coded: np.ndarray  # (Ka, n) transmitted fragments
    y: list[np.ndarray] | None  # per-slot observations (nnls mode)
    recovered: set[int] = field(default_factory=set)
    paths: dict[int, tuple[int, ...]] = field(default_factory=dict)
    iteration: int = 0
    stats: DecodeStats | None = None
    history: list[int] = field(default_factory=list)
    cs_misses: list[int] = field(default_factory=list)
    cs_iterations: int = 0
    cs_decodes: int = 0
    cs_nonconverged: int = 0


def draw_messages(profile: ParityProfile, count: int, rng: np.random.Generator, distinct: bool = True) -> np.ndarray:
    """``(count, n)`` information fragments of uniform random messages."""
    info = np.zeros((count, profile.n), dtype=np.int64)
    for j, mj in enumerate(profile.m):
        info[:, j] = rng.integers(0, 1 << mj, size=count, dtype=np.int64) if mj else 0
    if distinct:
        if count > 2**profile.B:
            raise ConfigError("more active users than distinct messages")
        while True:
            _, first = np.unique(info, axis=0, return_index=True)
            dup = np.setdiff1d(np.arange(count), first)
            if dup.size == 0:
                break
            for j, mj in enumerate(profile.m):
                info[dup, j] = rng.integers(0, 1 << mj, size=dup.size, dtype=np.int64) if mj else 0
    return info


def _oracle_list(truth: np.ndarray, K: int, J: int, p_erasure: float, rng: np.random.Generator) -> FragmentList:
    """True fragments (each user's copy erased w.p. p_erasure) padded with random distractors to K entries."""
    keep = rng.random(truth.size) >= p_erasure if p_erasure > 0 else np.ones(truth.size, bool)
    present = list(dict.fromkeys(int(v) for v in truth[keep]))
    truth_set = set(int(v) for v in truth)
    size = 1 << J
    room = min(K, size) - len(present)
    if room > 0:
        pool = size - len(truth_set)
        room = min(room, pool)
        picks: list[int] = []
        seen = set(present) | truth_set
        while len(picks) < room:
            cand = rng.integers(0, size, size=2 * (room - len(picks)) + 4)
            for c in cand:
                c = int(c)
                if c not in seen:
                    seen.add(c)
                    picks.append(c)
                    if len(picks) == room:
                        break
        present += picks
    return FragmentList(tuple(present[:K]))


def _cs_pass(state: TrialState, targets: list[np.ndarray], K: int, it: int) -> list[FragmentList]:
    """One round of per-slot list recovery on the current observations."""
    cfg, ctx = state.ctx.cfg, state.ctx
    lists = []
    for j in range(cfg.n):
        if cfg.cs_mode == "oracle":
            lists.append(_oracle_list(targets[j], K, cfg.j, cfg.p_erasure, _stream(cfg.seed, 2, state.trial, 2, it, j)))
            continue
        fl = cs_decode_slot(state.y[j], ctx.A, K, cfg.nnls_tol, cfg.nnls_max_iters, ctx.lipschitz, cfg.nnls_precision)
        state.cs_iterations += fl.iterations
        state.cs_decodes += 1
        state.cs_nonconverged += not fl.converged
        if cfg.p_erasure > 0:
            erase = _stream(cfg.seed, 2, state.trial, 2, it, j).random(len(fl)) < cfg.p_erasure
            truth = set(int(v) for v in targets[j])
            kept = [f for f, e in zip(fl.fragments, erase) if not (e and f in truth)]
            fl = FragmentList(tuple(kept), converged=fl.converged, iterations=fl.iterations)
        lists.append(fl)
    return lists


def _decode_lists(state: TrialState, lists: list[FragmentList]) -> DecodeStats:
    res = tree_decode(lists, state.ctx.code)
    state.recovered |= res.messages
    for msg, path in res.paths.items():
        state.paths.setdefault(msg, path)
    return res.stats


def start_trial(cfg: SimConfig, trial: int, ctx: Context | None = None) -> TrialState:
    """Draw messages, transmit, and run the first decoding pass."""
    if ctx is None or cfg.resample:
        ctx = make_context(cfg, trial if cfg.resample else None)
    profile = ctx.profile
    info = draw_messages(profile, cfg.ka, _stream(cfg.seed, 2, trial, 0), cfg.distinct_messages)
    coded = encode_many(info, ctx.code) if cfg.ka else np.zeros((0, cfg.n), dtype=np.int64)
    messages = [join_fragments(row, profile) for row in info.tolist()]
    y = None
    if cfg.cs_mode == "nnls":
        y = []
        for j in range(cfg.n):
            x = slot_superimpose(ctx.A, index_vector(coded[:, j], ctx.A.cols))
            y.append(awgn_observe(x, 1.0, _stream(cfg.seed, 2, trial, 1, 0, j)))
    state = TrialState(ctx, trial, messages, coded, y)
    lists = _cs_pass(state, [coded[:, j] for j in range(cfg.n)], cfg.K, 0)
    state.cs_misses = [int(sum(int(v) not in lists[j] for v in coded[:, j])) for j in range(cfg.n)]
    state.stats = _decode_lists(state, lists)
    state.history.append(len(state.recovered & set(messages)))
    return state


def sic_iterate(state: TrialState) -> TrialState:
    """Cancel the recovered messages, re-run CS with a reduced list, stitch again and merge."""
    cfg = state.ctx.cfg
    missing = cfg.ka - len(state.recovered)
    if missing <= 0:
        state.history.append(state.history[-1])
        return state
    state.iteration += 1
    it = state.iteration
    K_res = missing + cfg.kdelta
    recovered_coded = np.array([state.paths[m] for m in sorted(state.recovered)], dtype=np.int64).reshape(-1, cfg.n)
    true_set = set(state.messages)
    # fragments still to be found: those of transmitted messages not yet recovered
    pending = np.array([row for m, row in zip(state.messages, state.coded.tolist()) if m not in state.recovered], dtype=np.int64).reshape(-1, cfg.n)
    saved_y = state.y
    if cfg.cs_mode == "nnls":
        state.y = [
            saved_y[j] - slot_superimpose(state.ctx.A, index_vector(recovered_coded[:, j], state.ctx.A.cols))
            for j in range(cfg.n)
        ]
    lists = _cs_pass(state, [pending[:, j] for j in range(cfg.n)], K_res, it)
    state.y = saved_y
    stats = _decode_lists(state, lists)
    state.stats = state.stats.merge(stats)
    state.history.append(len(state.recovered & true_set))
    return state


def finish_trial(state: TrialState) -> TrialReport:
    cfg = state.ctx.cfg
    true_set = set(state.messages)
    hit = len(state.recovered & true_set)
    return TrialReport(
        transmitted=cfg.ka,
        recovered=hit,
        missed=cfg.ka - hit,
        extraneous=len(state.recovered - true_set),
        output_size=len(state.recovered),
        overflow=len(state.recovered) > cfg.ka,
        per_iteration_recovered=list(state.history),
        stats=state.stats,
        cs_misses=state.cs_misses,
        cs_iterations=state.cs_iterations,
        cs_decodes=state.cs_decodes,
        cs_nonconverged=state.cs_nonconverged,
    )


def run_trial(cfg: SimConfig, trial: int, ctx: Context | None = None) -> TrialReport:
    state = start_trial(cfg, trial, ctx)
    for _ in range(cfg.sic_iterations):
        sic_iterate(state)
    return finish_trial(state)


# --- campaigns -----------------------------------------------------------------


@dataclass
class CampaignReport:
    pe: float | None
    ci_lo: float | None
    ci_hi: float | None
    trials: int
    ka: int
    ebn0_db: float | None
    missed: int
    extraneous: int
    overflow_trials: int
    mean_tree_checks: float
    mean_tree_nodes: float
    mean_survivors: list[float]
    mean_cs_iters: float
    cs_nonconverged: int
    mean_cs_misses: float
    per_iteration_recovered: list[float]
    config: dict
    note: str = ""
    runtime_s: float | None = None

    def to_json(self, include_runtime: bool = False) -> str:
        d = asdict(self)
        if not include_runtime:
            d.pop("runtime_s")
        return json.dumps(d, indent=2, sort_keys=True)


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def summarize(cfg: SimConfig, reports: Sequence[TrialReport], runtime: float | None = None) -> CampaignReport:
    trials = len(reports)
    total = trials * cfg.ka
    missed = sum(r.missed for r in reports)
    if total:
        pe = missed / total
        lo, hi = wilson_interval(missed, total)
        lo, hi = min(lo, pe), max(hi, pe)
        note = ""
    else:
        pe = lo = hi = None
        note = "ka = 0: per-user error probability undefined"
    decodes = sum(r.cs_decodes for r in reports)
    depth = max((len(r.per_iteration_recovered) for r in reports), default=0)
    per_it = []
    for i in range(depth):
        vals = [r.per_iteration_recovered[min(i, len(r.per_iteration_recovered) - 1)] for r in reports]
        per_it.append(float(np.mean(vals)))
    surv = np.mean([r.stats.survivors for r in reports], axis=0).tolist() if reports else []
    echo = cfg.echo()
    return CampaignReport(
        pe=pe,
        ci_lo=lo,
        ci_hi=hi,
        trials=trials,
        ka=cfg.ka,
        ebn0_db=cfg.ebn0_db if cfg.ebn0_db is not None else echo.get("ebn0_db_effective"),
        missed=missed,
        extraneous=sum(r.extraneous for r in reports),
        overflow_trials=sum(r.overflow for r in reports),
        mean_tree_checks=float(np.mean([r.stats.parity_checks for r in reports])),
        mean_tree_nodes=float(np.mean([r.stats.nodes_checked for r in reports])),
        mean_survivors=[float(x) for x in surv],
        mean_cs_iters=sum(r.cs_iterations for r in reports) / decodes if decodes else 0.0,
        cs_nonconverged=sum(r.cs_nonconverged for r in reports),
        mean_cs_misses=float(np.mean([sum(r.cs_misses) for r in reports])),
        per_iteration_recovered=per_it,
        config=echo,
        note=note,
        runtime_s=runtime,
    )


def run_trials(cfg: SimConfig, threads: int | None = None) -> list[TrialReport]:
    ctx = None if cfg.resample else make_context(cfg)
    threads = threads or cfg.threads
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda t: run_trial(cfg, t, ctx), range(cfg.trials)))
    return [run_trial(cfg, t, ctx) for t in range(cfg.trials)]


def run_campaign(cfg: SimConfig, threads: int | None = None) -> CampaignReport:
    t0 = time.perf_counter()
    reports = run_trials(cfg, threads)
    return summarize(cfg, reports, time.perf_counter() - t0)


CSV_COLUMNS = ("ka", "ebn0_db", "trials", "pe", "ci_lo", "ci_hi", "mean_tree_checks", "mean_cs_iters")


def sweep(cfg: SimConfig, param: str, values: Sequence[float], threads: int | None = None) -> list[CampaignReport]:
    """Campaigns over a grid of ``ebn0_db`` or ``ka`` values (other settings fixed)."""
    if param not in ("ebn0_db", "ka"):
        raise ConfigError("sweep parameter must be ebn0_db or ka")
    out = []
    for v in values:
        kw = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
        if param == "ebn0_db":
            kw.update(ebn0_db=float(v), es=None)
        else:
            kw["ka"] = int(v)
        out.append(run_campaign(SimConfig(**kw), threads))
    return out


def csv_rows(reports: Sequence[CampaignReport]) -> list[dict]:
    return [{c: getattr(r, c) for c in CSV_COLUMNS} for r in reports]


# --- survivor statistics of the tree decoder alone -----------------------------


def simulate_survivors(profile: ParityProfile, K: int, trials: int, seed: int) -> np.ndarray:
    """Per-trial survivor counts (true path included) after stages 1..n-1.

    Each trial draws a fresh code and K independent uniform messages, puts
    every coded fragment on its slot's list (positions kept, so shared
    fragments count twice) and grows the paths rooted at message 0.
    """
    out = np.zeros((trials, profile.n - 1), dtype=np.int64)
    for t in range(trials):
        rng = _stream(seed, 5, t)
        code = TreeCodebook.sample(profile, rng)
        info = draw_messages(profile, K, rng, distinct=False)
        coded = encode_many(info, code)
        res = tree_decode([coded[:, j] for j in range(profile.n)], code, roots=[0], distinct=False)
        out[t] = res.stats.survivors[1:]
    return out

"""Parity-length allocation by convex relaxation and integer repair.

Writing ``x_j = l_j`` (bits of parity at stage ``j``), both the expected node
count and the expected number of erroneous survivors at the last stage are
sums of exponentials of affine functions of ``x``.  Their logarithms are
therefore convex, and the relaxed allocation problem

    minimize   log E[C~](x)
    subject to log E[L~_{n-1}](x) <= log eps
               sum(x) = n J - B,   0 <= x <= J

is solved with a log-barrier method (Newton steps in the null space of the
budget constraint, backtracking line search).  The continuous solution is
rounded, the budget is restored one bit at a time, and a local search over
single-bit transfers fixes any constraint violation introduced by rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis_approx import AllocationSpec, expected_complexity_nodes, expected_surviving_approx

LN2 = math.log(2.0)


@dataclass(frozen=True)
class OptProblem:
    B: int
    n: int
    J: int
    K: int
    eps_tree: float

    def __post_init__(self):
        if self.n < 2 or self.J < 1 or self.K < 1 or self.B < 0:
            raise ValueError("need n >= 2, J >= 1, K >= 1, B >= 0")
        if self.B < self.J:
            raise ValueError("B must be at least J (the root fragment is all information)")
        if not self.eps_tree > 0:
            raise ValueError("eps_tree must be positive")
        if not 0 <= self.budget <= (self.n - 1) * self.J:
            raise ValueError(f"parity budget {self.budget} does not fit in {self.n - 1} stages of {self.J} bits")

    @property
    def M(self) -> int:
        return self.n * self.J

    @property
    def budget(self) -> int:
        return self.M - self.B


@dataclass
class Allocation:
    l: tuple[int, ...]
    objective: float
    feasible: bool
    tail: float = math.nan  # E[L~_{n-1}] at l
    relaxed: np.ndarray | None = None
    reason: str = ""
    info: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.info.get("eps_tree", math.nan) - self.tail


def evaluate_allocation(l, K: int, eps_tree: float, budget: int | None = None, J: int | None = None):
    """Return ``(E[L~_{n-1}], E[C~], feasible, reason)`` for an integer allocation."""
    l = tuple(int(x) for x in l)
    spec = AllocationSpec(K, l)
    tail = expected_surviving_approx(spec)[-1] if l else 0.0
    nodes = expected_complexity_nodes(spec)
    reason = ""
    if J is not None and any(not 0 <= x <= J for x in l):
        reason = f"parity lengths must lie in [0, {J}]"
    elif budget is not None and sum(l) != budget:
        reason = f"sum of parity lengths {sum(l)} != budget {budget}"
    elif tail > eps_tree:
        reason = f"E[L~_{len(l)}] = {tail:.6g} exceeds eps_tree = {eps_tree:.6g}"
    return tail, nodes, reason == "", reason


# --- log-sum-exp models -----------------------------------------------------


@dataclass(frozen=True)
class _LSE:
    """log(sum_i exp(c_i - A_i x)) with gradient and Hessian."""

    A: np.ndarray
    c: np.ndarray

    def value(self, x):
        z = self.c - self.A @ x
        top = z.max()
        return top + math.log(np.exp(z - top).sum())

    def derivs(self, x):
        z = self.c - self.A @ x
        w = np.exp(z - z.max())
        pi = w / w.sum()
        g = -(self.A.T @ pi)
        Api = self.A.T * pi
        H = Api @ self.A - np.outer(self.A.T @ pi, self.A.T @ pi)
        return self.value(x), g, H


def _models(K: int, n: int):
    """(objective, tail constraint) as LSE models in natural log, for K >= 2."""
    d = n - 1
    lk, lk1 = math.log(K), math.log(K - 1)
    rows_obj, c_obj = [np.zeros(d)], [math.log((n - 1) * K)]
    rows_tail, c_tail = [], []
    for j in range(1, n):
        for q in range(1, j + 1):
            a = np.zeros(d)
            a[q - 1 : j] = LN2
            c = (j - q) * lk + lk1
            if j <= n - 2:
                rows_obj.append(a)
                c_obj.append(c + lk)
            if j == n - 1:
                rows_tail.append(a)
                c_tail.append(c)
    obj = _LSE(np.array(rows_obj), np.array(c_obj))
    tail = _LSE(np.array(rows_tail), np.array(c_tail))
    return obj, tail


def _null_basis(d: int) -> np.ndarray:
    """Orthonormal basis of {z : sum(z) = 0}."""
    q, _ = np.linalg.qr(np.eye(d) - 1.0 / d)
    return q[:, : d - 1]


def _barrier(x0, J, fobj, fcon, log_eps, Z, gap=1e-8, t0=1.0, max_newton=200):
    """Log-barrier minimization of fobj over the box, the budget plane and fcon <= log_eps.

    ``fcon`` may be None (no extra constraint).  Returns the final iterate.
    """
    x = x0.copy()
    m = 2 * x.size + (fcon is not None)
    t = t0

    def phi(x):
        if np.any(x <= 0) or np.any(x >= J):
            return math.inf
        val = t * fobj.value(x) - np.log(x).sum() - np.log(J - x).sum()
        if fcon is not None:
            s = log_eps - fcon.value(x)
            if s <= 0:
                return math.inf
            val -= math.log(s)
        return val

    while True:
        for _ in range(max_newton):
            _, g0, H0 = fobj.derivs(x)
            g = t * g0 - 1.0 / x + 1.0 / (J - x)
            H = t * H0 + np.diag(1.0 / x**2 + 1.0 / (J - x) ** 2)
            if fcon is not None:
                fv, gc, Hc = fcon.derivs(x)
                s = log_eps - fv
                g = g + gc / s
                H = H + Hc / s + np.outer(gc, gc) / s**2
            gz = Z.T @ g
            Hz = Z.T @ H @ Z
            try:
                dz = -np.linalg.solve(Hz, gz)
            except np.linalg.LinAlgError:
                dz = -gz
            dec = -gz @ dz
            if dec / 2 <= 1e-10:
                break
            dx = Z @ dz
            step, f0 = 1.0, phi(x)
            while step > 1e-12 and phi(x + step * dx) > f0 - 0.25 * step * dec:
                step *= 0.5
            if step <= 1e-12:
                break
            x = x + step * dx
        if m / t < gap:
            return x
        t *= 2.0


# --- integer stage ----------------------------------------------------------


def _tail(K, l):
    return expected_surviving_approx(AllocationSpec(K, tuple(l)))[-1]


def _nodes(K, l):
    return expected_complexity_nodes(AllocationSpec(K, tuple(l)))


def _round_to_budget(x, budget, J, K):
    """Nearest-integer rounding, then one-bit corrections where they hurt the constraint least."""
    l = np.clip(np.rint(x), 0, J).astype(int)
    while l.sum() != budget:
        up = l.sum() < budget
        best, best_val = None, math.inf
        for i in range(l.size):
            if (up and l[i] >= J) or (not up and l[i] <= 0):
                continue
            trial = l.copy()
            trial[i] += 1 if up else -1
            val = _tail(K, trial)
            if val < best_val:
                best, best_val = i, val
        l[best] += 1 if up else -1
    return l


def _fast_eval(K, l):
    """(tail, nodes) through the one-step recursion; fine for search moves at moderate sizes."""
    prev, acc = 0.0, 0.0
    for j, lj in enumerate(l):
        p = 2.0 ** -float(lj)
        prev = (K - 1) * p if j == 0 else p * (K * prev + K - 1)
        if j < len(l) - 1:
            acc += prev
    return prev, len(l) * K + K * acc


def _score(K, l, eps):
    tail, nodes = _fast_eval(K, l)
    if tail <= eps * (1 + 1e-12):
        return (0, nodes)
    return (1, tail)


def _moves(l, J):
    d = len(l)
    for i in range(d):
        if l[i] == 0:
            continue
        for k in range(d):
            if k != i and l[k] < J:
                yield i, k


def _local_search(l, K, J, eps, max_rounds=10_000):
    """Best-improvement search over one-bit transfers between stages, then pairs of transfers."""
    l = [int(v) for v in l]
    cur = _score(K, l, eps)
    for _ in range(max_rounds):
        best, best_score = None, cur
        for i, k in _moves(l, J):
            trial = l.copy()
            trial[i] -= 1
            trial[k] += 1
            sc = _score(K, trial, eps)
            if sc < best_score:
                best, best_score = trial, sc
        if best is None:
            # single transfers are stuck; look two transfers ahead
            for i, k in _moves(l, J):
                first = l.copy()
                first[i] -= 1
                first[k] += 1
                for i2, k2 in _moves(first, J):
                    trial = first.copy()
                    trial[i2] -= 1
                    trial[k2] += 1
                    sc = _score(K, trial, eps)
                    if sc < best_score:
                        best, best_score = trial, sc
        if best is None:
            return np.array(l), cur
        l, cur = best, best_score
    return np.array(l), cur


def optimize_allocation(prob: OptProblem) -> Allocation:
    """Minimize E[C~] subject to E[L~_{n-1}] <= eps_tree over integer allocations."""
    d, J, K, budget, eps = prob.n - 1, prob.J, prob.K, prob.budget, prob.eps_tree
    info = {"eps_tree": eps}

    def finish(l, relaxed=None, reason=""):
        tail, nodes, ok, why = evaluate_allocation(l, K, eps, budget, J)
        return Allocation(tuple(int(v) for v in l), nodes, ok, tail, relaxed, reason or why, info)

    if K == 1:
        # no interferers: every allocation is feasible and costs (n-1)K
        base = np.full(d, budget // d)
        base[: budget - base.sum()] += 1
        return finish(base)
    if d == 1 or budget in (0, d * J):
        return finish(np.full(d, budget // d), reason="" if _tail(K, np.full(d, budget // d)) <= eps else "infeasible")

    obj, tail = _models(K, prob.n)
    Z = _null_basis(d)
    center = np.full(d, budget / d)
    log_eps = math.log(eps)

    # phase I: smallest achievable tail over the box and budget plane
    x1 = _barrier(center, J, tail, None, None, Z, gap=1e-10)
    info["min_tail_relaxed"] = math.exp(tail.value(x1))
    if tail.value(x1) > log_eps:
        l_best = _round_to_budget(x1, budget, J, K)
        out = finish(l_best, x1, "infeasible: the smallest achievable E[L~] exceeds eps_tree")
        out.feasible = False
        return out

    x2 = _barrier(x1, J, obj, tail, log_eps, Z)
    l0 = _round_to_budget(x2, budget, J, K)
    l_int, (flag, _) = _local_search(l0, K, J, eps)
    if flag:
        out = finish(l_int, x2, "infeasible after rounding: no integer allocation found near the relaxed optimum")
        out.feasible = False
        return out
    return finish(l_int, x2)

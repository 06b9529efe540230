"""Per-slot compressed sensing: sensing matrices, superposition and NNLS list recovery.

Column ``i`` of a sensing matrix is the waveform for the ``J``-bit coded
fragment with integer value ``i`` (information bits high, parity bits low).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .gf2 import as_generator

KINDS = ("rademacher-antipodal", "gaussian", "imported")
MAGIC = b"CCSMAT1\0"
DEFAULT_MEMORY_BUDGET = 1 << 31  # bytes


class DimensionOverflowError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    values: np.ndarray
    kind: str = "rademacher-antipodal"
    Es: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("sensing matrix must be two-dimensional")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def J(self) -> int:
        return int(self.cols).bit_length() - 1

    def single(self) -> np.ndarray:
        """float32 copy of the values, cached."""
        cached = self.__dict__.get("_single")
        if cached is None:
            cached = np.ascontiguousarray(self.values, dtype=np.float32)
            object.__setattr__(self, "_single", cached)
        return cached

    def scaled(self, Es: float) -> "SensingMatrix":
        """Same waveforms at a different per-symbol energy."""
        return SensingMatrix(self.values * math.sqrt(Es / self.Es), self.kind, Es)


def build_sensing_matrix(kind: str, J: int, rows: int, Es: float, rng, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> SensingMatrix:
    if rows < 1 or J < 1:
        raise ValueError("rows and J must be at least 1")
    if Es < 0:
        raise ValueError("Es must be non-negative")
    cols = 1 << J
    if rows * cols * 8 > memory_budget:
        raise DimensionOverflowError(f"{rows} x 2^{J} matrix needs {rows * cols * 8} bytes, budget {memory_budget}")
    gen = as_generator(rng)
    amp = math.sqrt(Es)
    if kind == "rademacher-antipodal":
        signs = gen.integers(0, 2, size=(rows, cols), dtype=np.int8)
        values = amp * (1.0 - 2.0 * signs)
    elif kind == "gaussian":
        values = amp * gen.standard_normal((rows, cols))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return SensingMatrix(values, kind, Es)


def _as_values(A) -> np.ndarray:
    return A.values if isinstance(A, SensingMatrix) else np.asarray(A, dtype=float)


def slot_superimpose(A, b) -> np.ndarray:
    """``A b`` for a non-negative integer index vector (dense array or {index: count} mapping)."""
    V = _as_values(A)
    if isinstance(b, Mapping):
        idx = np.fromiter(b.keys(), dtype=np.int64, count=len(b))
        cnt = np.fromiter(b.values(), dtype=float, count=len(b))
        if idx.size and (idx.min() < 0 or idx.max() >= V.shape[1]):
            raise ValueError("index outside the matrix columns")
    else:
        b = np.asarray(b)
        if b.ndim != 1 or b.size != V.shape[1]:
            raise ValueError(f"index vector has length {b.size}, matrix has {V.shape[1]} columns")
        idx = np.flatnonzero(b)
        cnt = b[idx].astype(float)
    if np.any(cnt < 0):
        raise ValueError("index vector entries must be non-negative")
    return V[:, idx] @ cnt


def index_vector(fragments, cols: int) -> np.ndarray:
    """Dense index vector counting how many users sent each fragment."""
    return np.bincount(np.asarray(fragments, dtype=np.int64), minlength=cols)


@dataclass
class NNLSResult:
    x: np.ndarray
    iterations: int
    converged: bool
    reason: str
    residuals: list[float] = field(default_factory=list)


def _lipschitz(V: np.ndarray, iters: int = 50, seed: int = 0) -> float:
    """Largest eigenvalue of V^T V by power iteration (with a small safety margin)."""
    v = np.random.default_rng(seed).standard_normal(V.shape[1])
    v /= np.linalg.norm(v) or 1.0
    lam = 0.0
    for _ in range(iters):
        w = V.T @ (V @ v)
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            return 1.0
        v = w / lam_new
        if abs(lam_new - lam) <= 1e-6 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return 1.01 * lam


def nnls(
    A,
    y,
    tol: float = 1e-6,
    max_iters: int = 500,
    record: bool = False,
    lipschitz: float | None = None,
    precision: str = "double",
    check_every: int = 5,
) -> NNLSResult:
    """Projected gradient with momentum for min ||Ax - y|| over x >= 0.

    The momentum sequence is the monotone variant: a proposed point is only
    accepted when it does not raise the residual, so the residual norm never
    increases between iterations.  Stops when the relative residual drops to
    ``tol`` or the projected-gradient step becomes smaller than ``tol``
    relative to ``||A^T y||`` (tested every ``check_every`` iterations);
    otherwise reports non-convergence.  ``precision="single"`` runs the
    matrix products in float32, roughly three times faster.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if precision not in ("double", "single"):
        raise ValueError("precision must be 'double' or 'single'")
    V = _as_values(A)
    y = np.asarray(y, dtype=float)
    if y.shape != (V.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({V.shape[0]},)")
    x = np.zeros(V.shape[1])
    ynorm = float(np.linalg.norm(y))
    if ynorm == 0.0:
        return NNLSResult(x, 0, True, "zero observation", [0.0] if record else [])
    L = lipschitz or _lipschitz(V)
    if precision == "single":
        W = A.single() if isinstance(A, SensingMatrix) else V.astype(np.float32)
        Vt = W.T
        mv = lambda v: (W @ v.astype(np.float32)).astype(float)  # noqa: E731
        rmv = lambda v: (Vt @ v.astype(np.float32)).astype(float)  # noqa: E731
    else:
        mv = V.__matmul__
        rmv = V.T.__matmul__
    Aty = rmv(y)
    scale = float(np.linalg.norm(Aty)) or 1.0
    Ax = np.zeros_like(y)
    Ax_old = Ax
    fx = ynorm * ynorm
    res_hist = [ynorm] if record else []
    z, Az, t = x.copy(), Ax.copy(), 1.0
    for it in range(1, max_iters + 1):
        cand = np.maximum(z - rmv(Az - y) / L, 0.0)
        Ac = mv(cand)
        rc = Ac - y
        fc = float(rc @ rc)
        x_old = x
        Ax_old = Ax
        if fc <= fx:
            x, Ax, fx = cand, Ac, fc
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        a, b = t / t_new, (t - 1.0) / t_new
        z = x + a * (cand - x) + b * (x - x_old)
        Az = Ax + a * (Ac - Ax) + b * (Ax - Ax_old)
        t = t_new
        if record:
            res_hist.append(math.sqrt(fx))
        if math.sqrt(fx) <= tol * ynorm:
            return NNLSResult(x, it, True, "relative residual below tol", res_hist)
        if it % check_every == 0 or it == max_iters:
            step = x - np.maximum(x - rmv(Ax - y) / L, 0.0)
            if L * float(np.linalg.norm(step)) <= tol * scale:
                return NNLSResult(x, it, True, "projected gradient below tol", res_hist)
    return NNLSResult(x, max_iters, False, "max_iters reached", res_hist)


@dataclass(frozen=True)
class FragmentList:
    fragments: tuple[int, ...]
    magnitudes: tuple[float, ...] = ()
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        if len(set(self.fragments)) != len(self.fragments):
            raise ValueError("fragments on a list must be distinct")

    def __len__(self) -> int:
        return len(self.fragments)

    def __iter__(self):
        return iter(self.fragments)

    def __contains__(self, item) -> bool:
        return item in self.fragments


def top_k(x: np.ndarray, K: int) -> np.ndarray:
    """Indices of the K largest entries; ties go to the lower index."""
    x = np.asarray(x)
    order = np.lexsort((np.arange(x.size), -x))
    return order[: min(K, x.size)]


def cs_decode_slot(
    y,
    A,
    K: int,
    tol: float = 1e-6,
    max_iters: int = 500,
    lipschitz: float | None = None,
    precision: str = "double",
) -> FragmentList:
    """NNLS then keep the K strongest columns as the slot's candidate list."""
    if K < 1:
        raise ValueError("K must be at least 1")
    res = nnls(A, y, tol=tol, max_iters=max_iters, lipschitz=lipschitz, precision=precision)
    idx = top_k(res.x, K)
    return FragmentList(tuple(int(i) for i in idx), tuple(float(res.x[i]) for i in idx), res.converged, res.iterations)


def write_matrix(path, A) -> None:
    """Row-major float32 with a 16-byte header: magic, rows (u32 LE), cols (u32 LE)."""
    V = np.ascontiguousarray(_as_values(A), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", *V.shape))
        fh.write(V.tobytes())


def read_matrix(path, Es: float | None = None) -> SensingMatrix:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != MAGIC:
        raise ValueError(f"{path}: not a CCSMAT1 matrix file")
    rows, cols = struct.unpack("<II", data[8:16])
    body = data[16:]
    if len(body) != rows * cols * 4:
        raise ValueError(f"{path}: expected {rows * cols * 4} payload bytes, found {len(body)}")
    if cols & (cols - 1) or cols == 0:
        raise ValueError(f"{path}: column count {cols} is not a power of two")
    V = np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(float)
    if Es is None:
        Es = float(np.mean(V**2)) if V.size else 1.0
    return SensingMatrix(V, "imported", Es)

"""Small dense LP core: ``max c'x  s.t.  A x <= b,  x >= 0``.

Two-phase tableau simplex with Bland's rule.  Once the optimal basis is
known, primal values and duals are recomputed directly from the basis
matrix so the duality identities hold to machine accuracy.  ``y`` are the
row marginal values; ``dj`` are the column marginal values
``c_j - y'A_j`` (zero for basic columns).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import LpAnomalyError

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11
MAX_ITER = 50_000


class Status(str, enum.Enum):
    Optimal = "Optimal"
    Infeasible = "Infeasible"
    Unbounded = "Unbounded"


class Degenerate(LpAnomalyError):
    pass


class LpFormatError(LpAnomalyError):
    pass


@dataclass
class LpProblem:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    row_names: list[str] = field(default_factory=list)
    col_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        m, n = self.A.shape
        if self.b.size != m or self.c.size != n:
            raise ValueError(f"inconsistent dimensions: A {self.A.shape}, b {self.b.size}, c {self.c.size}")
        if not self.row_names:
            self.row_names = [f"r{i}" for i in range(m)]
        if not self.col_names:
            self.col_names = [f"x{j}" for j in range(n)]
        if len(self.row_names) != m or len(self.col_names) != n:
            raise ValueError("name lists do not match dimensions")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def with_b(self, i: int, value: float) -> "LpProblem":
        b = self.b.copy()
        b[i] = value
        return replace(self, b=b)

    def with_c(self, j: int, value: float) -> "LpProblem":
        c = self.c.copy()
        c[j] = value
        return replace(self, c=c)


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float | None = None
    y: np.ndarray | None = None
    dj: np.ndarray | None = None
    basic_cols: tuple[int, ...] = ()
    basic_rows: tuple[int, ...] = ()  # rows whose slack is basic
    primal_degenerate: bool = False
    dual_degenerate: bool = False
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.Optimal

    @property
    def degenerate(self) -> bool:
        return self.primal_degenerate or self.dual_degenerate

    def slack(self, p: LpProblem) -> np.ndarray:
        return p.b - p.A @ self.x


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _simplex(T: np.ndarray, basis: list[int], cost: np.ndarray, allowed: np.ndarray) -> tuple[str, int]:
    """Maximize ``cost . z`` on tableau ``T = [B^-1 M | B^-1 rhs]`` with Bland's rule."""
    m = T.shape[0]
    for it in range(MAX_ITER):
        cb = cost[basis]
        red = cost - cb @ T[:, :-1]
        enter = -1
        for j in np.flatnonzero(allowed):
            if red[j] > OPT_TOL:
                enter = int(j)
                break
        if enter < 0:
            return "optimal", it
        col = T[:, enter]
        best, leave = None, -1
        for r in range(m):
            if col[r] > PIVOT_TOL:
                ratio = T[r, -1] / col[r]
                if (
                    best is None
                    or ratio < best - 1e-12
                    or (abs(ratio - best) <= 1e-12 and basis[r] < basis[leave])
                ):
                    best, leave = ratio, r
        if leave < 0:
            return "unbounded", it
        _pivot(T, leave, enter)
        basis[leave] = enter
    raise RuntimeError("simplex iteration limit reached")


def solve(p: LpProblem) -> LpSolution:
    """Solve ``p``; outcome reported through ``status``, never by raising."""
    A, b, c = p.A, p.b, p.c
    m, n = A.shape
    neg = b < 0
    k = int(neg.sum())
    # columns: structurals | slacks | artificials | rhs
    T = np.zeros((m, n + m + k + 1))
    T[:, :n] = A
    T[:, n : n + m] = np.eye(m)
    T[:, -1] = b
    T[neg] *= -1.0
    basis = []
    art = n + m
    for i in range(m):
        if neg[i]:
            T[i, art] = 1.0
            basis.append(art)
            art += 1
        else:
            basis.append(n + i)
    total = n + m + k
    iters = 0
    if k:
        cost1 = np.zeros(total)
        cost1[n + m :] = -1.0
        _, it = _simplex(T, basis, cost1, np.ones(total, dtype=bool))
        iters += it
        if -cost1[basis] @ T[:, -1] > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LpSolution(Status.Infeasible, iterations=iters)
        for r in range(m):
            if basis[r] >= n + m:
                js = [j for j in range(n + m) if abs(T[r, j]) > PIVOT_TOL]
                if not js:
                    continue  # redundant row; cannot happen with slack columns
                _pivot(T, r, js[0])
                basis[r] = js[0]
    cost2 = np.zeros(total)
    cost2[:n] = c
    allowed = np.zeros(total, dtype=bool)
    allowed[: n + m] = True
    status, it = _simplex(T, basis, cost2, allowed)
    iters += it
    if status == "unbounded":
        return LpSolution(Status.Unbounded, iterations=iters)
    return _from_basis(p, basis, iters)


def _snap(v: np.ndarray) -> np.ndarray:
    # rounding residue and negative zeros become exact zeros
    v = np.where(np.abs(v) < 1e-13 * max(1.0, float(np.abs(v).max(initial=0.0))), 0.0, v)
    return v + 0.0


def _from_basis(p: LpProblem, basis: Sequence[int], iters: int) -> LpSolution:
    A, b, c = p.A, p.b, p.c
    m, n = A.shape
    M = np.hstack([A, np.eye(m)])
    cost = np.concatenate([c, np.zeros(m)])
    B = M[:, list(basis)]
    zB = np.linalg.solve(B, b)
    z = np.zeros(n + m)
    z[list(basis)] = zB
    y = np.linalg.solve(B.T, cost[list(basis)])
    red = cost - y @ M
    red[list(basis)] = 0.0
    x = _snap(z[:n])
    y = _snap(y)
    dj = _snap(red[:n].copy())
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    nonbasic = np.setdiff1d(np.arange(n + m), basis)
    return LpSolution(
        Status.Optimal,
        x=x,
        objective=float(c @ x),
        y=y,
        dj=dj,
        basic_cols=tuple(sorted(j for j in basis if j < n)),
        basic_rows=tuple(sorted(j - n for j in basis if j >= n)),
        primal_degenerate=bool(np.any(np.abs(zB) <= FEAS_TOL * scale)),
        dual_degenerate=bool(np.any(np.abs(red[nonbasic]) <= OPT_TOL)),
        iterations=iters,
    )


def marginal_row_value(p: LpProblem, i: int, h: float = 1e-4) -> float:
    """Forward-difference estimate of d objective / d b_i by re-solving."""
    base = solve(p)
    bumped = solve(p.with_b(i, p.b[i] + h))
    if not (base.optimal and bumped.optimal):
        raise Degenerate(f"re-solve status {base.status.value}/{bumped.status.value}")
    return (bumped.objective - base.objective) / h


def incremental_value(cost_components: Sequence[float], marginal: float) -> float:
    """Accumulated unit costs of a material minus its marginal value."""
    return float(sum(cost_components)) - float(marginal)


def column_incremental_values(p: LpProblem, sol: LpSolution) -> np.ndarray:
    """``y'A_j`` for every column, i.e. ``c_j - D_j``."""
    return sol.y @ p.A


def break_even_value(p: LpProblem, j: int, sol: LpSolution | None = None) -> float:
    """Price of column ``j`` at which its marginal value vanishes: ``c_j - D_j``."""
    sol = solve(p) if sol is None else sol
    if not sol.optimal:
        raise Degenerate(f"problem status {sol.status.value}")
    return float(p.c[j] - sol.dj[j])


def verify_break_even(p: LpProblem, j: int, tol: float = 1e-6) -> float:
    """Re-solve at the break-even price and return the resulting ``|D_j|``.

    Raises :class:`Degenerate` when the original solution is degenerate, in
    which case the re-solve may legitimately land on another basis.
    """
    sol = solve(p)
    value = break_even_value(p, j, sol)
    if sol.degenerate:
        raise Degenerate("degenerate optimum; break-even verification skipped")
    again = solve(p.with_c(j, value))
    return float(abs(again.dj[j]))


# -- problem file format ---------------------------------------------------------
#
#   # comment lines start with '#'
#   @rows name1 name2 ...      (optional)
#   @cols name1 name2 ...      (optional)
#   m n
#   c_1 ... c_n
#   a_11 ... a_1n b_1          (m rows)


def read_problem(path: str | Path) -> LpProblem:
    return parse_problem(Path(path).read_text(encoding="utf-8"))


def parse_problem(text: str) -> LpProblem:
    rows, cols, data = [], [], []
    for ln in text.splitlines():
        s = ln.strip()
        if not s or s.startswith("#"):
            continue
        if s.startswith("@rows"):
            rows = s.split()[1:]
        elif s.startswith("@cols"):
            cols = s.split()[1:]
        else:
            data.append(s.split())
    try:
        m, n = (int(t) for t in data[0])
        c = [float(t) for t in data[1]]
        body = [[float(t) for t in r] for r in data[2 : 2 + m]]
    except (IndexError, ValueError) as err:
        raise LpFormatError(f"malformed problem file: {err}") from None
    if len(data) != 2 + m or len(c) != n or any(len(r) != n + 1 for r in body):
        raise LpFormatError("problem file dimensions do not match its contents")
    arr = np.array(body).reshape(m, n + 1)
    return LpProblem(arr[:, :n], arr[:, n], c, rows, cols)


def format_problem(p: LpProblem) -> str:
    m, n = p.shape
    out = [f"@rows {' '.join(p.row_names)}", f"@cols {' '.join(p.col_names)}", f"{m} {n}"]
    out.append(" ".join(repr(float(v)) for v in p.c))
    for i in range(m):
        out.append(" ".join(repr(float(v)) for v in [*p.A[i], p.b[i]]))
    return "\n".join(out) + "\n"


def write_problem(p: LpProblem, path: str | Path) -> None:
    Path(path).write_text(format_problem(p), encoding="utf-8")

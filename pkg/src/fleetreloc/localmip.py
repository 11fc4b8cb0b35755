"""Integer programs for relocation: per-slot local models, the full-horizon
model, an exact branch-and-bound solver and CPLEX-LP export.

A program maximizes

    constant + c @ x + sum_k coef_k * e_k * 1(e_k < threshold_k)

over integer ``0 <= x <= upper`` subject to linear rows, where each
``e_k = const_k + w_k @ x`` has integer weights. Integer weights make the
indicator exact: ``e_k < threshold_k`` iff ``w_k @ x <= cut_k`` with
``cut_k = ceil(threshold_k - const_k) - 1``.

For external solvers the indicator terms are linearized with one binary
``z`` and one continuous ``y = (w @ x) * z`` per term. The big-M constants
come from the interval of ``w @ x`` over the variable bounds.
"""

from __future__ import annotations

import math
import re
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

from .relocation import PredictorPolicy, _as_arrays

LE, EQ, GE = -1, 0, 1
_SENSE_TEXT = {LE: "<=", EQ: "=", GE: ">="}
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


@dataclass
class PiecewiseTerm:
    """``coef * e * 1(e < threshold)`` with ``e = constant + weights @ x[index]``."""

    coef: float
    index: np.ndarray
    weights: np.ndarray
    constant: float
    threshold: float

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if not np.array_equal(w, np.round(w)):
            raise ValueError("piecewise weights must be integers")
        self.weights = w.astype(np.int64)
        self.coef, self.constant, self.threshold = float(self.coef), float(self.constant), float(self.threshold)

    @property
    def cut(self) -> int:
        return math.ceil(self.threshold - self.constant) - 1

    def value(self, x) -> float:
        s = int(self.weights @ np.asarray(x)[self.index])
        return self.coef * (self.constant + s) if s <= self.cut else 0.0

    def interval(self, upper):
        """Range of ``weights @ x`` over ``0 <= x <= upper``."""
        c = self.weights * np.asarray(upper)[self.index]
        return int(np.minimum(c, 0).sum()), int(np.maximum(c, 0).sum())

    def equals(self, other) -> bool:
        return (self.coef == other.coef and self.constant == other.constant and self.threshold == other.threshold
                and np.array_equal(self.index, other.index) and np.array_equal(self.weights, other.weights))


@dataclass
class IntegerProgram:
    names: list
    upper: np.ndarray
    objective: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    row_names: list
    constant: float = 0.0
    piecewise: list = field(default_factory=list)

    @property
    def n_vars(self):
        return len(self.names)

    @property
    def n_rows(self):
        return self.A.shape[0]

    def evaluate(self, x) -> float:
        x = np.asarray(x)
        return float(self.constant + self.objective @ x + sum(p.value(x) for p in self.piecewise))

    def is_feasible(self, x, tol=1e-9) -> bool:
        x = np.asarray(x)
        if x.shape != (self.n_vars,) or (x < 0).any() or (x > self.upper).any():
            return False
        ax = self.A @ x if self.n_rows else np.zeros(0)
        return bool(np.all(np.where(self.sense == LE, ax <= self.rhs + tol,
                                    np.where(self.sense == GE, ax >= self.rhs - tol,
                                             np.abs(ax - self.rhs) <= tol))))

    def validate(self):
        """Check the structural invariants; raises ``ValueError``."""
        n = self.n_vars
        if len(set(self.names)) != n:
            raise ValueError("duplicate variable names")
        if self.upper.shape != (n,) or self.objective.shape != (n,):
            raise ValueError("bounds or objective do not match the variable count")
        if (self.upper < 0).any():
            raise ValueError("negative upper bound")
        if self.A.shape[1] != n:
            raise ValueError("constraint matrix has the wrong number of columns")
        used = np.zeros(n, dtype=bool)
        used[self.objective != 0] = True
        used[np.unique(self.A.indices)] = True
        for p in self.piecewise:
            used[p.index] = True
        if not used.all():
            raise ValueError(f"variable {self.names[int(np.flatnonzero(~used)[0])]} is never referenced")
        return self

    def equals(self, other) -> bool:
        """Structural equality (same variables, rows, coefficients and terms)."""
        if self.names != other.names or self.row_names != other.row_names:
            return False
        if not (np.array_equal(self.upper, other.upper) and np.array_equal(self.objective, other.objective)
                and np.array_equal(self.sense, other.sense) and np.array_equal(self.rhs, other.rhs)):
            return False
        if self.constant != other.constant or len(self.piecewise) != len(other.piecewise):
            return False
        a, b = _canonical(self.A), _canonical(other.A)
        if not all(np.array_equal(u, v) for u, v in zip(a, b)):
            return False
        return all(p.equals(q) for p, q in zip(self.piecewise, other.piecewise))


def _canonical(A):
    c = sp.coo_matrix(A)
    keep = c.data != 0
    r, k, v = c.row[keep], c.col[keep], c.data[keep]
    o = np.lexsort((k, r))
    return np.array(c.shape), r[o], k[o], v[o]


class ProgramBuilder:
    """Incremental, array-based construction of an :class:`IntegerProgram`."""

    def __init__(self):
        self._names, self._upper, self._obj = [], [], []
        self._n = 0
        self._rows, self._cols, self._vals = [], [], []
        self._sense, self._rhs, self._row_names = [], [], []
        self._m = 0
        self.constant = 0.0
        self.piecewise = []

    def add_vars(self, names, upper, objective=0.0) -> np.ndarray:
        names = list(names)
        k = len(names)
        self._names.extend(names)
        self._upper.append(np.broadcast_to(np.asarray(upper, dtype=np.int64), (k,)))
        self._obj.append(np.broadcast_to(np.asarray(objective, dtype=float), (k,)))
        idx = np.arange(self._n, self._n + k)
        self._n += k
        return idx

    def add_rows(self, row, col, val, sense, rhs, names) -> np.ndarray:
        """Add ``len(names)`` rows from COO triplets with row ids local to this call."""
        names = list(names)
        m = len(names)
        self._rows.append(np.asarray(row, dtype=np.int64) + self._m)
        self._cols.append(np.asarray(col, dtype=np.int64))
        self._vals.append(np.asarray(val, dtype=float))
        self._sense.append(np.broadcast_to(np.asarray(sense, dtype=np.int8), (m,)))
        self._rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (m,)))
        self._row_names.extend(names)
        idx = np.arange(self._m, self._m + m)
        self._m += m
        return idx

    def add_row(self, cols, vals, sense, rhs, name):
        cols = np.atleast_1d(cols)
        return self.add_rows(np.zeros(cols.size), cols, np.broadcast_to(vals, cols.shape), sense, rhs, [name])[0]

    def add_piecewise(self, coef, index, weights, constant, threshold):
        self.piecewise.append(PiecewiseTerm(coef, index, weights, constant, threshold))

    def build(self) -> IntegerProgram:
        cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dtype=dt)
        A = sp.csr_matrix((cat(self._vals, float), (cat(self._rows, np.int64), cat(self._cols, np.int64))),
                          shape=(self._m, self._n))
        A.sum_duplicates()
        A.eliminate_zeros()
        return IntegerProgram(list(self._names), cat(self._upper, np.int64), cat(self._obj, float), A,
                              cat(self._sense, np.int8), cat(self._rhs, float), list(self._row_names),
                              float(self.constant), list(self.piecewise))


@dataclass
class IPSolution:
    x: np.ndarray | None
    objective: float
    status: str  # optimal | infeasible | budget
    nodes: int = 0

    def assignment(self, ip) -> dict:
        return {} if self.x is None else dict(zip(ip.names, self.x.tolist()))


class _BudgetExceeded(Exception):
    pass


def solve_exact(ip: IntegerProgram, time_budget=None) -> IPSolution:
    """Depth-first branch and bound in declaration order.

    Each variable's domain is tightened from every row it appears in, using
    the interval of the row's not-yet-assigned variables. The bound on the
    objective relaxes each indicator term to its best value over the interval
    of its expression. Values are tried from the upper bound down. With a
    ``time_budget`` (seconds) the best incumbent is returned with status
    ``budget`` once the clock runs out.
    """
    n, m = ip.n_vars, ip.n_rows
    tol = 1e-9
    A = ip.A.toarray() if m else np.zeros((0, n))
    ub = ip.upper.astype(float)
    lo_c, hi_c = np.minimum(A * ub, 0), np.maximum(A * ub, 0)
    # suffix[r, k]: interval of sum_{j >= k} A[r, j] x_j
    suf_lo = np.concatenate([np.cumsum(lo_c[:, ::-1], axis=1)[:, ::-1], np.zeros((m, 1))], axis=1)
    suf_hi = np.concatenate([np.cumsum(hi_c[:, ::-1], axis=1)[:, ::-1], np.zeros((m, 1))], axis=1)
    obj_suf = np.r_[np.cumsum(np.maximum(ip.objective * ub, 0)[::-1])[::-1], 0.0]
    P = len(ip.piecewise)
    W = np.zeros((P, n), dtype=np.int64)
    for k, p in enumerate(ip.piecewise):
        np.add.at(W[k], p.index, p.weights)
    wl, wh = np.minimum(W * ip.upper, 0), np.maximum(W * ip.upper, 0)
    pw_lo = np.concatenate([np.cumsum(wl[:, ::-1], axis=1)[:, ::-1], np.zeros((P, 1), dtype=np.int64)], axis=1)
    pw_hi = np.concatenate([np.cumsum(wh[:, ::-1], axis=1)[:, ::-1], np.zeros((P, 1), dtype=np.int64)], axis=1)
    coef = np.array([p.coef for p in ip.piecewise])
    const = np.array([p.constant for p in ip.piecewise])
    cut = np.array([p.cut for p in ip.piecewise], dtype=np.int64)
    rows_of = [np.flatnonzero(A[:, j]) for j in range(n)]
    pws_of = [np.flatnonzero(W[:, j]) for j in range(n)]
    sense, rhs = ip.sense, ip.rhs

    def pw_bound(s, k):
        lo, hi = s + pw_lo[:, k], s + pw_hi[:, k]
        best = np.where(hi > cut, 0.0, -np.inf)
        on = lo <= cut
        top = np.maximum(coef * (const + lo), coef * (const + np.minimum(hi, cut)))
        return float(np.where(on, np.maximum(best, top), best).sum())

    def rows_ok(rs, rowsum, k):
        lo, hi = rowsum[rs] + suf_lo[rs, k], rowsum[rs] + suf_hi[rs, k]
        s, b = sense[rs], rhs[rs]
        return bool(np.all(((s == GE) | (lo <= b + tol)) & ((s == LE) | (hi >= b - tol))))

    if m and not rows_ok(np.arange(m), np.zeros(m), 0):
        return IPSolution(None, -math.inf, "infeasible")

    deadline = None if time_budget is None else time.perf_counter() + time_budget
    state = {"best": -math.inf, "x": None, "nodes": 0}
    x = np.zeros(n, dtype=np.int64)
    rowsum = np.zeros(m)
    s_pw = np.zeros(P, dtype=np.int64)

    def dfs(k, lin):
        state["nodes"] += 1
        if deadline is not None and state["nodes"] % 256 == 0 and time.perf_counter() > deadline:
            raise _BudgetExceeded
        if k == n:
            val = ip.constant + lin + float(np.where(s_pw <= cut, coef * (const + s_pw), 0.0).sum())
            if val > state["best"]:
                state["best"], state["x"] = val, x.copy()
            return
        if ip.constant + lin + obj_suf[k] + pw_bound(s_pw, k) <= state["best"]:
            return
        lo, hi = 0.0, ub[k]
        for r in rows_of[k]:
            a = A[r, k]
            rest_lo, rest_hi = rowsum[r] + suf_lo[r, k + 1], rowsum[r] + suf_hi[r, k + 1]
            if sense[r] != GE:  # a x <= rhs - rest_lo
                lim = (rhs[r] - rest_lo) / a
                lo, hi = (lo, min(hi, lim)) if a > 0 else (max(lo, lim), hi)
            if sense[r] != LE:  # a x >= rhs - rest_hi
                lim = (rhs[r] - rest_hi) / a
                lo, hi = (max(lo, lim), hi) if a > 0 else (lo, min(hi, lim))
        lo, hi = math.ceil(lo - tol), math.floor(hi + tol)
        rs, ps = rows_of[k], pws_of[k]
        col, wcol = A[rs, k], W[ps, k]
        c = ip.objective[k]
        for v in range(int(hi), int(lo) - 1, -1):
            x[k] = v
            rowsum[rs] += col * v
            s_pw[ps] += wcol * v
            if rows_ok(rs, rowsum, k + 1):
                dfs(k + 1, lin + c * v)
            rowsum[rs] -= col * v
            s_pw[ps] -= wcol * v
        x[k] = 0

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, n + 200))
    try:
        dfs(0, 0.0)
        status = "optimal" if state["x"] is not None else "infeasible"
    except _BudgetExceeded:
        status = "budget"
    finally:
        sys.setrecursionlimit(limit)
    return IPSolution(state["x"], state["best"], status, state["nodes"])


@dataclass
class LinearizedProgram:
    """Mixed-integer linear form: original variables first, then ``z``/``y`` pairs."""

    names: list
    lower: np.ndarray
    upper: np.ndarray
    integrality: np.ndarray
    objective: np.ndarray
    constant: float
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    row_names: list
    n_original: int


def linearize(ip: IntegerProgram) -> LinearizedProgram:
    """Exact MILP form. For a term with ``s = w @ x`` in ``[lo, hi]``:

    * ``z = 1`` forces ``s <= cut`` and ``z = 0`` forces ``s >= cut + 1``;
    * ``y = s * z`` via the four McCormick rows (exact for binary ``z``);
    * the term contributes ``coef * (const * z + y)`` to the objective.
    """
    n, m = ip.n_vars, ip.n_rows
    P = len(ip.piecewise)
    A = sp.coo_matrix(ip.A)
    lens = np.array([p.index.size for p in ip.piecewise], dtype=np.int64)
    tid = np.repeat(np.arange(P), lens)
    q = np.concatenate([p.index for p in ip.piecewise]) if P else np.zeros(0, dtype=np.int64)
    w = np.concatenate([p.weights for p in ip.piecewise]).astype(float) if P else np.zeros(0)
    wu = w * ip.upper[q]
    lo = np.bincount(tid, np.minimum(wu, 0), minlength=P)
    hi = np.bincount(tid, np.maximum(wu, 0), minlength=P)
    cut = np.array([p.cut for p in ip.piecewise], dtype=float)
    coef = np.array([p.coef for p in ip.piecewise])
    const = np.array([p.constant for p in ip.piecewise])
    z = n + 2 * np.arange(P)
    y = z + 1
    base = m + 6 * np.arange(P)
    ones = np.ones(P)
    # rows per term, each also carrying +-s:
    #   c0: s + (hi - cut) z <= hi          z = 1 -> s <= cut
    #   c1: s + (cut + 1 - lo) z >= cut + 1  z = 0 -> s >= cut + 1
    #   c2: y - lo z >= 0,  c3: y - hi z <= 0
    #   c4: y - s - hi z >= -hi,  c5: y - s - lo z <= -lo   (y = s z)
    s_rows = [(0, 1.0), (1, 1.0), (4, -1.0), (5, -1.0)]
    rows = [A.row] + [base[tid] + c for c, _ in s_rows]
    cols = [A.col] + [q] * 4
    vals = [A.data] + [sg * w for _, sg in s_rows]
    extra = [(0, z, hi - cut), (1, z, cut + 1 - lo), (2, y, ones), (2, z, -lo), (3, y, ones), (3, z, -hi),
             (4, y, ones), (4, z, -hi), (5, y, ones), (5, z, -lo)]
    for c, cc, vv in extra:
        rows.append(base + c)
        cols.append(cc)
        vals.append(vv)
    sense = np.r_[ip.sense, np.tile(np.array([LE, GE, GE, LE, GE, LE], dtype=np.int8), P)]
    rhs = np.r_[ip.rhs, np.column_stack([hi, cut + 1, 0 * ones, 0 * ones, -hi, -lo]).ravel()]
    L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m + 6 * P, n + 2 * P))
    L.sum_duplicates()
    L.eliminate_zeros()
    names = list(ip.names) + [f"pw{k}_{v}" for k in range(P) for v in ("z", "y")]
    row_names = list(ip.row_names) + [f"pw{k}_c{c}" for k in range(P) for c in range(6)]
    lower = np.r_[np.zeros(n), np.column_stack([0 * ones, np.minimum(lo, 0)]).ravel()]
    upper = np.r_[ip.upper.astype(float), np.column_stack([ones, np.maximum(hi, 0)]).ravel()]
    integ = np.r_[np.ones(n), np.tile([1.0, 0.0], P)]
    obj = np.r_[ip.objective.astype(float), np.column_stack([coef * const, coef]).ravel()]
    return LinearizedProgram(names, lower, upper, integ, obj, ip.constant, L, sense.astype(np.int8), rhs,
                             row_names, n)


def solve_highs(ip: IntegerProgram, time_budget=None) -> IPSolution:
    """Solve the linearized program with HiGHS (through SciPy)."""
    if ip.n_vars == 0 and not ip.piecewise:
        ok = ip.is_feasible(np.zeros(0, dtype=np.int64))
        return IPSolution(np.zeros(0, dtype=np.int64) if ok else None, ip.constant if ok else -math.inf,
                          "optimal" if ok else "infeasible")
    lp = linearize(ip)
    lb = np.where(lp.sense == LE, -np.inf, lp.rhs)
    ubr = np.where(lp.sense == GE, np.inf, lp.rhs)
    cons = [LinearConstraint(lp.A, lb, ubr)] if lp.A.shape[0] else []
    opts = {"presolve": True}
    if time_budget is not None:
        opts["time_limit"] = float(time_budget)
    res = milp(-lp.objective, integrality=lp.integrality, bounds=Bounds(lp.lower, lp.upper),
               constraints=cons, options=opts)
    if res.x is None:
        return IPSolution(None, -math.inf, "budget" if res.status == 1 else "infeasible")
    x = np.round(res.x[: lp.n_original]).astype(np.int64)
    status = "optimal" if res.status == 0 else "budget"
    return IPSolution(x, ip.evaluate(x), status)


def solve(ip, solver="highs", time_budget=None) -> IPSolution:
    if solver == "highs":
        return solve_highs(ip, time_budget)
    if solver == "exact":
        return solve_exact(ip, time_budget)
    raise ValueError(f"unknown solver {solver!r}")


def _num(v) -> str:
    return repr(float(v))


def _expr(cols, vals, names) -> str:
    if len(cols) == 0:
        return "0 " + names[0] if names else "0"
    return " ".join(f"{'+' if v >= 0 else '-'} {_num(abs(v))} {names[c]}" for c, v in zip(cols, vals))


def export_lp(ip: IntegerProgram) -> str:
    """CPLEX-LP text of the linearized program.

    Indicator terms are written as their exact MILP form and annotated with
    ``\\ piecewise`` comments so that :func:`parse_lp` recovers the original
    program. Variables appear in the Bounds section in declaration order.
    """
    for nm in ip.names + ip.row_names:
        if not _NAME_RE.match(nm):
            raise ValueError(f"name {nm!r} is not valid in LP format")
    lp = linearize(ip)
    out = ["\\ integer program", "\\ constant " + _num(ip.constant)]
    for k, p in enumerate(ip.piecewise):
        terms = " ".join(f"{int(w)} {ip.names[i]}" for i, w in zip(p.index, p.weights))
        out.append(f"\\ piecewise {k} {_num(p.coef)} {_num(p.threshold)} {_num(p.constant)} : {terms}")
    out.append("Maximize")
    nz = np.flatnonzero(lp.objective)
    obj = _expr(nz, lp.objective[nz], lp.names) if nz.size else ""
    const = f" + {_num(ip.constant)}" if ip.constant >= 0 else f" - {_num(-ip.constant)}"
    out.append(f" obj: {obj}{const}".rstrip())
    out.append("Subject To")
    A = lp.A
    for r in range(A.shape[0]):
        a, b = A.indptr[r], A.indptr[r + 1]
        cols, vals = A.indices[a:b], A.data[a:b]
        lhs = _expr(cols, vals, lp.names) if b > a else f"0 {lp.names[0]}" if lp.names else "0"
        out.append(f" {lp.row_names[r]}: {lhs} {_SENSE_TEXT[int(lp.sense[r])]} {_num(lp.rhs[r])}")
    out.append("Bounds")
    for nm, lo, hi in zip(lp.names, lp.lower, lp.upper):
        out.append(f" {_num(lo)} <= {nm} <= {_num(hi)}")
    gen = lp.names[: lp.n_original]
    if gen:
        out.append("General")
        out.extend(" " + nm for nm in gen)
    zs = lp.names[lp.n_original :: 2]
    if zs:
        out.append("Binary")
        out.extend(" " + nm for nm in zs)
    out.append("End")
    return "\n".join(out) + "\n"


_TERM_RE = re.compile(r"([+-])\s*([0-9.eE+\-]+|inf)\s+([A-Za-z_][A-Za-z0-9_.]*)")


def _parse_terms(text):
    text = text.strip()
    if not text.startswith(("+", "-")):
        text = "+ " + text
    return [(nm, (1 if s == "+" else -1) * float(v)) for s, v, nm in _TERM_RE.findall(text)]


def parse_lp(text: str) -> IntegerProgram:
    """Parse LP text written by :func:`export_lp` back into an IntegerProgram."""
    constant = 0.0
    pw_specs = []
    section = None
    obj_text = []
    rows = []
    bounds = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            body = line[1:].split()
            if body[:1] == ["constant"]:
                constant = float(body[1])
            elif body[:1] == ["piecewise"]:
                k, coef, th, c0 = int(body[1]), float(body[2]), float(body[3]), float(body[4])
                items = body[6:]
                pw_specs.append((k, coef, th, c0, items[1::2], [int(w) for w in items[0::2]]))
            continue
        key = line.lower()
        if key in ("maximize", "subject to", "bounds", "general", "generals", "binary", "end"):
            section = key
            continue
        if section == "maximize":
            obj_text.append(line.split(":", 1)[1] if ":" in line else line)
        elif section == "subject to":
            name, body = line.split(":", 1)
            m = re.match(r"(.*?)(<=|>=|=)\s*(\S+)$", body.strip())
            rows.append((name.strip(), m.group(1), m.group(2), float(m.group(3))))
        elif section == "bounds":
            lo, nm, hi = re.match(r"(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", line).groups()
            bounds.append((nm, float(lo), float(hi)))
    aux = {f"pw{k}_{s}" for k, *_ in pw_specs for s in ("z", "y")}
    names = [nm for nm, _, _ in bounds if nm not in aux]
    pos = {nm: i for i, nm in enumerate(names)}
    upper = np.array([int(hi) for nm, _, hi in bounds if nm not in aux], dtype=np.int64)
    obj = np.zeros(len(names))
    for nm, v in _parse_terms(" ".join(obj_text)):
        if nm in pos:
            obj[pos[nm]] = v
    b = ProgramBuilder()
    b.add_vars(names, upper, obj)
    b.constant = constant
    for name, lhs, sn, r in rows:
        if name.startswith("pw") and "_c" in name and name.split("_c")[0] + "_z" in aux:
            continue
        terms = [(pos[nm], v) for nm, v in _parse_terms(lhs) if v != 0]
        cols = np.array([c for c, _ in terms], dtype=np.int64)
        vals = np.array([v for _, v in terms])
        b.add_rows(np.zeros(cols.size), cols, vals, {"<=": LE, "=": EQ, ">=": GE}[sn], r, [name])
    for k, coef, th, c0, nms, ws in sorted(pw_specs):
        b.add_piecewise(coef, [pos[nm] for nm in nms], ws, c0, th)
    return b.build()


# --- per-slot local programs -------------------------------------------------

def build_relocation_ip(U, T, x_v, x_s, w_tt, r_th) -> IntegerProgram:
    """Relocation program for one slot.

    Variables ``ur_i_j`` for every source ``i`` with an idle car and an idle
    staff member and every ``j != i``, each bounded by ``min(x_v[i], x_s[i])``,
    as is every source's row sum. The objective is

        sum_k U''[k] * 1(U''[k] < r_th) - w_tt * sum u[i, j] T[i, j]

    where ``U''[k] = U[k] - outflow[k] + inflow[k]``.
    """
    U = np.asarray(U, dtype=float)
    N = U.size
    cap = np.minimum(x_v, x_s).astype(np.int64)
    src = np.flatnonzero(cap > 0)
    b = ProgramBuilder()
    ii = np.repeat(src, N - 1)
    jj = np.concatenate([np.r_[0:i, i + 1:N] for i in src]) if src.size else np.zeros(0, dtype=np.int64)
    idx = b.add_vars([f"ur_{i}_{j}" for i, j in zip(ii, jj)], cap[ii], -w_tt * np.asarray(T)[ii, jj])
    if src.size:
        local = np.repeat(np.arange(src.size), N - 1)
        b.add_rows(local, idx, np.ones(idx.size), LE, cap[src], [f"cap_{i}" for i in src])
    # variables touching zone k: its outflows (weight -1) then its inflows (+1)
    zone = np.r_[ii, jj]
    var = np.r_[idx, idx]
    wgt = np.r_[-np.ones(idx.size), np.ones(idx.size)]
    order = np.argsort(zone, kind="stable")
    bounds = np.searchsorted(zone[order], np.arange(N + 1))
    for k in range(N):
        sel = order[bounds[k] : bounds[k + 1]]
        b.add_piecewise(1.0, var[sel], wgt[sel], U[k], r_th)
    return b.build()


def build_transit_ip(U, T, x_s, w_tt) -> IntegerProgram:
    """Scooter-transit program for one slot: variables ``ut_i_j`` for zones
    with idle staff, row sums bounded by the idle staff, objective
    ``sum_j U[j] * inflow[j] - w_tt * sum u[i, j] T[i, j]``."""
    U = np.asarray(U, dtype=float)
    N = U.size
    x_s = np.asarray(x_s, dtype=np.int64)
    src = np.flatnonzero(x_s > 0)
    b = ProgramBuilder()
    ii = np.repeat(src, N - 1)
    jj = np.concatenate([np.r_[0:i, i + 1:N] for i in src]) if src.size else np.zeros(0, dtype=np.int64)
    idx = b.add_vars([f"ut_{i}_{j}" for i, j in zip(ii, jj)], x_s[ii], U[jj] - w_tt * np.asarray(T)[ii, jj])
    if src.size:
        b.add_rows(np.repeat(np.arange(src.size), N - 1), idx, np.ones(idx.size), LE, x_s[src],
                   [f"staff_{i}" for i in src])
    return b.build()


def _decode_moves(ip, x):
    """``(i, j, count)`` for the positive ``u_i_j`` variables of a local program."""
    if x is None:
        return []
    moves = []
    for nm, v in zip(ip.names, x):
        if v > 0:
            _, i, j = nm.split("_")
            moves.append((int(i), int(j), int(v)))
    return moves


class LocalMIPPolicy(PredictorPolicy):
    """Replace the greedy scheduler with per-slot integer programs.

    Shares the predictors and hyperparameters of the ranking policy. The
    transit program uses the imbalance after this slot's relocations.
    ``budget_hits_`` counts programs whose solve ran out of time.
    """

    def __init__(self, w_tt=0.07, w_d=280.32, r_th=-17.35, h=2, availability="last", demand="lambda",
                 solver="highs", time_budget_ms=2000, scooter_factor=1.0, kde_bandwidth=4.0, window=672,
                 strength=1.0):
        self.w_tt = w_tt
        self.w_d = w_d
        self.r_th = r_th
        self.h = h
        self.availability = availability
        self.demand = demand
        self.solver = solver
        self.time_budget_ms = time_budget_ms
        self.scooter_factor = scooter_factor
        self.kde_bandwidth = kde_bandwidth
        self.window = window
        self.strength = strength

    @property
    def name(self):
        return "MIP"

    def start(self, ctx, sc):
        self.ctx_ = ctx
        self._build_predictors(ctx, sc)
        self.U_ = None
        self.budget_hits_ = 0

    def _solve(self, ip):
        sol = solve(ip, self.solver, None if self.time_budget_ms is None else self.time_budget_ms / 1000)
        if sol.status != "optimal":
            self.budget_hits_ += 1
        return sol

    def relocate(self, t, x_v, x_s):
        U = self.current_imbalance(t, x_v)
        ip = build_relocation_ip(U, self.ctx_.travel_by_slot[t], x_v, x_s, self.w_tt, self.r_th)
        moves = _decode_moves(ip, self._solve(ip).x) if ip.n_vars else []
        for i, j, n in moves:
            U[i] -= n
            U[j] += n
        self.U_ = U
        return _triples(moves)

    def transit(self, t, x_v, x_s):
        if not (x_s > 0).any():
            return None
        T = self.ctx_.travel_by_slot[t] * self.scooter_factor
        ip = build_transit_ip(self.U_, T, x_s, self.w_tt)
        return _triples(_decode_moves(ip, self._solve(ip).x))


def _triples(moves):
    if not moves:
        return _as_arrays([])
    arr = np.asarray(moves, dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2]


# --- full-horizon model ------------------------------------------------------

def build_full_model(sc, ctx, include_staff=True) -> IntegerProgram:
    """Deterministic full-information program over the whole horizon.

    Variables, declared slot by slot: ``xv_i_t`` and ``xs_i_t`` (idle cars and
    staff at the start of slot ``t`` after arrivals), ``uv_i_j_t`` (clients
    served, only where demand exists, bounded by it), ``ur_i_j_t`` and
    ``ut_i_j_t`` (relocations and transits, omitted without staff). Rows
    mirror the simulator: capacity of cars and staff per zone and slot, and
    flow balance with arrivals after the slot-rounded travel time; trips that
    end past the horizon leave the system. The objective is client trip hours
    under the horizon-clamped travel times, so it equals the simulator score
    of any feasible decision log.
    """
    N, H = ctx.n_zones, ctx.horizon
    D = sc.dense()
    fleet, staff = int(sc.fleet), int(sc.staff)
    with_staff = include_staff and staff > 0
    dur, teff = ctx.duration, ctx.t_eff
    b = ProgramBuilder()
    xv = np.zeros((N, H), dtype=np.int64)
    xs = np.zeros((N, H), dtype=np.int64)
    dec = []  # (kind, i, j, t, idx)
    off_i, off_j = np.nonzero(~np.eye(N, dtype=bool))
    for t in range(H):
        xv[:, t] = b.add_vars([f"xv_{i}_{t}" for i in range(N)], fleet)
        if with_staff:
            xs[:, t] = b.add_vars([f"xs_{i}_{t}" for i in range(N)], staff)
        di, dj = np.nonzero(D[:, :, t])
        idx = b.add_vars([f"uv_{i}_{j}_{t}" for i, j in zip(di, dj)], D[di, dj, t], teff[t, di, dj] / 60.0)
        dec.append((0, di, dj, np.full(di.size, t), idx))
        if with_staff:
            idx = b.add_vars([f"ur_{i}_{j}_{t}" for i, j in zip(off_i, off_j)], min(fleet, staff))
            dec.append((1, off_i, off_j, np.full(off_i.size, t), idx))
            idx = b.add_vars([f"ut_{i}_{j}_{t}" for i, j in zip(off_i, off_j)], staff)
            dec.append((2, off_i, off_j, np.full(off_i.size, t), idx))
    kind = np.concatenate([np.full(d[1].size, d[0]) for d in dec])
    I = np.concatenate([d[1] for d in dec])
    J = np.concatenate([d[2] for d in dec])
    Tt = np.concatenate([d[3] for d in dec])
    V = np.concatenate([d[4] for d in dec])
    arrive = Tt + dur[Tt, I, J]
    uses_car, uses_staff = kind <= 1, kind >= 1

    def zone_slot_rows(prefix, sel_cap, state, rhs_init):
        # initial state
        b.add_rows(np.arange(N), state[:, 0], np.ones(N), EQ, rhs_init, [f"{prefix}0_{i}" for i in range(N)])
        # capacity: sum of departures at (i, t) - x[i, t] <= 0
        rid = I[sel_cap] * H + Tt[sel_cap]
        b.add_rows(np.r_[rid, np.arange(N * H)], np.r_[V[sel_cap], state.ravel()],
                   np.r_[np.ones(rid.size), -np.ones(N * H)], LE, 0.0,
                   [f"{prefix}cap_{i}_{t}" for i in range(N) for t in range(H)])
        # flow: x[i, t+1] - x[i, t] + departures(i, t) - arrivals(i, t+1) = 0, t = 0..H-2
        M = N * (H - 1)
        rr = lambda i, t: i * (H - 1) + t
        dep = sel_cap & (Tt + 1 < H)
        arr = sel_cap & (arrive < H)
        st_i = np.repeat(np.arange(N), H - 1)
        st_t = np.tile(np.arange(H - 1), N)
        row = np.r_[rr(st_i, st_t), rr(st_i, st_t), rr(I[dep], Tt[dep]), rr(J[arr], arrive[arr] - 1)]
        col = np.r_[state[st_i, st_t + 1], state[st_i, st_t], V[dep], V[arr]]
        val = np.r_[np.ones(M), -np.ones(M), np.ones(dep.sum()), -np.ones(arr.sum())]
        b.add_rows(row, col, val, EQ, 0.0, [f"{prefix}flow_{i}_{t + 1}" for i in range(N) for t in range(H - 1)])

    zone_slot_rows("v", uses_car, xv, sc.x_v0)
    if with_staff:
        zone_slot_rows("s", uses_staff, xs, sc.x_s0)
    return b.build()


def log_to_assignment(ip: IntegerProgram, log, sc, ctx) -> np.ndarray:
    """Map a simulator decision log onto the full model's variables.

    State variables are filled by replaying the flows, so a feasible log
    yields a feasible assignment whose objective equals its score.
    """
    pos = {nm: k for k, nm in enumerate(ip.names)}
    x = np.zeros(ip.n_vars, dtype=np.int64)
    prefix = ("uv", "ur", "ut")
    for k, i, j, t, n in zip(log.kind, log.i, log.j, log.t, log.count):
        x[pos[f"{prefix[k]}_{i}_{j}_{t - 1}"]] += n
    N, H = ctx.n_zones, ctx.horizon
    has_staff = "xs_0_0" in pos
    xv, xs = sc.x_v0.astype(np.int64).copy(), sc.x_s0.astype(np.int64).copy()
    av = np.zeros((H + 1, N), dtype=np.int64)
    ast = np.zeros((H + 1, N), dtype=np.int64)
    for t in range(H):
        xv += av[t]
        xs += ast[t]
        for i in range(N):
            x[pos[f"xv_{i}_{t}"]] = xv[i]
            if has_staff:
                x[pos[f"xs_{i}_{t}"]] = xs[i]
        sel = log.t == t + 1
        for k, i, j, n in zip(log.kind[sel], log.i[sel], log.j[sel], log.count[sel]):
            a = min(t + ctx.duration[t, i, j], H)
            if k <= 1:
                xv[i] -= n
                av[a, j] += n
            if k >= 1:
                xs[i] -= n
                ast[a, j] += n
    return x

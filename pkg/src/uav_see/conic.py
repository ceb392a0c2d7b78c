"""Minimal conic-program builder and solver boundary.

A ConeProgram is a registry of scalar variables plus tagged affine rows,
second-order-cone blocks and exponential-cone triples, with an affine
maximize objective.  solve() lowers the program to sparse standard form
(b - A x in K) and hands it to Clarabel, an exponential-cone-capable
interior-point solver; building a barrier method from scratch is explicitly
out of scope here.

Higher-level atoms provided on top of the raw cones:

* relative entropy            x*ln(x/y) <= t          (one exp cone)
* log-sum-exp                 t >= ln(sum exp(e_i))   (one exp cone per term)
* 3/2-power                   t2 >= coeff * t1^(3/2)  (two rotated SOCs)
* exponential path loss       scale*d^2*exp(a_f*d) <= y, d^2 = |q-c|^2 + H^2

Every row carries a tag so a violated constraint can be reported by name.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

import clarabel


class ConicError(RuntimeError):
    pass


class LinExpr:
    """Sparse affine expression: sum(coeffs[i] * x_i) + const."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs=None, const=0.0):
        self.coeffs = dict(coeffs) if coeffs else {}
        self.const = float(const)

    @staticmethod
    def wrap(other) -> "LinExpr":
        if isinstance(other, LinExpr):
            return other
        return LinExpr(const=float(other))

    def copy(self) -> "LinExpr":
        return LinExpr(self.coeffs, self.const)

    def __add__(self, other):
        other = LinExpr.wrap(other)
        out = self.copy()
        for i, c in other.coeffs.items():
            out.coeffs[i] = out.coeffs.get(i, 0.0) + c
        out.const += other.const
        return out

    __radd__ = __add__

    def __sub__(self, other):
        return self + (LinExpr.wrap(other) * -1.0)

    def __rsub__(self, other):
        return LinExpr.wrap(other) + (self * -1.0)

    def __mul__(self, scalar):
        scalar = float(scalar)
        return LinExpr({i: c * scalar for i, c in self.coeffs.items()},
                       self.const * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.coeffs.items())


@dataclass
class SolveReport:
    """Outcome of one conic solve."""

    status: str                    # optimal | infeasible | unbounded | numerical-failure
    x: np.ndarray | None
    objective: float
    max_residual: float
    iterations: int
    wall_time: float
    certificate_norm: float = 0.0
    raw_status: str = ""
    worst_tag: str = ""

    def value(self, expr) -> float:
        if self.x is None:
            raise ConicError(f"no primal point available (status={self.status})")
        if isinstance(expr, LinExpr):
            return expr.value(self.x)
        return float(self.x[int(expr)])


@dataclass
class _Row:
    expr: LinExpr
    rhs: float
    tag: str


@dataclass
class _Block:
    exprs: list
    tag: str


class ConeProgram:
    """Conic model: variables, affine rows, SOC blocks, exponential triples."""

    def __init__(self, name: str = "program"):
        self.name = name
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._objective = LinExpr()
        self.eq_rows: list[_Row] = []
        self.le_rows: list[_Row] = []
        self.soc_blocks: list[_Block] = []
        self.exp_blocks: list[_Block] = []

    # -- variables --------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self._names)

    def add_var(self, name: str, lb: float = -np.inf, ub: float = np.inf) -> int:
        idx = len(self._names)
        self._names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        return idx

    def add_vars(self, name: str, count: int, lb: float = -np.inf,
                 ub: float = np.inf) -> list[int]:
        return [self.add_var(f"{name}[{i}]", lb, ub) for i in range(count)]

    def var(self, idx: int) -> LinExpr:
        if not (0 <= idx < self.num_vars):
            raise ConicError(f"unregistered variable index {idx}")
        return LinExpr({idx: 1.0})

    def _check(self, expr: LinExpr):
        for i in expr.coeffs:
            if not (0 <= i < self.num_vars):
                raise ConicError(f"unregistered variable index {i}")
        return expr

    # -- objective and rows -------------------------------------------------

    def set_objective(self, expr):
        """Affine objective, maximized."""
        self._objective = self._check(LinExpr.wrap(expr))

    def add_eq(self, expr, rhs: float = 0.0, tag: str = ""):
        self.eq_rows.append(_Row(self._check(LinExpr.wrap(expr)), float(rhs),
                                 tag or f"eq{len(self.eq_rows)}"))

    def add_le(self, expr, rhs: float = 0.0, tag: str = ""):
        """expr <= rhs."""
        self.le_rows.append(_Row(self._check(LinExpr.wrap(expr)), float(rhs),
                                 tag or f"le{len(self.le_rows)}"))

    def add_soc(self, exprs, tag: str = ""):
        """exprs[0] >= || exprs[1:] ||."""
        exprs = [self._check(LinExpr.wrap(e)) for e in exprs]
        if len(exprs) < 2:
            raise ConicError("SOC block needs a head and at least one tail entry")
        self.soc_blocks.append(_Block(exprs, tag or f"soc{len(self.soc_blocks)}"))

    def add_exp(self, a, b, c, tag: str = ""):
        """(a, b, c) in the exponential cone: c >= b*exp(a/b), b > 0 (closure)."""
        exprs = [self._check(LinExpr.wrap(e)) for e in (a, b, c)]
        self.exp_blocks.append(_Block(exprs, tag or f"exp{len(self.exp_blocks)}"))

    # -- derived cones ------------------------------------------------------

    def add_rotated(self, a, b, w_exprs, tag: str = ""):
        """a*b >= sum(w_i^2), a, b >= 0, via one SOC block."""
        a = LinExpr.wrap(a)
        b = LinExpr.wrap(b)
        tail = [a - b] + [LinExpr.wrap(w) * 2.0 for w in w_exprs]
        self.add_soc([a + b] + tail, tag)

    def add_sq_bound(self, t, exprs, tag: str = ""):
        """t >= sum(exprs^2)."""
        self.add_rotated(t, 1.0, exprs, tag)

    def add_hyperbolic(self, e1, e2, const, tag: str = ""):
        """e1*e2 >= const >= 0 with e1, e2 >= 0."""
        if const < 0:
            raise ConicError("hyperbolic bound must be nonnegative")
        self.add_rotated(e1, e2, [np.sqrt(const)], tag)

    # -- atoms ---------------------------------------------------------------

    def add_relative_entropy(self, t, x, y, tag: str = ""):
        """x*ln(x/y) <= t for x, y > 0 (one exponential cone)."""
        self.add_exp(LinExpr.wrap(t) * -1.0, x, y, tag or "rel_entropy")

    def add_lse(self, t, terms, tag: str = ""):
        """t >= ln(sum_i exp(term_i)) via sum exp(term_i - t) <= 1."""
        if not terms:
            raise ConicError("log-sum-exp needs at least one term")
        tag = tag or "lse"
        t = LinExpr.wrap(t)
        zsum = LinExpr()
        for j, term in enumerate(terms):
            z = self.add_var(f"_{tag}_z{j}", lb=0.0)
            self.add_exp(LinExpr.wrap(term) - t, 1.0, self.var(z), f"{tag}/exp{j}")
            zsum = zsum + self.var(z)
        self.add_le(zsum, 1.0, f"{tag}/sum")

    def add_pow32(self, t2, t1, coeff: float, tag: str = "", scale: float = 1.0):
        """t2 >= coeff * t1^(3/2), t1 >= 0, via two rotated SOCs.

        scale should be a typical magnitude of t1; the construction is applied
        to t1/scale so the cone entries stay O(1) regardless of units.
        """
        if coeff <= 0:
            raise ConicError("pow32 coefficient must be positive")
        if scale <= 0:
            raise ConicError("pow32 scale must be positive")
        tag = tag or "pow32"
        t1n = LinExpr.wrap(t1) * (1.0 / scale)
        t2n = LinExpr.wrap(t2) * (1.0 / (coeff * scale ** 1.5))
        u = self.add_var(f"_{tag}_u", lb=0.0)
        # u^2 <= t1n and t1n^2 <= u*t2n  =>  t2n >= t1n^(3/2)
        self.add_rotated(t1n, 1.0, [self.var(u)], f"{tag}/sqrt")
        self.add_rotated(self.var(u), t2n, [t1n], f"{tag}/sq")
        return u

    def add_exp_path_atom(self, y_out, q_exprs, center, altitude: float,
                          absorption: float, scale: float, direction: str = "upper",
                          tag: str = "", dist_sq_scale: float | None = None):
        """Convex restriction scale*d^2*exp(a_f*d) <= y_out, d^2 = |q-c|^2 + H^2.

        Lowered through t1 >= d^2, t2 >= a_f*t1^(3/2) and one relative-entropy
        cone enforcing scale*t1*exp(t2/t1) <= y.  Only the <= ("upper") side is
        convex; the >= side is handled by linearization in the subproblems.
        """
        if direction != "upper":
            raise ConicError("only the upper (epigraph) direction is convex; "
                             "the lower side must be linearized by the caller")
        if scale <= 0 or absorption < 0 or altitude <= 0:
            raise ConicError("need scale > 0, absorption >= 0, altitude > 0")
        tag = tag or "pathloss"
        y = LinExpr.wrap(y_out)
        qx, qy = (LinExpr.wrap(e) for e in q_exprs)
        t1 = self.add_var(f"_{tag}_t1", lb=altitude ** 2)
        self.add_sq_bound(self.var(t1) - altitude ** 2,
                          [qx - center[0], qy - center[1]], f"{tag}/dist")
        if absorption == 0.0:
            self.add_le(self.var(t1) * scale - y, 0.0, f"{tag}/quad")
            return t1, None
        t2 = self.add_var(f"_{tag}_t2", lb=0.0)
        self.add_pow32(self.var(t2), self.var(t1), absorption, f"{tag}/pow",
                       scale=dist_sq_scale or max(1.0, altitude ** 2))
        # scale*t1*exp(t2/t1) <= y  <=>  E_rel(scale*t1, y) <= -scale*t2
        self.add_relative_entropy(self.var(t2) * (-scale), self.var(t1) * scale, y,
                                  f"{tag}/rel")
        return t1, t2

    # -- lowering and solving ------------------------------------------------

    def _standard_form(self):
        nvar = self.num_vars
        rows_a = []   # (value-expr) stacked as b - Ax
        rows_b = []
        tags = []

        def push(expr: LinExpr, offset: float, tag: str):
            rows_b.append(expr.const + offset)
            rows_a.append(expr.coeffs)
            tags.append(tag)

        cones = []
        # zero cone: rhs - expr = 0
        for row in self.eq_rows:
            push(row.expr * -1.0, row.rhs, row.tag)
        if self.eq_rows:
            cones.append(("zero", len(self.eq_rows)))
        # nonnegative: rhs - expr >= 0, plus variable bounds
        n_ineq = 0
        for row in self.le_rows:
            push(row.expr * -1.0, row.rhs, row.tag)
            n_ineq += 1
        for i in range(nvar):
            if np.isfinite(self._lb[i]):
                push(LinExpr({i: 1.0}), -self._lb[i], f"lb/{self._names[i]}")
                n_ineq += 1
            if np.isfinite(self._ub[i]):
                push(LinExpr({i: -1.0}), self._ub[i], f"ub/{self._names[i]}")
                n_ineq += 1
        if n_ineq:
            cones.append(("nonneg", n_ineq))
        for block in self.soc_blocks:
            for e in block.exprs:
                push(e, 0.0, block.tag)
            cones.append(("soc", len(block.exprs)))
        for block in self.exp_blocks:
            for e in block.exprs:
                push(e, 0.0, block.tag)
            cones.append(("exp", 3))

        m = len(rows_b)
        data, ri, ci = [], [], []
        for r, coeffs in enumerate(rows_a):
            for i, c in coeffs.items():
                if c != 0.0:
                    ri.append(r)
                    ci.append(i)
                    data.append(-c)   # s = b - A x must equal expr value
        a_mat = sp.csc_matrix((data, (ri, ci)), shape=(m, nvar))
        b_vec = np.asarray(rows_b, dtype=float)
        q = np.zeros(nvar)
        for i, c in self._objective.coeffs.items():
            q[i] = -c   # clarabel minimizes
        return a_mat, b_vec, q, cones, tags

    def _residuals(self, x: np.ndarray, a_mat, b_vec, cones, tags):
        """Max constraint violation, relative to each block's magnitude (the
        scale-invariant quantity interior-point tolerances control)."""
        s = b_vec - a_mat @ x
        worst = 0.0
        worst_tag = ""
        at = 0
        for kind, dim in cones:
            block = s[at:at + dim]
            bb = b_vec[at:at + dim]
            den = max(1.0,
                      float(np.max(np.abs(block))) if dim else 1.0,
                      float(np.max(np.abs(bb))) if dim else 1.0)
            if kind == "zero":
                viol = np.abs(block)
                j = int(np.argmax(viol)) if dim else 0
                scale = max(1.0, abs(float(bb[j]))) if dim else 1.0
                v = (float(viol[j]) if dim else 0.0) / scale
            elif kind == "nonneg":
                viol = np.maximum(-block, 0.0)
                j = int(np.argmax(viol))
                rowden = np.maximum(1.0, np.abs(bb))
                jr = int(np.argmax(viol / rowden))
                v = float((viol / rowden)[jr])
                j = jr
            elif kind == "soc":
                v = float(max(0.0, np.linalg.norm(block[1:]) - block[0])) / den
                j = 0
            else:  # exp: need c >= b*exp(a/b)
                a, b, c = block
                if b > 1e-300:
                    v = float(max(0.0, b * np.exp(min(a / b, 700.0)) - c)) / den
                else:
                    v = float(max(0.0, -b, (a if a > 0 else 0.0), -c)) / den
                j = 0
            if v > worst:
                worst = v
                worst_tag = tags[at + j]
            at += dim
        return worst, worst_tag

    def solve(self, tol: float = 1e-8, max_iter: int = 200,
              residual_tol: float = 1e-6, verbose: bool = False) -> SolveReport:
        """Lower to standard form and solve with Clarabel."""
        a_mat, b_vec, q, cones, tags = self._standard_form()
        cone_objs = []
        for kind, dim in cones:
            if kind == "zero":
                cone_objs.append(clarabel.ZeroConeT(dim))
            elif kind == "nonneg":
                cone_objs.append(clarabel.NonnegativeConeT(dim))
            elif kind == "soc":
                cone_objs.append(clarabel.SecondOrderConeT(dim))
            else:
                cone_objs.append(clarabel.ExponentialConeT())
        settings = clarabel.DefaultSettings()
        settings.verbose = verbose
        settings.max_iter = max_iter
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
        settings.max_threads = 1
        p_mat = sp.csc_matrix((self.num_vars, self.num_vars))
        t0 = time.perf_counter()
        solver = clarabel.DefaultSolver(p_mat, q, a_mat, b_vec, cone_objs, settings)
        sol = solver.solve()
        wall = time.perf_counter() - t0
        raw = str(sol.status)
        x = np.asarray(sol.x, dtype=float)
        if raw in ("Solved", "AlmostSolved", "InsufficientProgress",
                   "MaxIterations"):
            # verify the iterate ourselves: interior-point stall labels are
            # pessimistic and frequently occur at an already-excellent point
            resid, worst_tag = self._residuals(x, a_mat, b_vec, cones, tags)
            gap = abs(sol.obj_val - sol.obj_val_dual) / max(1.0, abs(sol.obj_val))
            # a stalled-but-feasible point with a small duality gap is usable:
            # the SCA/ratio drivers guard objective monotonicity themselves
            good = resid <= residual_tol and \
                (raw in ("Solved", "AlmostSolved") or gap <= 1e-4)
            status = "optimal" if good else "numerical-failure"
            return SolveReport(status=status, x=x,
                               objective=self._objective.value(x),
                               max_residual=resid, iterations=sol.iterations,
                               wall_time=wall, raw_status=raw, worst_tag=worst_tag)
        if raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return SolveReport(status="infeasible", x=None, objective=np.nan,
                               max_residual=np.inf, iterations=sol.iterations,
                               wall_time=wall, raw_status=raw,
                               certificate_norm=float(np.linalg.norm(sol.z)))
        if raw in ("DualInfeasible", "AlmostDualInfeasible"):
            return SolveReport(status="unbounded", x=None, objective=np.nan,
                               max_residual=np.inf, iterations=sol.iterations,
                               wall_time=wall, raw_status=raw,
                               certificate_norm=float(np.linalg.norm(sol.x)))
        resid, worst_tag = (np.inf, "")
        if x.size == self.num_vars and np.all(np.isfinite(x)):
            resid, worst_tag = self._residuals(x, a_mat, b_vec, cones, tags)
        return SolveReport(status="numerical-failure",
                           x=x if x.size == self.num_vars else None,
                           objective=np.nan, max_residual=resid,
                           iterations=sol.iterations, wall_time=wall,
                           raw_status=raw, worst_tag=worst_tag)

    # -- export ---------------------------------------------------------------

    def dump_standard_form(self) -> str:
        """Plain-text sparse standard form: minimize q'x s.t. b - Ax in K.

        Sections: VARS (idx name lb ub), OBJ (idx coef), CONES (kind dim),
        A (row col value, coordinate triplets), B (row value), TAGS (row tag).
        """
        a_mat, b_vec, q, cones, tags = self._standard_form()
        a_coo = a_mat.tocoo()
        out = io.StringIO()
        out.write(f"# conic program '{self.name}': {self.num_vars} vars, "
                  f"{len(b_vec)} rows\n")
        out.write("VARS\n")
        for i, name in enumerate(self._names):
            out.write(f"{i} {name} {self._lb[i]:.17g} {self._ub[i]:.17g}\n")
        out.write("OBJ-MIN\n")
        for i, v in enumerate(q):
            if v != 0.0:
                out.write(f"{i} {v:.17g}\n")
        out.write("CONES\n")
        for kind, dim in cones:
            out.write(f"{kind} {dim}\n")
        out.write("A\n")
        for r, c, v in zip(a_coo.row, a_coo.col, a_coo.data):
            out.write(f"{r} {c} {v:.17g}\n")
        out.write("B\n")
        for r, v in enumerate(b_vec):
            if v != 0.0:
                out.write(f"{r} {v:.17g}\n")
        out.write("TAGS\n")
        row = 0
        for tag in tags:
            out.write(f"{row} {tag}\n")
            row += 1
        return out.getvalue()

"""Generic MILP representation and a deterministic branch-and-bound solver.

The model is a plain list of variables and sparse linear constraints.  LP
relaxations are solved with scipy's HiGHS simplex; the integer search is a
best-bound branch-and-bound with most-fractional branching, which keeps
results deterministic for a fixed (model, config) pair.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

LE, EQ, GE = "<=", "=", ">="


class ModelError(ValueError):
    """Raised for structurally malformed models or assignments."""


@dataclass(frozen=True)
class Variable:
    name: str
    is_binary: bool = False
    lb: float = 0.0
    ub: float = math.inf
    branch_priority: int = 0  # lower branches first among fractional binaries


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[tuple[int, float], ...]  # (variable index, coefficient)
    relation: str                          # one of LE, EQ, GE
    rhs: float
    name: str = ""


@dataclass
class MilpModel:
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)  # minimize
    objective_offset: float = 0.0
    _names: dict[str, int] = field(default_factory=dict, repr=False)

    def add_var(self, name, *, binary=False, lb=0.0, ub=math.inf,
                branch_priority=0):
        if name in self._names:
            raise ModelError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = 0.0, 1.0
        idx = len(self.variables)
        self.variables.append(Variable(name, binary, lb, ub, branch_priority))
        self._names[name] = idx
        return idx

    def add_constraint(self, coeffs, relation, rhs, name=""):
        if relation not in (LE, EQ, GE):
            raise ModelError(f"unknown relation {relation!r}")
        merged: dict[int, float] = {}
        for idx, c in coeffs:
            if not 0 <= idx < len(self.variables):
                raise ModelError(f"constraint {name!r} references unknown variable index {idx}")
            if c:
                merged[idx] = merged.get(idx, 0.0) + c
        self.constraints.append(
            Constraint(tuple(sorted(merged.items())), relation, float(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, coeffs, offset=0.0):
        merged: dict[int, float] = {}
        for idx, c in coeffs:
            if not 0 <= idx < len(self.variables):
                raise ModelError(f"objective references unknown variable index {idx}")
            if c:
                merged[idx] = merged.get(idx, 0.0) + c
        self.objective = merged
        self.objective_offset = float(offset)

    def index_of(self, name):
        return self._names[name]

    @property
    def binary_indices(self):
        return [i for i, v in enumerate(self.variables) if v.is_binary]

    def objective_value(self, assignment):
        return sum(c * assignment[self.variables[i].name]
                   for i, c in self.objective.items()) + self.objective_offset

    def to_lp_text(self):
        """Human-readable LP-style dump, stable line-for-line."""
        lines = ["Minimize"]
        terms = [f"{c:+g} {self.variables[i].name}" for i, c in sorted(self.objective.items())]
        if self.objective_offset:
            terms.append(f"{self.objective_offset:+g}")
        lines.append("  " + (" ".join(terms) if terms else "0"))
        lines.append("Subject To")
        for k, con in enumerate(self.constraints):
            lhs = " ".join(f"{c:+g} {self.variables[i].name}" for i, c in con.coeffs)
            label = con.name or f"c{k}"
            lines.append(f"  {label}: {lhs or '0'} {con.relation} {con.rhs:g}")
        lines.append("Bounds")
        for v in self.variables:
            lines.append(f"  {v.lb:g} <= {v.name} <= {v.ub:g}")
        lines.append("Binaries")
        lines.append("  " + " ".join(v.name for v in self.variables if v.is_binary))
        return "\n".join(lines) + "\n"


@dataclass
class SolverConfig:
    feas_tol: float = 1e-6
    int_tol: float = 1e-5
    rel_gap: float = 1e-6
    time_limit: float = math.inf
    seed: int = 0
    workers: int = 1
    node_selection: str = "best_bound"  # or "depth_first"
    cutoff: float | None = None  # prune nodes that cannot beat this objective

    def __post_init__(self):
        if min(self.feas_tol, self.int_tol, self.rel_gap) <= 0:
            raise ModelError("tolerances must be positive")
        if self.node_selection not in ("best_bound", "depth_first"):
            raise ModelError(f"unknown node selection {self.node_selection!r}")


@dataclass
class SolveStats:
    wall_time: float = 0.0
    node_count: int = 0
    lp_iterations: int = 0
    best_bound: float = -math.inf


@dataclass
class Solution:
    status: str  # Optimal | Feasible | Infeasible | Unbounded
    assignment: dict[str, float]
    objective: float
    stats: SolveStats
    warm_start_used: bool = False
    diagnostics: list[str] = field(default_factory=list)


def check_assignment(model: MilpModel, assignment, feas_tol=1e-6):
    """Evaluate every constraint at `assignment`; violations are data."""
    values = np.empty(len(model.variables))
    for i, v in enumerate(model.variables):
        if v.name not in assignment:
            raise ModelError(f"assignment missing variable {v.name!r}")
        values[i] = assignment[v.name]
    violations = []
    for i, v in enumerate(model.variables):
        if values[i] < v.lb - feas_tol or values[i] > v.ub + feas_tol:
            violations.append((f"bound[{v.name}]", float(values[i])))
        if v.is_binary and min(abs(values[i]), abs(values[i] - 1.0)) > feas_tol:
            violations.append((f"integrality[{v.name}]", float(values[i])))
    for k, con in enumerate(model.constraints):
        lhs = sum(c * values[i] for i, c in con.coeffs)
        slack = con.rhs - lhs
        bad = ((con.relation == LE and slack < -feas_tol)
               or (con.relation == GE and slack > feas_tol)
               or (con.relation == EQ and abs(slack) > feas_tol))
        if bad:
            violations.append((con.name or f"c{k}", float(slack)))
    return {"feasible": not violations, "violations": violations}


def _matrices(model: MilpModel):
    n = len(model.variables)
    c = np.zeros(n)
    for i, coef in model.objective.items():
        c[i] = coef
    rows_ub, rhs_ub, rows_eq, rhs_eq = [], [], [], []
    for con in model.constraints:
        row = np.zeros(n)
        for i, coef in con.coeffs:
            row[i] = coef
        if con.relation == EQ:
            rows_eq.append(row)
            rhs_eq.append(con.rhs)
        elif con.relation == LE:
            rows_ub.append(row)
            rhs_ub.append(con.rhs)
        else:
            rows_ub.append(-row)
            rhs_ub.append(-con.rhs)
    A_ub = np.array(rows_ub) if rows_ub else None
    b_ub = np.array(rhs_ub) if rows_ub else None
    A_eq = np.array(rows_eq) if rows_eq else None
    b_eq = np.array(rhs_eq) if rows_eq else None
    return c, A_ub, b_ub, A_eq, b_eq


class _LpEngine:
    """Caches the constraint matrices; nodes only vary variable bounds."""

    def __init__(self, model: MilpModel):
        self.model = model
        self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq = _matrices(model)
        self.base_bounds = [(v.lb, v.ub) for v in model.variables]

    def solve(self, bounds):
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub,
                      A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=bounds, method="highs")
        if res.status not in (0, 2, 3):
            # numerically undecided; retry without presolve before giving up
            res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub,
                          A_eq=self.A_eq, b_eq=self.b_eq,
                          bounds=bounds, method="highs",
                          options={"presolve": False})
        return res


def lp_relax(model: MilpModel):
    """Continuous relaxation optimum: (status, assignment, objective, iterations)."""
    engine = _LpEngine(model)
    res = engine.solve(engine.base_bounds)
    nit = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        return "Infeasible", {}, math.nan, nit
    if res.status == 3:
        return "Unbounded", {}, -math.inf, nit
    if res.status != 0:
        raise ModelError(f"LP solve failed: {res.message}")
    assignment = {v.name: float(res.x[i]) for i, v in enumerate(model.variables)}
    return "Optimal", assignment, float(res.fun) + model.objective_offset, nit


def solve(model: MilpModel, config: SolverConfig | None = None, warm_start=None) -> Solution:
    """Branch-and-bound: best-bound node selection, most-fractional branching
    (ties broken by lowest variable index).  Deterministic with one worker.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    stats = SolveStats()
    diagnostics: list[str] = []

    engine = _LpEngine(model)
    bin_idx = model.binary_indices

    incumbent = None
    incumbent_obj = math.inf
    warm_used = False
    if warm_start is not None:
        missing = [v.name for v in model.variables if v.name not in warm_start]
        if missing:
            raise ModelError(f"warm start missing variables: {missing[:5]}")
        chk = check_assignment(model, warm_start, config.feas_tol)
        if chk["feasible"]:
            incumbent = {v.name: float(warm_start[v.name]) for v in model.variables}
            incumbent_obj = model.objective_value(incumbent)
            warm_used = True
        else:
            diagnostics.append(
                f"warm start infeasible ({len(chk['violations'])} violations); ignored")

    if config.cutoff is not None and config.cutoff < incumbent_obj:
        incumbent_obj = float(config.cutoff)

    # Nodes: (lp bound, insertion order, bounds list).  Best-bound = smallest bound.
    root_bounds = list(engine.base_bounds)
    counter = 0
    heap: list[tuple[float, int, list]] = [(-math.inf, counter, root_bounds)]
    best_bound = -math.inf
    timed_out = False
    root_infeasible = False
    root_unbounded = False

    dfs = config.node_selection == "depth_first"
    while heap:
        if time.perf_counter() - t0 > config.time_limit:
            timed_out = True
            break
        if dfs:
            node_bound, _, bounds = heap.pop()
        else:
            node_bound, _, bounds = heapq.heappop(heap)
        if node_bound > incumbent_obj - max(config.rel_gap * max(1.0, abs(incumbent_obj)),
                                            config.feas_tol):
            best_bound = max(best_bound, node_bound)
            continue
        res = engine.solve(bounds)
        stats.node_count += 1
        stats.lp_iterations += int(getattr(res, "nit", 0) or 0)
        if res.status == 2:
            if stats.node_count == 1:
                root_infeasible = True
            continue
        if res.status == 3:
            if stats.node_count == 1:
                root_unbounded = True
                break
            continue
        if res.status != 0:
            # numerically undecided even without presolve: prune conservatively
            diagnostics.append(f"node {stats.node_count}: LP undecided, pruned "
                               f"({res.message})")
            if stats.node_count == 1:
                root_infeasible = True
            continue
        obj = float(res.fun) + model.objective_offset
        if stats.node_count == 1:
            best_bound = obj
        if obj > incumbent_obj - max(config.rel_gap * max(1.0, abs(incumbent_obj)),
                                     config.feas_tol):
            continue
        x = res.x
        # most fractional binary in the lowest (most urgent) priority class
        # that has any fractional variable; ties by lowest index
        frac_var, frac_score, frac_prio = -1, -1.0, None
        for i in bin_idx:
            f = abs(x[i] - round(x[i]))
            if f <= config.int_tol:
                continue
            p = model.variables[i].branch_priority
            if frac_prio is None or p < frac_prio or (p == frac_prio
                                                      and f > frac_score + 1e-12):
                frac_score, frac_var, frac_prio = f, i, p
        if frac_var < 0:
            # integral: new incumbent
            if obj < incumbent_obj - 1e-12:
                incumbent_obj = obj
                incumbent = {v.name: (float(round(x[i])) if v.is_binary else float(x[i]))
                             for i, v in enumerate(model.variables)}
            continue
        lo = list(bounds)
        hi = list(bounds)
        lo[frac_var] = (bounds[frac_var][0], float(math.floor(x[frac_var])))
        hi[frac_var] = (float(math.ceil(x[frac_var])), bounds[frac_var][1])
        for child in ((hi, lo) if dfs else (lo, hi)):
            counter += 1
            if dfs:
                heap.append((obj, counter, child))
            else:
                heapq.heappush(heap, (obj, counter, child))

    stats.wall_time = time.perf_counter() - t0
    if heap:
        best_bound = max(best_bound, min(b for b, _, _ in heap))
    elif incumbent is not None and not timed_out:
        best_bound = incumbent_obj
    stats.best_bound = best_bound

    if root_unbounded:
        return Solution("Unbounded", {}, -math.inf, stats, warm_used, diagnostics)
    if incumbent is None:
        if timed_out:
            return Solution("Feasible", {}, math.inf, stats, warm_used,
                            diagnostics + ["time limit reached without incumbent"])
        if config.cutoff is not None:
            diagnostics.append("no solution better than the cutoff")
        return Solution("Infeasible", {}, math.inf, stats, warm_used, diagnostics)
    status = "Feasible" if timed_out else "Optimal"
    return Solution(status, incumbent, incumbent_obj, stats, warm_used, diagnostics)

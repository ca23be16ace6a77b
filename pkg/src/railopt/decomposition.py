"""Decomposed stage-1 models, schedule reconstruction, oracle and witness.

The stage-1 models solve only the rerouting and reordering sub-problems: the
schedule is kept nominal and conflicts are priced through pairwise delay
variables.  The sub-optimal variant prices each pair in isolation; the
global-optimum variant adds delay propagation between pairs so its (routes,
precedences) reconstruct to the true reference optimum.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace

from . import milp
from .milp import GE, LE, EQ, MilpModel, ModelError, SolverConfig
from .formulation import (TrafficPlan, build_extended_model,
                          build_reference_model, extract_plan, verify_plan)
from .scenario import Scenario


class InfeasibleOrderingError(RuntimeError):
    """A (routes, precedences) combination admits no feasible schedule."""


class OracleSizeError(ValueError):
    pass


@dataclass
class PairDelayVars:
    d: dict = field(default_factory=dict)      # (t, t', tc) -> var index
    delta: dict = field(default_factory=dict)  # t -> var index
    ebs: dict = field(default_factory=dict)    # (t, r, tc) -> 0/1 constant


@dataclass
class StageVars:
    """Variable map of a stage-1 model."""
    x: dict = field(default_factory=dict)
    y: dict = field(default_factory=dict)      # (a, b, tc) -> var; 1 = a first
    pair: PairDelayVars = field(default_factory=PairDelayVars)


@dataclass
class StageOneResult:
    routes: dict                   # t -> route id
    precedences: dict              # (a, b, tc) -> 0/1
    objective: float               # stage objective f_s
    runtime_s: float
    feasible: bool = True

    def to_json(self):
        return json.dumps({
            "routes": self.routes,
            "precedences": [[a, b, tc, v] for (a, b, tc), v in
                            sorted(self.precedences.items())],
            "objective": self.objective,
            "runtime_s": self.runtime_s,
        }, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        prec = {(a, b, tc): int(v) for a, b, tc, v in raw["precedences"]}
        return cls(dict(raw["routes"]), prec, float(raw["objective"]),
                   float(raw["runtime_s"]))


def _ordered_pairs(trains):
    for a in trains:
        for b in trains:
            if a != b:
                yield a, b


def _stage_skeleton(m: MilpModel, sc: Scenario, sv: StageVars):
    """Route choice, delta variables and precedence binaries shared by both
    stage-1 models."""
    for t in sc.trains:
        views = sc.views(t.id)
        for rid in views:
            sv.x[(t.id, rid)] = m.add_var(f"x[{t.id},{rid}]", binary=True, branch_priority=-1)
        m.add_constraint([(sv.x[(t.id, rid)], 1.0) for rid in views], EQ, 1.0,
                         name=f"route_choice[{t.id}]")
        dv = m.add_var(f"delta[{t.id}]", lb=0.0, ub=sc.big_m)
        sv.pair.delta[t.id] = dv
        coeffs = [(dv, 1.0)] + [(sv.x[(t.id, rid)], -view.exit_time)
                                for rid, view in views.items()]
        m.add_constraint(coeffs, EQ, -sc.exit_s(t.id), name=f"delta_def[{t.id}]")
        for rid, view in views.items():
            for tc in view.tcs:
                sv.pair.ebs[(t.id, rid, tc)] = 1 if view.ebs(tc) else 0

    ids = [t.id for t in sc.trains]
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            for tc in sc.shared_tcs(a, b):
                y_ab = m.add_var(f"y[{a},{b},{tc}]", binary=True)
                y_ba = m.add_var(f"y[{b},{a},{tc}]", binary=True)
                sv.y[(a, b, tc)] = y_ab
                sv.y[(b, a, tc)] = y_ba
                m.add_constraint([(y_ab, 1.0), (y_ba, 1.0)], EQ, 1.0,
                                 name=f"y_complete[{a},{b},{tc}]")


def _emit_precedence_rules(m: MilpModel, sc: Scenario, sv: StageVars):
    """Order persistence plus the stage-1-only rules: transitivity and the
    convention that a train not using a tc counts as passing it first."""
    from .formulation import emit_order_persistence
    emit_order_persistence(m, sc, sv.x, sv.y)
    ids = [t.id for t in sc.trains]
    for t, t2 in _ordered_pairs(ids):
        for tc in sc.shared_tcs(t, t2):
            y_tc = sv.y[(t, t2, tc)]
            # transitivity through any third train at the same tc
            for t3 in ids:
                if t3 in (t, t2):
                    continue
                k1, k2 = (t2, t3, tc), (t, t3, tc)
                if k1 not in sv.y or k2 not in sv.y:
                    continue
                m.add_constraint([(y_tc, 1.0), (sv.y[k1], 1.0), (sv.y[k2], -1.0)],
                                 LE, 1.0, name=f"prec_trans_hi[{t},{t2},{t3},{tc}]")
                m.add_constraint([(y_tc, 1.0), (sv.y[k1], 1.0), (sv.y[k2], -1.0)],
                                 GE, 0.0, name=f"prec_trans_lo[{t},{t2},{t3},{tc}]")
            # a train not using tc is reported as passing "first"
            coeffs = [(y_tc, 1.0)]
            coeffs += [(sv.x[(t2, r2)], -1.0) for r2, v2 in sc.views(t2).items()
                       if tc in v2.tcs]
            coeffs += [(sv.x[(t, r2)], 1.0) for r2, v2 in sc.views(t).items()
                       if tc in v2.tcs]
            m.add_constraint(coeffs, GE, 0.0, name=f"prec_use[{t},{t2},{tc}]")


def _ehat_expr(sc, sv, t, tc):
    """Linear expression (coeff list) of the nominal release time of t at tc."""
    return [(sv.x[(t, rid)], view.ehat_r(tc, sc.constants))
            for rid, view in sc.views(t).items() if tc in view.tcs]


def build_suboptimal_model(scenario: Scenario):
    sc = scenario
    M = sc.big_m
    m = MilpModel()
    sv = StageVars()
    _stage_skeleton(m, sc, sv)
    _emit_precedence_rules(m, sc, sv)
    ids = [t.id for t in sc.trains]

    for t, t2 in _ordered_pairs(ids):
        for tc in sc.shared_tcs(t, t2):
            dv = m.add_var(f"d[{t},{t2},{tc}]", lb=0.0, ub=M)
            sv.pair.d[(t, t2, tc)] = dv

    for t, t2 in _ordered_pairs(ids):
        for tc in sc.shared_tcs(t, t2):
            dv = sv.pair.d[(t, t2, tc)]
            y_tc = sv.y[(t, t2, tc)]
            ehat2 = _ehat_expr(sc, sv, t2, tc)
            # pairwise delay lower bound, per own route (already served waits
            # along that route are credited)
            for rid, view in sc.views(t).items():
                if tc not in view.tcs:
                    continue
                served = [(sv.pair.d[(t, t2, p)], 1.0) for p in view.preds(tc)
                          if (t, t2, p) in sv.pair.d]
                coeffs = ([(dv, 1.0), (y_tc, M), (sv.x[(t, rid)], -M)]
                          + served + [(i, -c) for i, c in ehat2])
                m.add_constraint(coeffs, GE,
                                 -M - view.shat_r(tc, sc.constants),
                                 name=f"pair_delay[{t},{t2},{rid},{tc}]")
            # no delay inside the entry block (the wait would fall outside
            # the control area)
            gate = [(sv.x[(t, rid)], M) for rid, view in sc.views(t).items()
                    if tc in view.tcs and view.ebs(tc)]
            m.add_constraint([(dv, 1.0)] + gate, LE, M,
                             name=f"entry_zero[{t},{t2},{tc}]")

    # entry protection: when t' passes first through t's entry block, its
    # delayed release must still precede t's timetabled reservation
    for t, t2 in _ordered_pairs(ids):
        for tc in sc.shared_tcs(t, t2):
            y_tc = sv.y[(t, t2, tc)]
            own = [(sv.x[(t, rid)], view.shat_r(tc, sc.constants))
                   for rid, view in sc.views(t).items() if tc in view.tcs]
            # active only when tc falls in t's entry block on the taken route
            ebs_gate = [(sv.x[(t, rid)], -M) for rid, view in sc.views(t).items()
                        if tc in view.tcs and view.ebs(tc)]
            for rid2, view2 in sc.views(t2).items():
                if tc not in view2.tcs:
                    continue
                ehat2 = view2.ehat_r(tc, sc.constants)
                # delays accumulated by t' before tc
                acc = [(sv.pair.d[(t2, t3, p)], -1.0)
                       for t3 in ids if t3 not in (t, t2)
                       for p in view2.preds(tc)
                       if (t2, t3, p) in sv.pair.d]
                m.add_constraint(
                    own + ebs_gate + acc
                    + [(y_tc, M), (sv.x[(t2, rid2)], -M)],
                    GE, ehat2 - 2 * M, name=f"entry_guard_p[{t},{t2},{rid2},{tc}]")
                # delays picked up by t' in the block following tc
                snext = view2.succ(tc)
                blk = []
                if snext is not None:
                    blk = [(sv.pair.d[(t2, t3, c)], -1.0)
                           for t3 in ids if t3 not in (t, t2)
                           for c in view2.tcs if view2.ref[c] == snext
                           if (t2, t3, c) in sv.pair.d]
                m.add_constraint(
                    own + ebs_gate + blk
                    + [(y_tc, M), (sv.x[(t2, rid2)], -M)],
                    GE, ehat2 - 2 * M, name=f"entry_guard_s[{t},{t2},{rid2},{tc}]")

    obj = []
    for t in sc.trains:
        obj.append((sv.pair.delta[t.id], t.weight))
        for (a, _b, _tc), idx in sv.pair.d.items():
            if a == t.id:
                obj.append((idx, t.weight))
    m.set_objective(obj)
    return m, sv


def _positions(sc, t, tc):
    """Distinct signal tcs at which a conflict of t at tc is resolved
    (the tc preceding the reference of tc's block, per allowed route)."""
    out: dict[str, None] = {}
    for view in sc.views(t).values():
        if tc not in view.tcs:
            continue
        p = view.pred(view.ref[tc])
        if p is not None:
            out[p] = None
    return tuple(out)


def build_global_model(scenario: Scenario):
    sc = scenario
    M = sc.big_m
    m = MilpModel()
    sv = StageVars()
    _stage_skeleton(m, sc, sv)
    _emit_precedence_rules(m, sc, sv)
    ids = [t.id for t in sc.trains]

    # delay variables exist on every tc the train may use, against every
    # train it shares at least one tc with
    opponents = {t: [t2 for t2 in ids if t2 != t and sc.shared_tcs(t, t2)]
                 for t in ids}
    for t in ids:
        for t2 in opponents[t]:
            for tc in sc.tcs_of(t):
                sv.pair.d[(t, t2, tc)] = m.add_var(f"dt[{t},{t2},{tc}]",
                                                   lb=0.0, ub=M)

    for t in ids:
        for t2 in opponents[t]:
            for tc in sc.tcs_of(t):
                dv = sv.pair.d[(t, t2, tc)]
                # nonzero only at signal-terminated tcs of the used route
                sig_gate = [(sv.x[(t, rid)], M)
                            for rid, view in sc.views(t).items()
                            if tc in view.tcs and view.sig[tc]]
                m.add_constraint([(dv, 1.0)] + [(i, -c) for i, c in sig_gate],
                                 LE, 0.0, name=f"sig_zero[{t},{t2},{tc}]")
                # nonzero only when the following block meets the other train
                for rid, view in sc.views(t).items():
                    if tc not in view.tcs:
                        continue
                    snext = view.succ(tc)
                    blk = set()
                    if snext is not None:
                        blk = {c for c in view.tcs
                               if view.bs[c] == view.bs[snext]}
                    meets = [(sv.x[(t2, r2)], -M)
                             for r2, v2 in sc.views(t2).items()
                             if blk & set(v2.tcs)]
                    m.add_constraint(
                        [(dv, 1.0), (sv.x[(t, rid)], M)] + meets, LE, M,
                        name=f"block_meet[{t},{t2},{rid},{tc}]")

    for t, t2 in _ordered_pairs(ids):
        for tc in sc.shared_tcs(t, t2):
            y_tc = sv.y[(t, t2, tc)]
            pos = _positions(sc, t, tc)
            lhs = [(sv.pair.d[(t, t2, p)], 1.0) for p in pos]
            own_use = [(sv.x[(t, rid)], M) for rid, view in sc.views(t).items()
                       if tc in view.tcs]
            # delay only when t' goes first and t actually uses tc
            m.add_constraint(lhs + [(y_tc, M)] + own_use, LE, 2 * M,
                             name=f"first_zero[{t},{t2},{tc}]")
            # propagation-aware lower bound: the waits of t at the signals
            # ahead of tc must absorb the (propagated) conflict window; all
            # previously accumulated waits of both trains are credited,
            # except the resolving terms themselves (the left-hand side)
            pos2 = set(_positions(sc, t2, tc))
            down = {(t3, p) for t3 in ids if t3 != t
                    for view in sc.views(t).values() if tc in view.tcs
                    for p in view.preds(tc) if (t, t3, p) in sv.pair.d
                    and not (t3 == t2 and p in pos)}
            up = {(t3, p) for t3 in ids if t3 != t2
                  for view2 in sc.views(t2).values() if tc in view2.tcs
                  for p in view2.preds(tc) if (t2, t3, p) in sv.pair.d
                  and not (t3 == t and p in pos2)}
            coeffs = list(lhs)
            coeffs += [(sv.pair.d[(t, t3, p)], 1.0) for t3, p in down]
            coeffs += [(sv.pair.d[(t2, t3, p)], -1.0) for t3, p in up]
            coeffs += [(sv.x[(t, rid)], view.shat_r(tc, sc.constants))
                       for rid, view in sc.views(t).items() if tc in view.tcs]
            coeffs += [(sv.x[(t2, rid2)], -(view2.ehat_r(tc, sc.constants) + M))
                       for rid2, view2 in sc.views(t2).items() if tc in view2.tcs]
            coeffs.append((y_tc, M))
            m.add_constraint(coeffs, GE, -M,
                             name=f"prop_bound[{t},{t2},{tc}]")
            # when a third train passes between t' and t, the wait is
            # computed from that train instead
            for t3 in ids:
                if t3 in (t, t2):
                    continue
                k1, k2 = (t2, t3, tc), (t3, t, tc)
                if k1 not in sv.y or k2 not in sv.y:
                    continue
                use2 = [(sv.x[(t2, rid)], M) for rid, view in sc.views(t2).items()
                        if tc in view.tcs]
                use3 = [(sv.x[(t3, rid)], M) for rid, view in sc.views(t3).items()
                        if tc in view.tcs]
                m.add_constraint(
                    lhs + [(sv.y[k1], M), (sv.y[k2], M)] + use2 + use3,
                    LE, 4 * M, name=f"between_zero[{t},{t2},{t3},{tc}]")

    obj = []
    for t in sc.trains:
        obj.append((sv.pair.delta[t.id], t.weight))
        for (a, _b, _tc), idx in sv.pair.d.items():
            if a == t.id:
                obj.append((idx, t.weight))
    m.set_objective(obj)
    return m, sv


def extract_stage_one(scenario: Scenario, sv: StageVars,
                      solution: milp.Solution) -> StageOneResult:
    if not solution.assignment:
        raise ModelError("stage-1 solution carries no assignment")
    val = solution.assignment
    routes = {}
    for (t, rid) in sv.x:
        if val[f"x[{t},{rid}]"] > 0.5:
            routes[t] = rid
    prec = {(a, b, tc): (1 if val[f"y[{a},{b},{tc}]"] > 0.5 else 0)
            for (a, b, tc) in sv.y}
    return StageOneResult(routes, prec, solution.objective,
                          solution.stats.wall_time)


# -- schedule reconstruction ---------------------------------------------------

def reconstruct_schedule(scenario: Scenario, routes: dict,
                         precedences: dict) -> TrafficPlan:
    """Rebuild the earliest feasible schedule implied by fixed routes and
    precedences: local waits appear only at signal-terminated tcs, sized by
    the conflicts in the following block, iterated to a fixpoint."""
    sc = scenario
    c = sc.constants
    views = {t: sc.views(t)[routes[t]] for t in routes}
    order = sorted(routes, key=lambda t: (sc.train(t).init_s, t))
    sig_pos = {t: [tc for tc in views[t].tcs if views[t].sig[tc]] for t in routes}
    d = {t: {tc: 0.0 for tc in sig_pos[t]} for t in routes}

    def served(t, upto_tc):
        return sum(d[t][p] for p in views[t].preds(upto_tc) if p in d[t])

    max_sweeps = 100 * max(1, len(routes))
    for _sweep in range(max_sweeps):
        change = 0.0
        for t in order:
            view = views[t]
            for tc_star in sig_pos[t]:
                snext = view.succ(tc_star)
                if snext is None:
                    continue
                block = [tc for tc in view.tcs if view.bs[tc] == view.bs[snext]]
                cand = 0.0
                for t2 in routes:
                    if t2 == t:
                        continue
                    v2 = views[t2]
                    for tc in block:
                        if tc not in v2.tcs:
                            continue
                        if precedences.get((t2, t, tc)) != 1:
                            continue
                        gap = (v2.ehat_r(tc, c) + served(t2, tc)
                               - view.shat_r(tc, c) - served(t, tc_star))
                        cand = max(cand, gap)
                cand = max(0.0, cand)
                change = max(change, abs(cand - d[t][tc_star]))
                d[t][tc_star] = cand
        total = sum(sum(row.values()) for row in d.values())
        if total > 10.0 * sc.big_m:
            raise InfeasibleOrderingError("delays diverge; precedence cycle")
        if change <= 1e-9:
            break
    else:
        raise InfeasibleOrderingError("no fixpoint within sweep budget")

    entry, delays, exit_delay = {}, {}, {}
    for t in routes:
        view = views[t]
        shift = 0.0
        for tc in view.tcs:
            entry[(t, tc)] = view.entry[tc] + shift
            if tc in d[t]:
                delays[(t, tc)] = d[t][tc]
                shift += d[t][tc]
        exit_time = entry[(t, view.tcs[-1])] + view.ds[view.tcs[-1]]
        exit_delay[t] = max(0.0, exit_time - sc.exit_s(t))
    objective = sum(sc.train(t).weight * exit_delay[t] for t in routes)
    plan = TrafficPlan(dict(routes), entry, delays, exit_delay,
                       dict(precedences), objective)
    chk = verify_plan(sc, plan, with_overlaps=False)
    if not chk["ok"]:
        raise InfeasibleOrderingError(
            "reconstructed schedule violates operations: "
            + "; ".join(chk["violations"][:3]))
    return plan


# -- brute-force oracle --------------------------------------------------------

def _pair_classes(sc, a, b, va, vb):
    """Equivalence classes of shared tcs over which the relative order of a
    and b is tied, replicating the order-persistence rules: unconditional
    along switch-free steps of any allowed route, and across switches when
    both chosen routes pass the coupling tc."""
    shared = list(sc.shared_tcs(a, b))
    parent = {tc: tc for tc in shared}

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    chosen = {a: va, b: vb}
    for t, o in ((a, b), (b, a)):
        vt, vo = chosen[t], chosen[o]
        for view in sc.views(t).values():
            for i in range(1, len(view.tcs)):
                p, tc = view.tcs[i - 1], view.tcs[i]
                if p not in parent or tc not in parent:
                    continue
                if not view.sw_close[tc] and not view.sw_open[p]:
                    tie = True
                elif view.sw_close[tc]:
                    tie = p in vt.tcs and p in vo.tcs
                else:
                    tie = tc in vt.tcs and tc in vo.tcs
                if tie:
                    ru, rv = find(p), find(tc)
                    if ru != rv:
                        parent[ru] = rv
    groups: dict[str, list] = {}
    for tc in shared:
        groups.setdefault(find(tc), []).append(tc)
    return list(groups.values())


def _pinned(model: MilpModel, fixes: dict) -> MilpModel:
    variables = [replace(v, lb=float(fixes[v.name]), ub=float(fixes[v.name]))
                 if v.name in fixes else v for v in model.variables]
    pinned = MilpModel(variables, model.constraints, model.objective,
                       model.objective_offset,
                       {v.name: i for i, v in enumerate(variables)})
    return pinned


def brute_force_oracle(scenario: Scenario, with_overlaps: bool = False,
                       solver_cfg: SolverConfig | None = None) -> TrafficPlan:
    """Independent optimum by exhaustive enumeration of routes and orders."""
    sc = scenario
    ids = [t.id for t in sc.trains]
    combos = 1
    for t in sc.trains:
        combos *= len(t.routes_allowed)
    if len(ids) > 4 or combos > 256:
        raise OracleSizeError("scenario too large for brute-force enumeration")
    build = build_extended_model if with_overlaps else build_reference_model
    model, vm = build(sc)
    cfg = solver_cfg or SolverConfig()

    best = None
    best_obj = math.inf
    route_sets = [list(t.routes_allowed) for t in sc.trains]
    for combo in itertools.product(*route_sets):
        routes = dict(zip(ids, combo))
        views = {t: sc.views(t)[routes[t]] for t in ids}
        # per-pair order classes; a class is either forced (a train skipping
        # a tc counts as passing first) or carries one free order bit
        fixed_y = {}
        free_classes = []
        conflict = False
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                for cls in _pair_classes(sc, a, b, views[a], views[b]):
                    forced = set()
                    for tc in cls:
                        au, bu = tc in views[a].tcs, tc in views[b].tcs
                        if au and not bu:
                            forced.add(0)  # non-user b goes "first"
                        elif bu and not au:
                            forced.add(1)
                    if len(forced) == 2:
                        conflict = True
                        break
                    if forced:
                        v = forced.pop()
                        for tc in cls:
                            fixed_y[(a, b, tc)] = v
                    elif any(tc in views[a].tcs and tc in views[b].tcs
                             for tc in cls):
                        free_classes.append((a, b, cls))
                    else:
                        for tc in cls:
                            fixed_y[(a, b, tc)] = 1  # canonical, unconstrained
                if conflict:
                    break
            if conflict:
                break
        if conflict:
            continue
        for bits in itertools.product((1, 0), repeat=len(free_classes)):
            yvals = {}
            for (a, b, cls), bit in zip(free_classes, bits):
                for tc in cls:
                    yvals[(a, b, tc)] = bit
            yvals.update(fixed_y)
            full = dict(yvals)
            for (a, b, tc), v in yvals.items():
                full[(b, a, tc)] = 1 - v
            if not _orders_consistent(ids, views, full):
                continue
            fixes = {}
            for (t, rid) in vm.x:
                fixes[f"x[{t},{rid}]"] = 1.0 if routes[t] == rid else 0.0
            for (a, b, tc) in vm.y:
                fixes[f"y[{a},{b},{tc}]"] = float(full[(a, b, tc)])
            # the incumbent from earlier combos prunes this one's search
            combo_cfg = (cfg if best is None
                         else replace(cfg, cutoff=best_obj))
            sol = milp.solve(_pinned(model, fixes), combo_cfg)
            if sol.status not in ("Optimal", "Feasible") or not sol.assignment:
                continue
            if sol.objective < best_obj - 1e-9:
                best_obj = sol.objective
                best = extract_plan(sc, vm, sol)
    if best is None:
        raise InfeasibleOrderingError("no feasible plan in enumeration")
    return best


def _orders_consistent(ids, views, yvals):
    """Per-tc tournament must be transitive across trains."""
    for tc in {tc for t in ids for tc in views[t].tcs}:
        users = [t for t in ids if tc in views[t].tcs]
        for a, b, c in itertools.permutations(users, 3):
            if (yvals.get((a, b, tc)) == 1 and yvals.get((b, c, tc)) == 1
                    and yvals.get((a, c, tc)) == 0):
                return False
    return True


# -- sub-optimality witness ----------------------------------------------------

def _plain_objective(sc: Scenario, result: StageOneResult) -> float:
    """f_s evaluated with the plain pairwise delays (nominal reservations,
    per-pair served waits, entry-block suppression)."""
    views = {t: sc.views(t)[result.routes[t]] for t in result.routes}
    total = 0.0
    for t in result.routes:
        view = views[t]
        w = sc.train(t).weight
        delta = view.exit_time - sc.exit_s(t)
        pair_sum = 0.0
        for t2 in result.routes:
            if t2 == t:
                continue
            v2 = views[t2]
            served = 0.0
            for tc in view.tcs:
                if tc not in v2.tcs or view.ebs(tc):
                    continue
                if result.precedences.get((t2, t, tc)) != 1:
                    continue
                gap = (v2.ehat_r(tc, sc.constants)
                       - view.shat_r(tc, sc.constants) - served)
                val = max(0.0, gap)
                served += val
                pair_sum += val
        total += w * (pair_sum + delta)
    return total


def suboptimality_witness(scenario: Scenario, X: StageOneResult,
                          X2: StageOneResult) -> bool:
    """True iff X2 exposes X as sub-optimal: X looks strictly better under
    the plain pairwise delays yet no better once propagation is applied."""
    try:
        plan_x = reconstruct_schedule(scenario, X.routes, X.precedences)
        plan_x2 = reconstruct_schedule(scenario, X2.routes, X2.precedences)
    except InfeasibleOrderingError as e:
        raise ModelError(f"witness candidates must be feasible: {e}") from e
    plain_x = _plain_objective(scenario, X)
    plain_x2 = _plain_objective(scenario, X2)
    return (plain_x2 > plain_x + 1e-9
            and plan_x2.objective <= plan_x.objective + 1e-9)

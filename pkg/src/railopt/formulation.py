"""MILP formulations of the traffic management problem.

Two builders are provided: the reference model (routing + scheduling +
track-circuit reservation disjunctions) and the extended model, which adds
overlap reservations beyond block-limiting signals.  Both return the model
plus a variable map so solutions can be turned back into traffic plans.

All model times carry a constant epoch offset (the formation time) so that
reservation starts are never negative; plans are reported in true time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .milp import GE, LE, EQ, MilpModel, ModelError, Solution
from .scenario import Scenario


@dataclass
class VarMap:
    """Indices of model variables keyed by entity.

    y[(a, b, tc)] = 1 means train ``a`` uses ``tc`` before train ``b``.
    """
    epoch: float
    x: dict = field(default_factory=dict)          # (t, r) -> var
    e: dict = field(default_factory=dict)          # (t, r, tc) -> var
    einf: dict = field(default_factory=dict)       # t -> var
    d: dict = field(default_factory=dict)          # (t, r, tc) -> var (sig tcs)
    D: dict = field(default_factory=dict)          # t -> var
    sR: dict = field(default_factory=dict)         # (t, tc) -> var
    eR: dict = field(default_factory=dict)         # (t, tc) -> var
    y: dict = field(default_factory=dict)          # (a, b, tc) -> var
    eOver: dict = field(default_factory=dict)      # (t, tc) -> var
    z: dict = field(default_factory=dict)          # (t, tc) -> var
    sO: dict = field(default_factory=dict)         # (t, tc) -> var
    eO: dict = field(default_factory=dict)         # (t, tc) -> var
    c: dict = field(default_factory=dict)          # (a, b, tc) -> var (shared)
    yO: dict = field(default_factory=dict)         # (a, b, tc) -> var

    def has_overlaps(self):
        return bool(self.eO)


@dataclass(frozen=True)
class TrafficPlan:
    """A realized plan: one route per train, entry times in true seconds."""
    routes: dict            # t -> route id
    entry: dict             # (t, tc) -> entry time along the chosen route
    delays: dict            # (t, tc) -> localized delay at signal tcs
    exit_delay: dict        # t -> D^t
    precedence: dict        # (a, b, tc) -> 1 if a before b (shared tcs)
    objective: float


def _ordered_pairs(trains):
    for i, a in enumerate(trains):
        for b in trains[i + 1:]:
            yield a.id, b.id


def _base_model(scenario: Scenario):
    """Routing, scheduling and reservation-interval layers shared by both models."""
    sc = scenario
    M = sc.big_m
    ep = sc.constants.formation_s
    m = MilpModel()
    vm = VarMap(epoch=ep)

    for t in sc.trains:
        views = sc.views(t.id)
        for rid in views:
            vm.x[(t.id, rid)] = m.add_var(f"x[{t.id},{rid}]", binary=True, branch_priority=-1)
        m.add_constraint([(vm.x[(t.id, rid)], 1.0) for rid in views], EQ, 1.0,
                         name=f"route_choice[{t.id}]")

        for rid, view in views.items():
            xv = vm.x[(t.id, rid)]
            for i, tc in enumerate(view.tcs):
                ev = m.add_var(f"e[{t.id},{rid},{tc}]", lb=0.0, ub=M)
                vm.e[(t.id, rid, tc)] = ev
                m.add_constraint([(ev, 1.0), (xv, -M)], LE, 0.0,
                                 name=f"e_gate[{t.id},{rid},{tc}]")
                if i == 0:
                    m.add_constraint([(ev, 1.0), (xv, -(t.init_s + ep))], EQ, 0.0,
                                     name=f"e_init[{t.id},{rid}]")
                else:
                    # rigid progression inside a block; a hold is only
                    # possible at the signal closing the previous block
                    prev = view.tcs[i - 1]
                    rel = GE if view.sig[prev] else EQ
                    m.add_constraint(
                        [(ev, 1.0), (vm.e[(t.id, rid, prev)], -1.0), (xv, -view.ds[prev])],
                        rel, 0.0, name=f"e_prop[{t.id},{rid},{tc}]")

        # exit time and total exit delay
        einf = m.add_var(f"einf[{t.id}]", lb=0.0, ub=M)
        vm.einf[t.id] = einf
        coeffs = [(einf, 1.0)]
        for rid, view in views.items():
            last = view.tcs[-1]
            coeffs.append((vm.e[(t.id, rid, last)], -1.0))
            coeffs.append((vm.x[(t.id, rid)], -view.ds[last]))
        m.add_constraint(coeffs, EQ, 0.0, name=f"e_exit[{t.id}]")
        Dv = m.add_var(f"D[{t.id}]", lb=0.0, ub=M)
        vm.D[t.id] = Dv
        m.add_constraint([(Dv, 1.0), (einf, -1.0)], GE, -(sc.exit_s(t.id) + ep),
                         name=f"exit_delay[{t.id}]")

        # localized delays at block-limiting signals (except the final tc,
        # whose exit instant is pinned to its entry plus running time)
        for rid, view in views.items():
            xv = vm.x[(t.id, rid)]
            for i, tc in enumerate(view.tcs[:-1]):
                if not view.sig[tc]:
                    continue
                nxt = view.tcs[i + 1]
                dv = m.add_var(f"d[{t.id},{rid},{tc}]", lb=0.0, ub=M)
                vm.d[(t.id, rid, tc)] = dv
                m.add_constraint(
                    [(dv, 1.0), (vm.e[(t.id, rid, nxt)], -1.0),
                     (vm.e[(t.id, rid, tc)], 1.0), (xv, view.ds[tc])],
                    EQ, 0.0, name=f"d_def[{t.id},{rid},{tc}]")

        # reservation interval of t on each reachable tc
        for tc in sc.tcs_of(t.id):
            sRv = m.add_var(f"sR[{t.id},{tc}]", lb=0.0, ub=2 * M)
            eRv = m.add_var(f"eR[{t.id},{tc}]", lb=0.0, ub=2 * M)
            vm.sR[(t.id, tc)] = sRv
            vm.eR[(t.id, tc)] = eRv
            s_coeffs, e_coeffs = [(sRv, 1.0)], [(eRv, 1.0)]
            for rid, view in views.items():
                if tc not in view.tcs:
                    continue
                refv = vm.e[(t.id, rid, view.ref[tc])]
                xv = vm.x[(t.id, rid)]
                s_coeffs += [(refv, -1.0), (xv, sc.constants.formation_s)]
                e_coeffs += [(refv, -1.0), (xv, -(view.cl[tc] + sc.constants.release_s))]
            m.add_constraint(s_coeffs, EQ, 0.0, name=f"sR_def[{t.id},{tc}]")
            m.add_constraint(e_coeffs, EQ, 0.0, name=f"eR_def[{t.id},{tc}]")

    # capacity: reservation intervals of distinct trains never overlap
    for a, b in _ordered_pairs(list(sc.trains)):
        for tc in sc.shared_tcs(a, b):
            y_ab = m.add_var(f"y[{a},{b},{tc}]", binary=True)
            y_ba = m.add_var(f"y[{b},{a},{tc}]", binary=True)
            vm.y[(a, b, tc)] = y_ab
            vm.y[(b, a, tc)] = y_ba
            m.add_constraint([(y_ab, 1.0), (y_ba, 1.0)], EQ, 1.0,
                             name=f"y_complete[{a},{b},{tc}]")
            # a first (y_ba = 0): b may start reserving only once a released
            m.add_constraint(
                [(vm.sR[(b, tc)], 1.0), (vm.eR[(a, tc)], -1.0), (y_ba, M)],
                GE, 0.0, name=f"res_order[{a},{b},{tc}]")
            m.add_constraint(
                [(vm.sR[(a, tc)], 1.0), (vm.eR[(b, tc)], -1.0), (y_ab, M)],
                GE, 0.0, name=f"res_order[{b},{a},{tc}]")

    emit_order_persistence(m, sc, vm.x, vm.y)
    m.set_objective([(vm.D[t.id], t.weight) for t in sc.trains])
    return m, vm


def emit_order_persistence(m, sc: Scenario, x: dict, y: dict):
    """Order persistence: between consecutive track circuits with no switch,
    the relative order of two trains cannot change; at switches the coupling
    is relaxed exactly when an avoiding route is actually taken."""
    ids = [t.id for t in sc.trains]
    for t, t2 in _ordered_pairs2(ids):
        for tc in sc.shared_tcs(t, t2):
            y_tc = y[(t, t2, tc)]
            for rid, view in sc.views(t).items():
                if tc not in view.tcs:
                    continue
                p = view.pred(tc)
                if p is None or (t, t2, p) not in y:
                    continue
                y_p = y[(t, t2, p)]
                if not view.sw_close[tc] and not view.sw_open[p]:
                    m.add_constraint([(y_tc, 1.0), (y_p, -1.0)], EQ, 0.0,
                                     name=f"prec_hold[{t},{t2},{rid},{tc}]")
                elif view.sw_close[tc]:
                    own = [(x[(t, r2)], -1.0) for r2, v2 in sc.views(t).items()
                           if p in v2.tcs]
                    m.add_constraint([(y_tc, 1.0), (y_p, -1.0)] + own, GE, -1.0,
                                     name=f"prec_close_lo[{t},{t2},{rid},{tc}]")
                    oth = [(x[(t2, r2)], 1.0) for r2, v2 in sc.views(t2).items()
                           if p in v2.tcs]
                    m.add_constraint([(y_tc, 1.0), (y_p, -1.0)] + oth, LE, 1.0,
                                     name=f"prec_close_hi[{t},{t2},{rid},{tc}]")
                else:
                    oth = [(x[(t2, r2)], -1.0) for r2, v2 in sc.views(t2).items()
                           if tc in v2.tcs]
                    m.add_constraint([(y_tc, 1.0), (y_p, -1.0)] + oth, GE, -1.0,
                                     name=f"prec_open_lo[{t},{t2},{rid},{tc}]")
                    own = [(x[(t, r2)], 1.0) for r2, v2 in sc.views(t).items()
                           if tc in v2.tcs]
                    m.add_constraint([(y_tc, 1.0), (y_p, -1.0)] + own, LE, 1.0,
                                     name=f"prec_open_hi[{t},{t2},{rid},{tc}]")


def _ordered_pairs2(ids):
    for a in ids:
        for b in ids:
            if a != b:
                yield a, b


def build_reference_model(scenario: Scenario):
    return _base_model(scenario)


def _overlap_tcs(scenario: Scenario, tid):
    """tcs where the train needs an overlap reservation: block starts with a
    real on-route predecessor, on every allowed route containing the tc."""
    out = []
    for tc in scenario.tcs_of(tid):
        qualifying = None
        for view in scenario.views(tid).values():
            if tc not in view.tcs:
                continue
            i = view.tcs.index(tc)
            q = i > 0 and view.bs[tc] != view.bs[view.tcs[i - 1]]
            qualifying = q if qualifying is None else (qualifying and q)
        if qualifying:
            out.append(tc)
    return out


def build_extended_model(scenario: Scenario):
    sc = scenario
    M = sc.big_m
    m, vm = _base_model(sc)
    over = sc.constants.overlap_s

    overlap_at = {t.id: set(_overlap_tcs(sc, t.id)) for t in sc.trains}

    for t in sc.trains:
        views = sc.views(t.id)
        for tc in sorted(overlap_at[t.id], key=lambda c: list(sc.tcs_of(t.id)).index(c)):
            eOv = m.add_var(f"eOver[{t.id},{tc}]", lb=0.0, ub=2 * M)
            sOv = m.add_var(f"sO[{t.id},{tc}]", lb=0.0, ub=2 * M)
            eo = m.add_var(f"eO[{t.id},{tc}]", lb=0.0, ub=2 * M)
            zv = m.add_var(f"z[{t.id},{tc}]", binary=True)
            vm.eOver[(t.id, tc)] = eOv
            vm.sO[(t.id, tc)] = sOv
            vm.eO[(t.id, tc)] = eo
            vm.z[(t.id, tc)] = zv
            eov_coeffs, so_coeffs = [(eOv, 1.0)], [(sOv, 1.0)]
            for rid, view in views.items():
                if tc not in view.tcs:
                    continue
                prev = view.pred(tc)
                xv = vm.x[(t.id, rid)]
                eov_coeffs += [(vm.e[(t.id, rid, prev)], -1.0), (xv, -over)]
                so_coeffs += [(vm.e[(t.id, rid, view.ref[prev])], -1.0),
                              (xv, sc.constants.formation_s)]
            m.add_constraint(eov_coeffs, EQ, 0.0, name=f"eOver_def[{t.id},{tc}]")
            m.add_constraint(so_coeffs, EQ, 0.0, name=f"sO_def[{t.id},{tc}]")
            # z = 1 when the reservation start exceeds the overlap expiry;
            # eO = min(sR, eOver)
            m.add_constraint([(zv, M), (vm.sR[(t.id, tc)], -1.0), (eOv, 1.0)],
                             GE, 0.0, name=f"z_def[{t.id},{tc}]")
            m.add_constraint([(eo, 1.0), (eOv, -1.0)], LE, 0.0,
                             name=f"eO_le_eOver[{t.id},{tc}]")
            m.add_constraint([(eo, 1.0), (vm.sR[(t.id, tc)], -1.0)], LE, 0.0,
                             name=f"eO_le_sR[{t.id},{tc}]")
            m.add_constraint([(eo, 1.0), (eOv, -1.0), (zv, -M)], GE, -M,
                             name=f"eO_ge_eOver[{t.id},{tc}]")
            m.add_constraint([(eo, 1.0), (vm.sR[(t.id, tc)], -1.0), (zv, M)],
                             GE, 0.0, name=f"eO_ge_sR[{t.id},{tc}]")

    # pairwise separation between overlap and reservation intervals
    for a, b in _ordered_pairs(list(sc.trains)):
        for tc in sc.shared_tcs(a, b):
            a_has = tc in overlap_at[a]
            b_has = tc in overlap_at[b]
            if not (a_has or b_has):
                continue
            y_ab = vm.y[(a, b, tc)]
            y_ba = vm.y[(b, a, tc)]
            cv = m.add_var(f"c[{a},{b},{tc}]", binary=True)
            vm.c[(a, b, tc)] = cv
            vm.c[(b, a, tc)] = cv
            # the conflict indicator selects which interval ends of the two
            # trains must be ordered; both orientations are emitted
            for t1, t2, y12 in ((a, b, y_ab), (b, a, y_ba)):
                if tc not in overlap_at[t2]:
                    continue
                # active when c=1 and t1 goes first: t2's overlap hold must
                # have expired before t1 starts reserving
                m.add_constraint(
                    [(vm.sR[(t1, tc)], 1.0), (vm.eO[(t2, tc)], -1.0),
                     (cv, -M), (y12, -M)], GE, -2 * M,
                    name=f"ov_eO_sR[{t2},{t1},{tc}]")
                # active when c=0 and t1 goes first: t1's reservation must end
                # before t2's overlap hold begins
                m.add_constraint(
                    [(vm.sO[(t2, tc)], 1.0), (vm.eR[(t1, tc)], -1.0),
                     (cv, M), (y12, -M)], GE, -M,
                    name=f"ov_eR_sO[{t1},{t2},{tc}]")
            if a_has and b_has:
                yo_ab = m.add_var(f"yO[{a},{b},{tc}]", binary=True)
                yo_ba = m.add_var(f"yO[{b},{a},{tc}]", binary=True)
                vm.yO[(a, b, tc)] = yo_ab
                vm.yO[(b, a, tc)] = yo_ba
                m.add_constraint([(yo_ab, 1.0), (yo_ba, 1.0)], EQ, 1.0,
                                 name=f"yO_complete[{a},{b},{tc}]")
                m.add_constraint(
                    [(vm.sO[(b, tc)], 1.0), (vm.eO[(a, tc)], -1.0), (yo_ab, M)],
                    GE, 0.0, name=f"ov_order[{a},{b},{tc}]")
                m.add_constraint(
                    [(vm.sO[(a, tc)], 1.0), (vm.eO[(b, tc)], -1.0), (yo_ba, M)],
                    GE, 0.0, name=f"ov_order[{b},{a},{tc}]")
    return m, vm


# -- fixings ------------------------------------------------------------------

def fix_routes(model: MilpModel, vm: VarMap, routes: dict):
    """Pin every train listed in ``routes`` to the given route id."""
    for (t, rid), idx in vm.x.items():
        if t not in routes:
            continue
        val = 1.0 if routes[t] == rid else 0.0
        model.add_constraint([(idx, 1.0)], EQ, val, name=f"fix_x[{t},{rid}]")
    for t, rid in routes.items():
        if (t, rid) not in vm.x:
            raise ModelError(f"cannot fix train {t} to unknown route {rid}")


def fix_precedences(model: MilpModel, vm: VarMap, precedence: dict):
    """Pin y variables; keys are (a, b, tc) with value 1 iff a goes first."""
    for (a, b, tc), val in precedence.items():
        if (a, b, tc) not in vm.y:
            raise ModelError(f"no precedence variable for ({a},{b},{tc})")
        if (b, a, tc) in precedence and precedence[(b, a, tc)] == val:
            raise ModelError(f"inconsistent precedence fixing at ({a},{b},{tc})")
        model.add_constraint([(vm.y[(a, b, tc)], 1.0)], EQ, float(val),
                             name=f"fix_y[{a},{b},{tc}]")


# -- plan extraction and verification -----------------------------------------

def extract_plan(scenario: Scenario, vm: VarMap, solution: Solution) -> TrafficPlan:
    if not solution.assignment:
        raise ModelError("solution carries no assignment")
    val = solution.assignment
    ep = vm.epoch
    routes, entry, delays, exit_delay = {}, {}, {}, {}
    for (t, rid), idx_name in vm.x.items():
        if val[f"x[{t},{rid}]"] > 0.5:
            routes[t] = rid
    for t in routes:
        view = scenario.views(t)[routes[t]]
        for tc in view.tcs:
            entry[(t, tc)] = val[f"e[{t},{routes[t]},{tc}]"] - ep
            key = (t, routes[t], tc)
            if key in vm.d:
                delays[(t, tc)] = val[f"d[{t},{routes[t]},{tc}]"]
        exit_delay[t] = val[f"D[{t}]"]
    precedence = {}
    for (a, b, tc) in vm.y:
        precedence[(a, b, tc)] = 1 if val[f"y[{a},{b},{tc}]"] > 0.5 else 0
    objective = sum(scenario.train(t).weight * exit_delay[t] for t in routes)
    return TrafficPlan(routes, entry, delays, exit_delay, precedence, objective)


def _plan_reservations(scenario: Scenario, plan: TrafficPlan, t):
    """Independent recomputation of [sR, eR) per tc of the chosen route."""
    view = scenario.views(t)[plan.routes[t]]
    c = scenario.constants
    out = {}
    for tc in view.tcs:
        e_ref = plan.entry[(t, view.ref[tc])]
        out[tc] = (e_ref - c.formation_s, e_ref + view.cl[tc] + c.release_s)
    return out


def _plan_overlaps(scenario: Scenario, plan: TrafficPlan, t):
    """Overlap holds [sO, eO) per qualifying tc of the chosen route."""
    view = scenario.views(t)[plan.routes[t]]
    c = scenario.constants
    res = _plan_reservations(scenario, plan, t)
    out = {}
    for tc in _overlap_tcs(scenario, t):
        if tc not in view.tcs:
            continue
        prev = view.pred(tc)
        sO = plan.entry[(t, view.ref[prev])] - c.formation_s
        eO = min(res[tc][0], plan.entry[(t, prev)] + c.overlap_s)
        out[tc] = (sO, eO)
    return out


def verify_plan(scenario: Scenario, plan: TrafficPlan, with_overlaps: bool = False,
                tol: float = 1e-6) -> dict:
    """Check a plan against the operational rules by direct arithmetic,
    independent of any model matrices.  Returns {'ok': bool, 'violations': [...]}."""
    v = []
    sc = scenario
    for t, rid in plan.routes.items():
        train = sc.train(t)
        if rid not in train.routes_allowed:
            v.append(f"{t}: route {rid} not allowed")
            continue
        view = sc.views(t)[rid]
        first = view.tcs[0]
        if abs(plan.entry[(t, first)] - train.init_s) > tol:
            v.append(f"{t}: held before entering the area")
        for i, tc in enumerate(view.tcs[1:], start=1):
            prev = view.tcs[i - 1]
            gap = plan.entry[(t, tc)] - plan.entry[(t, prev)] - view.ds[prev]
            if gap < -tol:
                v.append(f"{t}: runs {prev}->{tc} faster than physics allows")
            if gap > tol and not view.sig[prev]:
                v.append(f"{t}: waits at {prev} which has no signal")
        exit_time = plan.entry[(t, view.tcs[-1])] + view.ds[view.tcs[-1]]
        want = max(0.0, exit_time - sc.exit_s(t))
        if abs(plan.exit_delay[t] - want) > 1e-4:
            v.append(f"{t}: exit delay {plan.exit_delay[t]:.3f} != {want:.3f}")

    trains = [t for t, rid in plan.routes.items()
              if rid in sc.train(t).routes_allowed]
    res = {t: _plan_reservations(sc, plan, t) for t in trains}
    ovl = {t: _plan_overlaps(sc, plan, t) for t in trains} if with_overlaps else {}
    for i, a in enumerate(trains):
        for b in trains[i + 1:]:
            for tc in res[a]:
                if tc not in res[b]:
                    continue
                (s1, e1), (s2, e2) = res[a][tc], res[b][tc]
                if s1 < e2 - tol and s2 < e1 - tol:
                    v.append(f"reservations of {a} and {b} overlap at {tc}")
                key = (a, b, tc) if (a, b, tc) in plan.precedence else None
                if key is not None:
                    first = a if plan.precedence[key] == 1 else b
                    actual = a if e1 <= s2 + tol else b
                    if first != actual:
                        v.append(f"declared order of {a},{b} at {tc} contradicts times")
                if with_overlaps:
                    # whoever reserves first: the second train's overlap hold
                    # must either have expired before the first reserves, or
                    # begin only after the first train's reservation ended
                    first, second = (a, b) if e1 <= s2 + tol else (b, a)
                    if tc in ovl.get(second, {}):
                        so2, eo2 = ovl[second][tc]
                        sr1, er1 = res[first][tc]
                        if eo2 > sr1 + tol and er1 > so2 + tol:
                            v.append(f"overlap hold of {second} at {tc} "
                                     f"conflicts with {first}")
                    if tc in ovl.get(a, {}) and tc in ovl.get(b, {}):
                        (s1o, e1o), (s2o, e2o) = ovl[a][tc], ovl[b][tc]
                        if e2o > s1o + tol and e1o > s2o + tol:
                            v.append(f"overlap holds of {a} and {b} collide at {tc}")

    # precedence relation must be a consistent strict order per tc
    for (a, b, tc), val in plan.precedence.items():
        if plan.precedence.get((b, a, tc), 1 - val) == val:
            v.append(f"precedence of {a},{b} at {tc} is not antisymmetric")
    return {"ok": not v, "violations": v}
